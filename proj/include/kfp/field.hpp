#pragma once

#include <functional>
#include <optional>
#include <utility>

#include "kfp/expression.hpp"
#include "kfp/group_geometry.hpp"

namespace kfp {

/// Scalar function of (x, t) with an optional declared support box; the
/// integral operators need the support to bound their time integrals.
struct ScalarField {
  std::function<double(const double* x, double t)> fn;
  std::optional<Box> support;

  [[nodiscard]] double operator()(const double* x, double t) const { return fn(x, t); }
  [[nodiscard]] double operator()(const Vector& x, double t) const { return fn(x.data(), t); }
  [[nodiscard]] double operator()(const Point& p) const { return fn(p.x.data(), p.t); }

  static ScalarField from_expr(const Expr& e, std::optional<Box> support = std::nullopt) {
    return {[e](const double* x, double t) { return e(x, t); }, std::move(support)};
  }

  static ScalarField zero(std::optional<Box> support = std::nullopt) {
    return {[](const double*, double) { return 0.0; }, std::move(support)};
  }

  [[nodiscard]] ScalarField scaled(double a) const {
    auto f = fn;
    return {[f, a](const double* x, double t) { return a * f(x, t); }, support};
  }
};

inline ScalarField linear_combination(double a, const ScalarField& f, double b, const ScalarField& g) {
  std::optional<Box> support;
  if (f.support && g.support) {
    Box s = *f.support;
    s.lo = s.lo.cwiseMin(g.support->lo);
    s.hi = s.hi.cwiseMax(g.support->hi);
    support = s;
  }
  auto ff = f.fn;
  auto gg = g.fn;
  return {[=](const double* x, double t) { return a * ff(x, t) + b * gg(x, t); }, support};
}

}  // namespace kfp
