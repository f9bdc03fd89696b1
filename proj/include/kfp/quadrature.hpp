#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <numbers>
#include <vector>

#include "kfp/error.hpp"
#include "kfp/linalg.hpp"

namespace kfp {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  [[nodiscard]] std::size_t size() const { return nodes.size(); }
};

namespace detail {

inline QuadratureRule compute_gauss_legendre(int n) {
  QuadratureRule rule;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      const double pn = n == 1 ? x : p1;
      const double pnm1 = n == 1 ? 1.0 : p0;
      dp = n * (x * pn - pnm1) / (x * x - 1.0);
      const double dx = pn / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    const auto a = static_cast<std::size_t>(i);
    const auto b = static_cast<std::size_t>(n - 1 - i);
    rule.nodes[a] = -x;
    rule.nodes[b] = x;
    rule.weights[a] = w;
    rule.weights[b] = w;
  }
  if (n % 2 == 1) rule.nodes[static_cast<std::size_t>(n / 2)] = 0.0;
  return rule;
}

}  // namespace detail

/// n-point Gauss-Legendre rule on [-1, 1]; rules are cached per n.
inline const QuadratureRule& gauss_legendre(int n) {
  require(n >= 1, ErrorCode::InvalidArgument, "quadrature order must be positive");
  static std::mutex mutex;
  static std::map<int, QuadratureRule> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, detail::compute_gauss_legendre(n)).first;
  return it->second;
}

/// Rule on [a, b] made of `panels` equal panels of an n-point Gauss-Legendre rule.
inline QuadratureRule composite_gauss_legendre(double a, double b, int n, int panels = 1) {
  const QuadratureRule& base = gauss_legendre(n);
  QuadratureRule out;
  const double h = (b - a) / panels;
  for (int p = 0; p < panels; ++p) {
    const double lo = a + p * h;
    for (std::size_t k = 0; k < base.size(); ++k) {
      out.nodes.push_back(lo + 0.5 * h * (base.nodes[k] + 1.0));
      out.weights.push_back(0.5 * h * base.weights[k]);
    }
  }
  return out;
}

inline void append_panel(QuadratureRule& rule, double a, double b, int n) {
  const QuadratureRule& base = gauss_legendre(n);
  for (std::size_t k = 0; k < base.size(); ++k) {
    rule.nodes.push_back(a + 0.5 * (b - a) * (base.nodes[k] + 1.0));
    rule.weights.push_back(0.5 * (b - a) * base.weights[k]);
  }
}

/// Rule on [0, length] whose panels shrink geometrically toward 0 (ratio 1/2
/// down to `finest`); integrable endpoint singularities at 0 such as
/// tau^{-1/2} are resolved by the grading. Extra breakpoints are honored.
inline QuadratureRule graded_toward_zero(double length, double finest, int n,
                                         std::vector<double> breakpoints = {}) {
  std::vector<double> cuts{0.0};
  double c = finest;
  while (c < length) {
    cuts.push_back(c);
    c *= 2.0;
  }
  cuts.push_back(length);
  for (double b : breakpoints)
    if (b > 0.0 && b < length) cuts.push_back(b);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end(),
                         [&](double a, double b) { return std::abs(a - b) <= 1e-14 * length; }),
             cuts.end());
  QuadratureRule rule;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) append_panel(rule, cuts[k], cuts[k + 1], n);
  return rule;
}

/// Adaptive Gauss-Legendre for matrix-valued integrands: each panel is
/// accepted when the n-point and 2n-point rules agree to `tol` (absolute,
/// relative to the running magnitude); otherwise it is bisected.
inline Matrix adaptive_gauss_legendre(const std::function<Matrix(double)>& f, double a, double b,
                                      double tol = 1e-12, int n = 10, int max_depth = 40) {
  const QuadratureRule& lo_rule = gauss_legendre(n);
  const QuadratureRule& hi_rule = gauss_legendre(2 * n);
  auto apply = [&](const QuadratureRule& r, double lo, double hi) {
    Matrix acc;
    for (std::size_t k = 0; k < r.size(); ++k) {
      const Matrix v = f(lo + 0.5 * (hi - lo) * (r.nodes[k] + 1.0)) * (0.5 * (hi - lo) * r.weights[k]);
      if (k == 0)
        acc = v;
      else
        acc += v;
    }
    return acc;
  };
  std::function<Matrix(double, double, int, double)> recurse =
      [&](double lo, double hi, int depth, double scale) -> Matrix {
    const Matrix coarse = apply(lo_rule, lo, hi);
    const Matrix fine = apply(hi_rule, lo, hi);
    const double magnitude = std::max({scale, fine.cwiseAbs().maxCoeff(), 1e-300});
    if (max_abs_diff(coarse, fine) <= tol * magnitude) return fine;
    require(depth < max_depth, ErrorCode::QuadratureNotConverged,
            "adaptive quadrature did not converge");
    const double mid = 0.5 * (lo + hi);
    const Matrix left = recurse(lo, mid, depth + 1, magnitude);
    return left + recurse(mid, hi, depth + 1, magnitude);
  };
  return recurse(a, b, 0, 0.0);
}

}  // namespace kfp
