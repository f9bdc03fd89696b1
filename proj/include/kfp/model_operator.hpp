#pragma once

#include "kfp/coefficients.hpp"
#include "kfp/expression.hpp"
#include "kfp/field.hpp"
#include "kfp/group_geometry.hpp"

namespace kfp {

/// L u = sum_{i,j<=q} a_ij d^2_{x_i x_j} u + <Bx, grad u> - d_t u.
/// With a_ij = a_ij(t) this is the model operator with an explicit Gaussian
/// fundamental solution; x-dependent coefficients are accepted only where a
/// kernel is not required (a priori estimate checks).
class ModelOperator {
 public:
  ModelOperator(Geometry geometry, CoefficientPath path) : geometry_(std::move(geometry)), path_(std::move(path)) {
    require(path_.q() == geometry_.q(), ErrorCode::ShapeMismatch,
            "coefficient matrix size must equal q of the block structure");
  }

  [[nodiscard]] const Geometry& geometry() const { return geometry_; }
  [[nodiscard]] const CoefficientPath& path() const { return path_; }
  [[nodiscard]] int N() const { return geometry_.N(); }
  [[nodiscard]] int q() const { return geometry_.q(); }

  /// Drift part Y u = <Bx, grad u> - d_t u as an expression.
  [[nodiscard]] Expr drift_symbolic(const Expr& u) const {
    const Matrix& b = geometry_.drift();
    Expr acc = -u.diff_t();
    for (int j = 0; j < N(); ++j) {
      Expr bx = Expr::constant(0.0);
      for (int k = 0; k < N(); ++k)
        if (b(j, k) != 0.0) bx = bx + b(j, k) * Expr::x(k);
      if (!bx.is_constant() || bx.constant_value() != 0.0) acc = acc + bx * u.diff_x(j);
    }
    return acc;
  }

  /// L u as an expression; requires closed-form or constant coefficients.
  [[nodiscard]] Expr apply_symbolic(const Expr& u) const {
    require(path_.kind() != CoefficientPath::Kind::PiecewiseConstant, ErrorCode::UnsupportedCoefficients,
            "piecewise-constant coefficients have no symbolic form; use apply()");
    Expr acc = drift_symbolic(u);
    for (int i = 0; i < q(); ++i) {
      const Expr di = u.diff_x(i);
      for (int j = 0; j < q(); ++j) acc = acc + coefficient_expr(i, j) * di.diff_x(j);
    }
    return acc;
  }

  /// L u - lambda u as a field, for any coefficient kind.
  [[nodiscard]] ScalarField apply(const Expr& u, double lambda = 0.0, std::optional<Box> support = std::nullopt) const {
    const Expr y = drift_symbolic(u);
    std::vector<Expr> second;
    for (int i = 0; i < q(); ++i) {
      const Expr di = u.diff_x(i);
      for (int j = 0; j < q(); ++j) second.push_back(di.diff_x(j));
    }
    const CoefficientPath path = path_;
    const int nq = q();
    const int n = N();
    return {[=](const double* x, double t) {
              const Matrix a = path.at(Eigen::Map<const Vector>(x, n), t);
              double acc = y(x, t) - lambda * u(x, t);
              for (int i = 0; i < nq; ++i)
                for (int j = 0; j < nq; ++j) acc += a(i, j) * second[static_cast<std::size_t>(i * nq + j)](x, t);
              return acc;
            },
            std::move(support)};
  }

 private:
  [[nodiscard]] Expr coefficient_expr(int i, int j) const {
    if (path_.kind() == CoefficientPath::Kind::ClosedForm)
      return path_.entries()[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    return Expr::constant(path_.matrices().front()(i, j));
  }

  Geometry geometry_;
  CoefficientPath path_;
};

}  // namespace kfp
