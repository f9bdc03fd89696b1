#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "kfp/error.hpp"
#include "kfp/expression.hpp"
#include "kfp/linalg.hpp"

namespace kfp {

/// Diffusion matrix A_0 of the operator: sum a_ij d^2_{x_i x_j} acts on the
/// first q space variables. Every value must be symmetric with spectrum in
/// [nu, 1/nu].
class CoefficientPath {
 public:
  enum class Kind { ConstantAlpha, ConstantMatrix, PiecewiseConstant, ClosedForm };

  static CoefficientPath constant_alpha(int q, double alpha, double nu) {
    CoefficientPath p(Kind::ConstantAlpha, q, nu);
    p.alpha_ = alpha;
    p.matrices_ = {alpha * Matrix::Identity(q, q)};
    p.validate_constant_pieces();
    return p;
  }

  static CoefficientPath constant_matrix(const Matrix& a0, double nu) {
    CoefficientPath p(Kind::ConstantMatrix, static_cast<int>(a0.rows()), nu);
    p.matrices_ = {a0};
    p.validate_constant_pieces();
    return p;
  }

  /// A_0(t) = matrices[k] on [breakpoints[k-1], breakpoints[k]) with the first and
  /// last pieces extending to -inf / +inf.
  static CoefficientPath piecewise_constant(std::vector<double> breakpoints, std::vector<Matrix> matrices,
                                            double nu) {
    require(!matrices.empty(), ErrorCode::SpecInvalid, "piecewise path needs at least one matrix");
    require(matrices.size() == breakpoints.size() + 1, ErrorCode::SpecInvalid,
            "piecewise path needs one more matrix than breakpoints");
    require(std::is_sorted(breakpoints.begin(), breakpoints.end()) &&
                std::adjacent_find(breakpoints.begin(), breakpoints.end()) == breakpoints.end(),
            ErrorCode::SpecInvalid, "breakpoints must be strictly increasing");
    CoefficientPath p(Kind::PiecewiseConstant, static_cast<int>(matrices.front().rows()), nu);
    p.breakpoints_ = std::move(breakpoints);
    p.matrices_ = std::move(matrices);
    p.validate_constant_pieces();
    return p;
  }

  /// Entries given as expressions in (x, t); symmetric by construction
  /// (only i <= j entries are read).
  static CoefficientPath closed_form(std::vector<std::vector<Expr>> entries, double nu) {
    const int q = static_cast<int>(entries.size());
    require(q >= 1, ErrorCode::SpecInvalid, "closed-form coefficients need at least one row");
    for (const auto& row : entries)
      require(static_cast<int>(row.size()) == q, ErrorCode::ShapeMismatch, "coefficient matrix must be square");
    CoefficientPath p(Kind::ClosedForm, q, nu);
    for (int i = 0; i < q; ++i)
      for (int j = 0; j < i; ++j) entries[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = entries[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
    p.entries_ = std::move(entries);
    for (const auto& row : p.entries_)
      for (const auto& e : row) p.x_dependent_ = p.x_dependent_ || e.depends_on_x();
    // Coarse ellipticity screen along the time axis at x = 0.
    const Vector zero = Vector::Zero(64);
    for (int k = 0; k <= 400; ++k) p.check_value(p.at(zero, -10.0 + 0.05 * k), "closed-form sample");
    return p;
  }

  [[nodiscard]] Kind kind() const { return kind_; }
  [[nodiscard]] int q() const { return q_; }
  [[nodiscard]] double nu() const { return nu_; }
  [[nodiscard]] double alpha() const { return alpha_; }
  [[nodiscard]] bool depends_on_x() const { return x_dependent_; }
  [[nodiscard]] bool is_constant() const {
    return kind_ == Kind::ConstantAlpha || kind_ == Kind::ConstantMatrix ||
           (kind_ == Kind::ClosedForm && all_entries_constant());
  }
  [[nodiscard]] const std::vector<double>& breakpoints() const { return breakpoints_; }
  [[nodiscard]] const std::vector<Matrix>& matrices() const { return matrices_; }
  [[nodiscard]] const std::vector<std::vector<Expr>>& entries() const { return entries_; }

  /// A_0(x, t); `x` is ignored unless the path is x-dependent.
  [[nodiscard]] Matrix at(const Vector& x, double t) const {
    if (kind_ != Kind::ClosedForm) return matrices_[piece_index(t)];
    Matrix a(q_, q_);
    for (int i = 0; i < q_; ++i)
      for (int j = 0; j < q_; ++j) a(i, j) = entries_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)](x.data(), t);
    return a;
  }

  [[nodiscard]] Matrix at(double t) const {
    require(!x_dependent_, ErrorCode::UnsupportedCoefficients,
            "coefficients depend on x; the model operator needs a_ij(t)");
    static const Vector zero = Vector::Zero(64);
    return at(zero, t);
  }

  [[nodiscard]] std::size_t piece_index(double t) const {
    return static_cast<std::size_t>(std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t) -
                                    breakpoints_.begin());
  }

  /// Throws EllipticityViolated if `a` is not symmetric with spectrum in [nu, 1/nu].
  void check_value(const Matrix& a, const std::string& where) const {
    require(is_symmetric(a, 1e-12), ErrorCode::EllipticityViolated, where + ": matrix not symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(a);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    const double slack = 1e-12 * std::max(1.0, 1.0 / nu_);
    require(lo >= nu_ - slack && hi <= 1.0 / nu_ + slack, ErrorCode::EllipticityViolated,
            where + ": eigenvalues [" + std::to_string(lo) + ", " + std::to_string(hi) +
                "] outside [nu, 1/nu] with nu = " + std::to_string(nu_));
  }

 private:
  CoefficientPath(Kind kind, int q, double nu) : kind_(kind), q_(q), nu_(nu) {
    require(nu > 0.0 && nu <= 1.0, ErrorCode::SpecInvalid, "ellipticity constant must lie in (0, 1]");
  }

  void validate_constant_pieces() const {
    for (std::size_t k = 0; k < matrices_.size(); ++k) {
      require(matrices_[k].rows() == q_ && matrices_[k].cols() == q_, ErrorCode::ShapeMismatch,
              "coefficient matrices must all be q x q");
      check_value(matrices_[k], "piece " + std::to_string(k));
    }
  }

  [[nodiscard]] bool all_entries_constant() const {
    for (const auto& row : entries_)
      for (const auto& e : row)
        if (!e.is_constant()) return false;
    return true;
  }

  Kind kind_;
  int q_;
  double nu_;
  double alpha_ = 0.0;
  bool x_dependent_ = false;
  std::vector<double> breakpoints_;
  std::vector<Matrix> matrices_;
  std::vector<std::vector<Expr>> entries_;
};

}  // namespace kfp
