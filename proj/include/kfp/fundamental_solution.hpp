#pragma once

// Explicit Gaussian fundamental solution of the model operator with
// coefficients a_ij(t):
//   Gamma(x,t;y,s) = (4 pi)^{-N/2} det C(t,s)^{-1/2} exp(-<C^{-1} w, w> / 4),
//   w = x - E(t - s) y,  C(t,s) = int_s^t E(t-r) diag(A_0(r), 0) E(t-r)^T dr.

#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <vector>

#include "kfp/model_operator.hpp"
#include "kfp/quadrature.hpp"

namespace kfp {

enum class CovarianceMethod { Auto, ExactPiecewise, Quadrature, HomogeneousClosedForm };

inline const char* to_string(CovarianceMethod m) {
  switch (m) {
    case CovarianceMethod::Auto: return "auto";
    case CovarianceMethod::ExactPiecewise: return "exact_piecewise";
    case CovarianceMethod::Quadrature: return "quadrature";
    case CovarianceMethod::HomogeneousClosedForm: return "homogeneous_closed_form";
  }
  return "?";
}

struct Covariance {
  Matrix C;
  double t = 0.0;
  double s = 0.0;
  CovarianceMethod method = CovarianceMethod::ExactPiecewise;
};

namespace detail {

inline Matrix embed_diffusion(const Matrix& a0, int n) {
  Matrix a = Matrix::Zero(n, n);
  a.topLeftCorner(a0.rows(), a0.cols()) = a0;
  return a;
}

// int_{u_lo}^{u_hi} E(u) A E(u)^T du with E(u) = sum_p u^p M_p, integrated term by term.
inline Matrix exact_piece(const Geometry& g, const Matrix& a_full, double u_lo, double u_hi) {
  const auto& m = g.exp_coefficients();
  const int n = g.N();
  Matrix out = Matrix::Zero(n, n);
  for (std::size_t p = 0; p < m.size(); ++p) {
    const Matrix left = m[p] * a_full;
    for (std::size_t r = 0; r < m.size(); ++r) {
      const int deg = static_cast<int>(p + r) + 1;
      const double w = (std::pow(u_hi, deg) - std::pow(u_lo, deg)) / deg;
      out += w * (left * m[r].transpose());
    }
  }
  return out;
}

}  // namespace detail

inline Covariance covariance(const ModelOperator& op, double t, double s,
                             CovarianceMethod method = CovarianceMethod::Auto) {
  require(t > s, ErrorCode::NotAfterPole, "covariance needs t > s");
  const Geometry& g = op.geometry();
  const CoefficientPath& path = op.path();
  require(!path.depends_on_x(), ErrorCode::UnsupportedCoefficients, "kernel needs coefficients a_ij(t)");
  const int n = g.N();
  using Kind = CoefficientPath::Kind;
  if (method == CovarianceMethod::Auto)
    method = path.kind() == Kind::ClosedForm && !path.is_constant() ? CovarianceMethod::Quadrature
                                                                     : CovarianceMethod::ExactPiecewise;
  Covariance cov{Matrix::Zero(n, n), t, s, method};
  switch (method) {
    case CovarianceMethod::ExactPiecewise: {
      require(path.kind() != Kind::ClosedForm || path.is_constant(), ErrorCode::InvalidArgument,
              "exact integration needs piecewise-constant coefficients");
      if (path.kind() == Kind::ClosedForm) {
        cov.C = detail::exact_piece(g, detail::embed_diffusion(path.at(t), n), 0.0, t - s);
        break;
      }
      // Pieces in r, mapped to u = t - r.
      std::vector<double> cuts{s};
      for (double b : path.breakpoints())
        if (b > s && b < t) cuts.push_back(b);
      cuts.push_back(t);
      for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        const double mid = 0.5 * (cuts[k] + cuts[k + 1]);
        const Matrix a = detail::embed_diffusion(path.matrices()[path.piece_index(mid)], n);
        cov.C += detail::exact_piece(g, a, t - cuts[k + 1], t - cuts[k]);
      }
      break;
    }
    case CovarianceMethod::Quadrature: {
      const auto integrand = [&](double r) {
        const Matrix e = g.exp_drift(t - r);
        return Matrix(e * detail::embed_diffusion(path.at(r), n) * e.transpose());
      };
      std::vector<double> cuts{s};
      for (double b : path.breakpoints())
        if (b > s && b < t) cuts.push_back(b);
      cuts.push_back(t);
      for (std::size_t k = 0; k + 1 < cuts.size(); ++k)
        cov.C += adaptive_gauss_legendre(integrand, cuts[k], cuts[k + 1], 1e-13);
      break;
    }
    case CovarianceMethod::HomogeneousClosedForm: {
      require(path.is_constant(), ErrorCode::InvalidArgument,
              "homogeneity of the covariance needs constant coefficients");
      const Matrix a = detail::embed_diffusion(path.at(t), n);
      const Matrix c1 = detail::exact_piece(g, a, 0.0, 1.0);
      const Vector d = g.dilation_diagonal(std::sqrt(t - s));
      cov.C = d.asDiagonal() * c1 * d.asDiagonal();
      break;
    }
    case CovarianceMethod::Auto: break;
  }
  cov.C = 0.5 * (cov.C + cov.C.transpose());
  return cov;
}

struct KernelEval {
  double value = 0.0;
  Vector grad_x;  ///< all N components of grad_x Gamma
  Matrix hess_x;  ///< q x q block of second x-derivatives
  Covariance covariance_used;
};

/// Factorized kernel data for one pair of times (t, s), t > s. The
/// covariance is equilibrated by the dilation D_0(sqrt(t - s)) before the
/// Cholesky factorization so that short times stay well conditioned.
class KernelFrame {
 public:
  KernelFrame(const ModelOperator& op, double t, double s, CovarianceMethod method = CovarianceMethod::Auto)
      : geometry_(&op.geometry()), cov_(covariance(op, t, s, method)) {
    const int n = geometry_->N();
    tau_ = t - s;
    const Vector scale = geometry_->dilation_diagonal(std::sqrt(tau_));
    const Matrix scaled = scale.cwiseInverse().asDiagonal() * cov_.C * scale.cwiseInverse().asDiagonal();
    Eigen::LLT<Matrix> llt(scaled);
    require(llt.info() == Eigen::Success, ErrorCode::SingularCovariance,
            "covariance is not positive definite at t - s = " + std::to_string(tau_));
    const Matrix l_scaled = llt.matrixL();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(scaled, Eigen::EigenvaluesOnly);
    const double min_eig = eig.eigenvalues().minCoeff() * scale.minCoeff() * scale.minCoeff();
    require(min_eig > 1e-300 && std::isfinite(min_eig), ErrorCode::SingularCovariance,
            "covariance underflow at t - s = " + std::to_string(tau_));
    chol_ = scale.asDiagonal() * l_scaled;
    const Matrix inv_scaled = llt.solve(Matrix::Identity(n, n));
    c_inv_ = scale.cwiseInverse().asDiagonal() * inv_scaled * scale.cwiseInverse().asDiagonal();
    c_inv_ = 0.5 * (c_inv_ + c_inv_.transpose());
    double log_det = 0.0;
    for (int i = 0; i < n; ++i) log_det += 2.0 * std::log(l_scaled(i, i)) + 2.0 * std::log(scale[i]);
    log_det_ = log_det;
    norm_ = std::exp(-0.5 * n * std::log(4.0 * std::numbers::pi) - 0.5 * log_det);
    e_fwd_ = geometry_->exp_drift(tau_);
    e_back_ = geometry_->exp_drift(-tau_);
    chart_ = 2.0 * e_back_ * chol_;
    chol_inv_t_ = chol_.triangularView<Eigen::Lower>().solve(Matrix::Identity(n, n)).transpose();
  }

  [[nodiscard]] double tau() const { return tau_; }
  [[nodiscard]] const Covariance& covariance_used() const { return cov_; }
  [[nodiscard]] const Matrix& cholesky() const { return chol_; }
  [[nodiscard]] const Matrix& inverse() const { return c_inv_; }
  [[nodiscard]] double log_det() const { return log_det_; }
  [[nodiscard]] double normalization() const { return norm_; }
  /// E(t - s) and E(s - t).
  [[nodiscard]] const Matrix& exp_forward() const { return e_fwd_; }
  [[nodiscard]] const Matrix& exp_backward() const { return e_back_; }
  /// y(z) = E(s-t) x - chart() z maps the standard Gaussian chart to y, so that
  /// Gamma(x,t;y,s) dy = pi^{-N/2} exp(-|z|^2) dz.
  [[nodiscard]] const Matrix& chart() const { return chart_; }
  /// L^{-T} with C = L L^T; in the chart C^{-1} w = 2 L^{-T} z.
  [[nodiscard]] const Matrix& cholesky_inverse_transpose() const { return chol_inv_t_; }
  /// sqrt(det C) 2^N: Jacobian of the chart.
  [[nodiscard]] double chart_jacobian() const {
    return std::exp(0.5 * log_det_ + geometry_->N() * std::log(2.0));
  }

  [[nodiscard]] Vector offset(const Vector& x, const Vector& y) const { return x - e_fwd_ * y; }

  [[nodiscard]] double value_at_offset(const Vector& w) const {
    return norm_ * std::exp(-0.25 * w.dot(c_inv_ * w));
  }

  [[nodiscard]] double value(const Vector& x, const Vector& y) const { return value_at_offset(offset(x, y)); }

  [[nodiscard]] KernelEval eval(const Vector& x, const Vector& y) const {
    const Vector w = offset(x, y);
    const Vector v = c_inv_ * w;
    KernelEval k;
    k.value = norm_ * std::exp(-0.25 * w.dot(v));
    k.grad_x = -0.5 * k.value * v;
    const int q = geometry_->q();
    k.hess_x.resize(q, q);
    for (int i = 0; i < q; ++i)
      for (int j = 0; j < q; ++j) k.hess_x(i, j) = (0.25 * v[i] * v[j] - 0.5 * c_inv_(i, j)) * k.value;
    k.covariance_used = cov_;
    return k;
  }

  /// d^2_{x_i x_j} Gamma at offset w.
  [[nodiscard]] double second_derivative(const Vector& w, int i, int j) const {
    const Vector v = c_inv_ * w;
    return (0.25 * v[i] * v[j] - 0.5 * c_inv_(i, j)) * value_at_offset(w);
  }

 private:
  const Geometry* geometry_;
  Covariance cov_;
  double tau_ = 0.0;
  Matrix chol_;
  Matrix c_inv_;
  Matrix e_fwd_;
  Matrix e_back_;
  Matrix chart_;
  Matrix chol_inv_t_;
  double log_det_ = 0.0;
  double norm_ = 0.0;
};

/// Gamma(xi; eta) with analytic first and second x-derivatives; zero for t <= s.
inline KernelEval gamma(const ModelOperator& op, const Point& xi, const Point& eta,
                        CovarianceMethod method = CovarianceMethod::Auto) {
  if (xi.t <= eta.t) {
    KernelEval k;
    k.grad_x = Vector::Zero(op.N());
    k.hess_x = Matrix::Zero(op.q(), op.q());
    k.covariance_used.t = xi.t;
    k.covariance_used.s = eta.t;
    return k;
  }
  return KernelFrame(op, xi.t, eta.t, method).eval(xi.x, eta.x);
}

using MultiIndex = std::vector<int>;

/// Weighted order omega(l) = sum l_i q_i.
inline int weighted_order(const Geometry& g, const MultiIndex& l) {
  int w = 0;
  for (int i = 0; i < g.N(); ++i) w += l[static_cast<std::size_t>(i)] * g.exponent(i);
  return w;
}

/// D_x^l Gamma = P_l(w) Gamma with P_l a polynomial in w, built from
/// d_i (p Gamma) = (d_i p - p (C^{-1} w)_i / 2) Gamma.
class DerivativePolynomial {
 public:
  DerivativePolynomial(const KernelFrame& frame, const MultiIndex& l) {
    const int n = static_cast<int>(l.size());
    terms_[std::vector<int>(static_cast<std::size_t>(n), 0)] = 1.0;
    const Matrix half_inv = 0.5 * frame.inverse();
    for (int i = 0; i < n; ++i)
      for (int rep = 0; rep < l[static_cast<std::size_t>(i)]; ++rep) {
        std::map<std::vector<int>, double> next;
        for (const auto& [mono, c] : terms_) {
          if (mono[static_cast<std::size_t>(i)] > 0) {
            auto d = mono;
            d[static_cast<std::size_t>(i)] -= 1;
            next[d] += c * mono[static_cast<std::size_t>(i)];
          }
          for (int k = 0; k < n; ++k) {
            if (half_inv(i, k) == 0.0) continue;
            auto m = mono;
            m[static_cast<std::size_t>(k)] += 1;
            next[m] -= c * half_inv(i, k);
          }
        }
        terms_ = std::move(next);
      }
  }

  [[nodiscard]] double operator()(const Vector& w) const {
    double acc = 0.0;
    for (const auto& [mono, c] : terms_) {
      double v = c;
      for (std::size_t k = 0; k < mono.size(); ++k)
        for (int r = 0; r < mono[k]; ++r) v *= w[static_cast<Eigen::Index>(k)];
      acc += v;
    }
    return acc;
  }

 private:
  std::map<std::vector<int>, double> terms_;
};

inline constexpr int kMaxWeightedOrder = 4;

/// Tensor Gauss-Legendre nodes on the cube [-R, R]^N for the Gaussian chart.
struct GaussianChart {
  std::vector<Vector> nodes;
  std::vector<double> weights;           ///< include pi^{-N/2} exp(-|z|^2)
  std::vector<double> plain_weights;     ///< bare tensor Gauss-Legendre weights
  double radius = 0.0;
  int nodes_per_axis = 0;

  GaussianChart(int n_space, int nodes_per_axis_ = 32, double r = 5.6) : radius(r), nodes_per_axis(nodes_per_axis_) {
    const QuadratureRule rule = composite_gauss_legendre(-r, r, nodes_per_axis_);
    const std::size_t m = rule.size();
    std::size_t total = 1;
    for (int i = 0; i < n_space; ++i) total *= m;
    std::vector<std::size_t> idx(static_cast<std::size_t>(n_space), 0);
    const double gauss_norm = std::pow(std::numbers::pi, -0.5 * n_space);
    for (std::size_t k = 0; k < total; ++k) {
      Vector z(n_space);
      double w = 1.0;
      std::size_t rem = k;
      for (int i = 0; i < n_space; ++i) {
        const std::size_t a = rem % m;
        rem /= m;
        z[i] = rule.nodes[a];
        w *= rule.weights[a];
      }
      const double gw = w * gauss_norm * std::exp(-z.squaredNorm());
      if (gw < 1e-18 * gauss_norm * w && n_space > 1) continue;
      nodes.push_back(z);
      plain_weights.push_back(w);
      weights.push_back(gw);
    }
  }
};

/// int_{R^N} D_x^l Gamma(x,t;y,s) dy by quadrature over the Gaussian chart,
/// evaluating the kernel derivative at the mapped nodes y(z).
inline double gamma_derivative_integrals(const ModelOperator& op, const Vector& x, double t, double s,
                                         const MultiIndex& l, int nodes_per_axis = 32) {
  require(t > s, ErrorCode::NotAfterPole, "derivative integrals need t > s");
  require(static_cast<int>(l.size()) == op.N(), ErrorCode::ShapeMismatch, "multi-index length must be N");
  require(weighted_order(op.geometry(), l) <= kMaxWeightedOrder, ErrorCode::InvalidArgument,
          "derivative order beyond omega(l) <= 4 is not supported");
  const KernelFrame frame(op, t, s);
  const DerivativePolynomial poly(frame, l);
  const GaussianChart chart(op.N(), nodes_per_axis);
  const Vector base = frame.exp_backward() * x;
  const double jac = frame.chart_jacobian();
  double acc = 0.0;
  for (std::size_t k = 0; k < chart.nodes.size(); ++k) {
    const Vector y = base - frame.chart() * chart.nodes[k];
    const Vector w = frame.offset(x, y);
    acc += chart.plain_weights[k] * jac * poly(w) * frame.value_at_offset(w);
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Empirical fine-property checks.

struct SamplePair {
  Point xi;
  Point eta;
};

/// Seeded cloud of pairs with 0 < t - s, drawn from `box` for xi and eta.
inline std::vector<SamplePair> sample_pairs(const Box& box, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<SamplePair> out;
  while (out.size() < count) {
    Point a = uniform_point(box, rng);
    Point b = uniform_point(box, rng);
    if (a.t == b.t) continue;
    if (a.t < b.t) std::swap(a, b);
    out.push_back({a, b});
  }
  return out;
}

struct GaussianBoundReport {
  std::vector<double> level_scale;     ///< dilation factor toward the pole per level
  std::vector<double> level_constant;  ///< sup |D^2 Gamma| d^{Q+2} at that level
  double max_constant = 0.0;
  double drift_ratio = 0.0;  ///< max / min over levels
  bool stable = false;       ///< drift_ratio < 2
  bool diverging = false;    ///< strictly increasing along the ladder with drift >= 2
};

inline double max_abs_hessian(const KernelEval& k) { return k.hess_x.cwiseAbs().maxCoeff(); }

/// Sup of |d^2_{x_i x_j} Gamma| d(xi, eta)^{Q+2} over the cloud, repeated with
/// xi pulled toward eta by dilation: xi_k = eta o D(10^{-k}) (eta^{-1} o xi).
inline GaussianBoundReport check_gaussian_bound(const ModelOperator& op, const std::vector<SamplePair>& samples,
                                                int levels = 3, double factor = 10.0) {
  const Geometry& g = op.geometry();
  const int power = g.info().Qplus2;
  GaussianBoundReport rep;
  for (int level = 0; level < levels; ++level) {
    const double lambda = std::pow(factor, -level);
    double sup = 0.0;
    for (const auto& pr : samples) {
      const Point rel = g.relative(pr.eta, pr.xi);
      const Point xi = g.compose(pr.eta, g.dilate(lambda, rel));
      if (xi.t <= pr.eta.t) continue;
      const KernelEval k = gamma(op, xi, pr.eta);
      sup = std::max(sup, max_abs_hessian(k) * std::pow(g.quasidistance(xi, pr.eta), power));
    }
    rep.level_scale.push_back(lambda);
    rep.level_constant.push_back(sup);
  }
  const auto [lo, hi] = std::minmax_element(rep.level_constant.begin(), rep.level_constant.end());
  rep.max_constant = *hi;
  rep.drift_ratio = *lo > 0.0 ? *hi / *lo : std::numeric_limits<double>::infinity();
  rep.stable = rep.drift_ratio < 2.0;
  rep.diverging = !rep.stable && std::is_sorted(rep.level_constant.begin(), rep.level_constant.end());
  return rep;
}

struct SampleTriple {
  Point xi1;
  Point xi2;
  Point eta;
};

struct MeanValueReport {
  double max_constant = 0.0;
  std::size_t admissible = 0;
  std::size_t rejected = 0;
};

/// |D^2 Gamma(xi1, eta) - D^2 Gamma(xi2, eta)| d(xi1, eta)^{Q+3} / d(xi1, xi2),
/// maximized over i, j <= q. Zero when xi1 == xi2.
inline double mean_value_ratio(const ModelOperator& op, const SampleTriple& tr) {
  const Geometry& g = op.geometry();
  const double d12 = g.quasidistance(tr.xi1, tr.xi2);
  if (d12 == 0.0) return 0.0;
  const KernelEval k1 = gamma(op, tr.xi1, tr.eta);
  const KernelEval k2 = gamma(op, tr.xi2, tr.eta);
  const double diff = (k1.hess_x - k2.hess_x).cwiseAbs().maxCoeff();
  return diff * std::pow(g.quasidistance(tr.xi1, tr.eta), g.info().Q + 3) / d12;
}

inline bool mean_value_admissible(const Geometry& g, const SampleTriple& tr, double kappa) {
  const double d12 = g.quasidistance(tr.xi1, tr.xi2);
  return d12 > 0.0 && g.quasidistance(tr.xi1, tr.eta) >= 4.0 * kappa * d12;
}

inline MeanValueReport check_mean_value(const ModelOperator& op, const std::vector<SampleTriple>& samples,
                                        double kappa) {
  MeanValueReport rep;
  for (const auto& tr : samples) {
    if (!mean_value_admissible(op.geometry(), tr, kappa)) {
      ++rep.rejected;
      continue;
    }
    ++rep.admissible;
    rep.max_constant = std::max(rep.max_constant, mean_value_ratio(op, tr));
  }
  return rep;
}

/// Triples with xi2 = xi1 o D(delta) zeta for small delta so that a good
/// fraction satisfies the admissibility condition.
inline std::vector<SampleTriple> sample_triples(const Geometry& g, const Box& box, std::size_t count,
                                                std::uint64_t seed, double spread = 0.05) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<SampleTriple> out;
  while (out.size() < count) {
    Point xi1 = uniform_point(box, rng);
    Point eta = uniform_point(box, rng);
    if (xi1.t == eta.t) continue;
    if (xi1.t < eta.t) std::swap(xi1, eta);
    Point step{Vector(g.N()), unit(rng)};
    for (int i = 0; i < g.N(); ++i) step.x[i] = unit(rng);
    const double scale = spread * std::abs(unit(rng)) * g.quasidistance(xi1, eta);
    Point xi2 = g.compose(xi1, g.dilate(std::max(scale, 1e-12), step));
    if (xi2.t <= eta.t) continue;
    out.push_back({xi1, xi2, eta});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cancellation integrals.

namespace detail {

// Integral of g(v) over {sum_i |v_i|^{1/q_i} < rho} by nested Gauss-Legendre,
// splitting every coordinate at 0 and clipping to +-clip[i] where g is
// negligible. Panels are no wider than `panel[i]`.
template <class F>
double integrate_quasi_ball(const Geometry& geom, double rho, const Vector& clip, const Vector& panel, int nodes,
                            F&& g) {
  const int n = geom.N();
  Vector v = Vector::Zero(n);
  std::function<double(int, double)> level = [&](int i, double budget) -> double {
    if (i == n) return g(v);
    if (budget <= 0.0) return 0.0;
    const double bound = std::min(std::pow(budget, geom.exponent(i)), clip[i]);
    if (bound <= 0.0) return 0.0;
    const int panels = std::max(1, std::min(64, static_cast<int>(std::ceil(bound / panel[i]))));
    const QuadratureRule rule = composite_gauss_legendre(0.0, bound, nodes, panels);
    double acc = 0.0;
    for (int sign : {-1, 1})
      for (std::size_t k = 0; k < rule.size(); ++k) {
        const double vi = sign * rule.nodes[k];
        v[i] = vi;
        const double used = std::pow(std::abs(vi), 1.0 / geom.exponent(i));
        acc += rule.weights[k] * level(i + 1, budget - used);
      }
    v[i] = 0.0;
    return acc;
  };
  return level(0, rho);
}

}  // namespace detail

struct CancellationOptions {
  int nodes = 12;              ///< Gauss-Legendre nodes per panel (space)
  int time_nodes = 10;         ///< Gauss-Legendre nodes per time panel
  double gaussian_radius = 7.0;  ///< clip at this many standard deviations
};

/// Inner integral of I: int_{d((x,t),(y,s)) >= r} d^2_{x_i x_j} Gamma(x,t;y,s) dy.
/// Evaluated as minus the integral over the complement, which is bounded.
inline double cancellation_inner_forward(const ModelOperator& op, const Vector& x, double t, double s, double r,
                                         int i, int j, const CancellationOptions& opt = {}) {
  const double rho = r - std::sqrt(t - s);
  if (rho <= 0.0) return 0.0;
  const KernelFrame frame(op, t, s);
  const int n = op.N();
  // w = x - E(t-s) y ranges over {||w|| < rho}; dy = dw; cov(w) ~ 2C.
  Vector sigma(n);
  for (int k = 0; k < n; ++k) sigma[k] = std::sqrt(2.0 * frame.covariance_used().C(k, k));
  const Vector clip = opt.gaussian_radius * sigma;
  const Vector panel = sigma;
  const double inside = detail::integrate_quasi_ball(op.geometry(), rho, clip, panel, opt.nodes,
                                                     [&](const Vector& w) { return frame.second_derivative(w, i, j); });
  (void)x;
  return -inside;
}

/// Inner integral of J: int_{d((y,s),(x,t)) >= r} d^2_{x_i x_j} Gamma(x,t;y,s) dx.
inline double cancellation_inner_backward(const ModelOperator& op, const Vector& y, double s, double t, double r,
                                          int i, int j, const CancellationOptions& opt = {}) {
  const double rho = r - std::sqrt(t - s);
  if (rho <= 0.0) return 0.0;
  const KernelFrame frame(op, t, s);
  const int n = op.N();
  // v = y - E(s-t) x, so w = x - E(t-s) y = -E(t-s) v and dx = dv.
  const Matrix& ef = frame.exp_forward();
  const Matrix& eb = frame.exp_backward();
  const Matrix cov_v = eb * (2.0 * frame.covariance_used().C) * eb.transpose();
  Vector sigma(n);
  for (int k = 0; k < n; ++k) sigma[k] = std::sqrt(cov_v(k, k));
  const Vector clip = opt.gaussian_radius * sigma;
  const double inside = detail::integrate_quasi_ball(
      op.geometry(), rho, clip, sigma, opt.nodes,
      [&](const Vector& v) { return frame.second_derivative(-(ef * v), i, j); });
  (void)y;
  return -inside;
}

struct CancellationResult {
  double I = 0.0;
  double J = 0.0;
};

/// I_{r,tau}(x,t) = int_tau^t |inner_forward(s)| ds and
/// J_{r,tau}(x,t) = int_{tau - (t - tau)}^{tau} |inner_backward| dt' with the
/// pole placed at (x, tau - (t - tau)), i.e. the swapped integral over a window
/// of the same length.
inline CancellationResult cancellation_integrals(const ModelOperator& op, const Vector& x, double t, double r,
                                                 double tau, int i = 0, int j = 0,
                                                 const CancellationOptions& opt = {}) {
  require(tau < t, ErrorCode::InvalidArgument, "cancellation integrals need tau < t");
  require(r > 0.0, ErrorCode::InvalidArgument, "radius must be positive");
  const double window = std::min(t - tau, r * r);  // inner integrals vanish once sqrt(t - s) >= r
  CancellationResult res;
  if (window <= 0.0) return res;
  const QuadratureRule rule = graded_toward_zero(window, window * 1e-6, opt.time_nodes);
  for (std::size_t k = 0; k < rule.size(); ++k) {
    const double lag = rule.nodes[k];
    res.I += rule.weights[k] * std::abs(cancellation_inner_forward(op, x, t, t - lag, r, i, j, opt));
  }
  const double s0 = tau - (t - tau);
  for (std::size_t k = 0; k < rule.size(); ++k) {
    const double lag = rule.nodes[k];
    res.J += rule.weights[k] * std::abs(cancellation_inner_backward(op, x, s0, s0 + lag, r, i, j, opt));
  }
  return res;
}

}  // namespace kfp
