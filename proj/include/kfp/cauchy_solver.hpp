#pragma once

// Representation formulas and the Cauchy problem for the model operator,
// assembled from the explicit kernel:
//   u = -int Gamma Lu,   d_i u = -int d_i Gamma Lu,
//   (L - lambda) u = f, u(., 0) = g  =>
//   u(x,t) = e^{-lambda t} [ int Gamma(x,t;y,0) g(y) dy
//                            - int_0^t int Gamma(x,t;y,s) e^{lambda s} f(y,s) dy ds ].

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "kfp/fundamental_solution.hpp"
#include "kfp/grid.hpp"

namespace kfp {

/// Which x-derivative of the kernel a chart integral uses.
struct KernelDerivative {
  int order = 0;  ///< 0, 1 or 2
  int i = 0;
  int j = 0;

  static KernelDerivative value() { return {0, 0, 0}; }
  static KernelDerivative first(int i) { return {1, i, 0}; }
  static KernelDerivative second(int i, int j) { return {2, i, j}; }
};

/// Kernel frame pushed through the Gaussian chart: y(z) = E(s-t) x - G z with
/// G lower triangular and D Gamma(x,t;y,s) dy = factor(z) dz.
///
/// Two node layouts are used. While the chart image is small compared with
/// the source support, a fixed tensor rule on the cube [-R, R]^N is used and
/// derivative integrals are taken in difference form,
/// int D Gamma [f(y) - f(E(s-t) x)] dy, exact because int D Gamma dy = 0.
/// Once the Gaussian is wider than the support, the z-intervals are clipped
/// axis by axis to the preimage of the support box so that the nodes resolve
/// the source rather than the kernel.
class ChartFrame {
 public:
  ChartFrame(const KernelFrame& frame, const GaussianChart& chart, KernelDerivative d,
             const std::optional<Box>& support = std::nullopt)
      : e_back_(frame.exp_backward()),
        g_(frame.chart()),
        lit_(frame.cholesky_inverse_transpose()),
        cinv_(frame.inverse()),
        derivative_(d),
        radius_(chart.radius),
        nodes_per_axis_(chart.nodes_per_axis) {
    const int n = static_cast<int>(g_.rows());
    if (support) {
      for (int i = 0; i < n; ++i) {
        const double reach = 2.0 * radius_ * g_.row(i).cwiseAbs().sum();
        if (reach > support->hi[i] - support->lo[i]) clipped_ = true;
      }
      lo_ = support->lo.head(n);
      hi_ = support->hi.head(n);
    }
    if (clipped_) return;
    const std::size_t m = chart.nodes.size();
    shifts_.reserve(m);
    factors_.reserve(m);
    for (std::size_t k = 0; k < m; ++k) {
      shifts_.push_back(g_ * chart.nodes[k]);
      factors_.push_back(factor(chart.nodes[k]) * chart.weights[k]);
    }
  }

  [[nodiscard]] bool clipped() const { return clipped_; }

  template <class F>
  [[nodiscard]] double integrate(const Vector& x, double s, F&& f) const {
    const Vector base = e_back_ * x;
    if (clipped_) return integrate_clipped(base, s, f);
    const std::size_t n = static_cast<std::size_t>(base.size());
    std::vector<double> y(n);
    const double center = derivative_.order == 0 ? 0.0 : f(base.data(), s);
    double acc = 0.0;
    for (std::size_t k = 0; k < shifts_.size(); ++k) {
      for (std::size_t a = 0; a < n; ++a) y[a] = base[static_cast<Eigen::Index>(a)] - shifts_[k][static_cast<Eigen::Index>(a)];
      acc += factors_[k] * (f(y.data(), s) - center);
    }
    return acc;
  }

 private:
  /// Polynomial part of the chart density for the requested derivative.
  [[nodiscard]] double factor(const Vector& z) const {
    if (derivative_.order == 1) return -lit_.row(derivative_.i).dot(z);
    if (derivative_.order == 2)
      return lit_.row(derivative_.i).dot(z) * lit_.row(derivative_.j).dot(z) - 0.5 * cinv_(derivative_.i, derivative_.j);
    return 1.0;
  }

  template <class F>
  double integrate_clipped(const Vector& base, double s, F& f) const {
    const int n = static_cast<int>(base.size());
    const QuadratureRule& rule = gauss_legendre(nodes_per_axis_);
    Vector z = Vector::Zero(n);
    Vector y = Vector::Zero(n);
    const double norm = std::pow(std::numbers::pi, -0.5 * n);
    std::function<double(int, double)> level = [&](int i, double weight) -> double {
      if (i == n) return weight * norm * factor(z) * f(y.data(), s);
      double partial = base[i];
      for (int k = 0; k < i; ++k) partial -= g_(i, k) * z[k];
      // y_i = partial - G_ii z_i must lie in [lo_i, hi_i]
      const double a = std::max(-radius_, (partial - hi_[i]) / g_(i, i));
      const double b = std::min(radius_, (partial - lo_[i]) / g_(i, i));
      if (b <= a) return 0.0;
      const double half = 0.5 * (b - a);
      const double mid = 0.5 * (a + b);
      double acc = 0.0;
      for (std::size_t k = 0; k < rule.size(); ++k) {
        z[i] = mid + half * rule.nodes[k];
        y[i] = partial - g_(i, i) * z[i];
        acc += level(i + 1, weight * half * rule.weights[k] * std::exp(-z[i] * z[i]));
      }
      return acc;
    };
    return level(0, 1.0);
  }

  Matrix e_back_;
  Matrix g_;
  Matrix lit_;
  Matrix cinv_;
  KernelDerivative derivative_;
  double radius_;
  int nodes_per_axis_;
  bool clipped_ = false;
  Vector lo_;
  Vector hi_;
  std::vector<Vector> shifts_;
  std::vector<double> factors_;
};

struct SolverOptions {
  int chart_nodes = 32;          ///< Gauss-Legendre nodes per chart axis
  double chart_radius = 5.6;     ///< chart cube half-width (standard normal units)
  int time_nodes = 8;            ///< Gauss-Legendre nodes per time panel
  double time_panel = 0.125;     ///< maximal time panel length
  double graded_floor = 1e-7;    ///< finest graded panel, relative to the lag range
};

namespace detail {

/// Lags tau = t - s for s in [s_lo, s_hi], s < t; `graded` refines the panels
/// geometrically toward the smallest lag.
inline QuadratureRule lag_rule(double t, double s_lo, double s_hi, bool graded, const SolverOptions& opt,
                               std::vector<double> breakpoints = {}) {
  const double tau_hi = t - s_lo;
  const double tau_lo = std::max(0.0, t - s_hi);
  QuadratureRule rule;
  if (tau_hi <= tau_lo) return rule;
  if (graded) {
    const double range = tau_hi - tau_lo;
    for (double& b : breakpoints) b -= tau_lo;
    rule = graded_toward_zero(range, opt.graded_floor * range, opt.time_nodes, std::move(breakpoints));
    for (double& x : rule.nodes) x += tau_lo;
    return rule;
  }
  std::vector<double> cuts{tau_lo};
  for (double b : breakpoints)
    if (b > tau_lo && b < tau_hi) cuts.push_back(b);
  cuts.push_back(tau_hi);
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double len = cuts[k + 1] - cuts[k];
    const int panels = std::max(1, static_cast<int>(std::ceil(len / opt.time_panel)));
    const double step = len / panels;
    for (int p = 0; p < panels; ++p) append_panel(rule, cuts[k] + p * step, cuts[k] + (p + 1) * step, opt.time_nodes);
  }
  return rule;
}

inline void require_model(const ModelOperator& op) {
  require(!op.path().depends_on_x(), ErrorCode::UnsupportedCoefficients,
          "kernel-based solvers need coefficients a_ij(t) only");
}

inline void require_support(const ScalarField& f) {
  require(f.support.has_value(), ErrorCode::SupportNotCompact, "source must declare a compact support box");
}

}  // namespace detail

/// Restrictions and weights on the lag tau = t - s of a kernel potential.
struct LagWindow {
  double min_lag = 0.0;
  double max_lag = std::numeric_limits<double>::infinity();
  std::vector<double> breakpoints;
  std::function<double(double)> weight;  ///< multiplies the integrand at lag tau
};

/// out(x,t) = sign * int_{s in supp f, s < t} w(t-s) int D Gamma(x,t;y,s) f(y,s) dy ds
/// on the output grid.
inline GridFunction kernel_potential(const ModelOperator& op, const ScalarField& f, const Box& out_box,
                                     const std::vector<int>& shape, KernelDerivative d,
                                     const SolverOptions& opt = {}, double sign = -1.0,
                                     const LagWindow& window = {}) {
  detail::require_model(op);
  detail::require_support(f);
  const int n = op.N();
  GridFunction out(out_box, shape);
  const GaussianChart chart(n, opt.chart_nodes, opt.chart_radius);
  const std::size_t slice = out.slice_size();
  for (int it = 0; it < out.extent(n); ++it) {
    const double t = out.coordinate(n, it);
    const double s_lo = std::max(f.support->lo[n], t - window.max_lag);
    const double s_hi = std::min(f.support->hi[n], t - window.min_lag);
    if (s_hi <= s_lo) continue;
    std::vector<double> cuts;
    for (double b : window.breakpoints) cuts.push_back(b);
    const QuadratureRule lags = detail::lag_rule(t, s_lo, s_hi, d.order > 0, opt, cuts);
    std::vector<ChartFrame> frames;
    std::vector<double> weights;
    frames.reserve(lags.size());
    for (std::size_t k = 0; k < lags.size(); ++k) {
      const double w = lags.weights[k] * (window.weight ? window.weight(lags.nodes[k]) : 1.0);
      if (w == 0.0) continue;
      frames.emplace_back(KernelFrame(op, t, t - lags.nodes[k]), chart, d, f.support);
      weights.push_back(w);
    }
    std::vector<double> times;
    for (std::size_t k = 0; k < lags.size(); ++k)
      if (lags.weights[k] * (window.weight ? window.weight(lags.nodes[k]) : 1.0) != 0.0)
        times.push_back(t - lags.nodes[k]);
    parallel_for(slice, [&](std::size_t local) {
      const std::size_t idx = static_cast<std::size_t>(it) * slice + local;
      const Vector x = out.point(idx).x;
      double acc = 0.0;
      for (std::size_t k = 0; k < frames.size(); ++k) acc += weights[k] * frames[k].integrate(x, times[k], f.fn);
      out[idx] = sign * acc;
    });
  }
  return out;
}

/// u = -int Gamma Lu (compactly supported u).
inline GridFunction represent_u(const ModelOperator& op, const ScalarField& lbar_u, const Box& out_box,
                                const std::vector<int>& shape, const SolverOptions& opt = {}) {
  return kernel_potential(op, lbar_u, out_box, shape, KernelDerivative::value(), opt);
}

/// d_{x_i} u = -int d_{x_i} Gamma Lu.
inline GridFunction represent_first_derivative(const ModelOperator& op, const ScalarField& lbar_u, int i,
                                               const Box& out_box, const std::vector<int>& shape,
                                               const SolverOptions& opt = {}) {
  require(i >= 0 && i < op.N(), ErrorCode::InvalidArgument, "derivative index out of range");
  return kernel_potential(op, lbar_u, out_box, shape, KernelDerivative::first(i), opt);
}

/// Grid input: checked for compact support inside its box, then interpolated.
inline ScalarField compact_source(const GridFunction& g, double tolerance = 1e-12) {
  require(g.boundary_ratio() <= tolerance, ErrorCode::SupportNotCompact,
          "grid source does not vanish on the faces of its box");
  return g.interpolant();
}

inline GridFunction represent_u(const ModelOperator& op, const GridFunction& lbar_u, const SolverOptions& opt = {}) {
  return represent_u(op, compact_source(lbar_u), lbar_u.box(), lbar_u.shape(), opt);
}

inline GridFunction represent_first_derivative(const ModelOperator& op, const GridFunction& lbar_u, int i,
                                               const SolverOptions& opt = {}) {
  return represent_first_derivative(op, compact_source(lbar_u), i, lbar_u.box(), lbar_u.shape(), opt);
}

struct CauchyProblem {
  ModelOperator op;
  ScalarField f;  ///< source on R^N x (0, T); support box optional
  ScalarField g;  ///< initial datum at t = 0; a support box (time axis ignored) sharpens the quadrature
  double T = 1.0;
  double lambda = 0.0;
};

/// Solves (L - lambda) u = f on R^N x (0, T), u(., 0) = g, sampled on a grid
/// whose time axis is [0, T].
inline GridFunction solve_cauchy(const CauchyProblem& pb, const Box& out_box, const std::vector<int>& shape,
                                 const SolverOptions& opt = {}) {
  const ModelOperator& op = pb.op;
  detail::require_model(op);
  const int n = op.N();
  require(pb.T > 0.0, ErrorCode::InvalidArgument, "final time must be positive");
  require(pb.lambda >= 0.0, ErrorCode::InvalidArgument, "damping must be nonnegative");
  require(out_box.dims() == n + 1, ErrorCode::GridIncompatible, "output box must have N + 1 axes");
  require(std::abs(out_box.lo[n]) < 1e-14 && std::abs(out_box.hi[n] - pb.T) < 1e-12 * std::max(1.0, pb.T),
          ErrorCode::GridIncompatible, "output time axis must be [0, T]");
  GridFunction out(out_box, shape);
  const GaussianChart chart(n, opt.chart_nodes, opt.chart_radius);
  const std::size_t slice = out.slice_size();
  double s_lo = 0.0;
  double s_hi = pb.T;
  if (pb.f.support) {
    s_lo = std::max(s_lo, pb.f.support->lo[n]);
    s_hi = std::min(s_hi, pb.f.support->hi[n]);
  }
  for (int it = 0; it < out.extent(n); ++it) {
    const double t = out.coordinate(n, it);
    if (it == 0) {
      parallel_for(slice, [&](std::size_t local) {
        const Vector x = out.point(local).x;
        out[local] = pb.g(x.data(), 0.0);
      });
      continue;
    }
    const ChartFrame initial(KernelFrame(op, t, 0.0), chart, KernelDerivative::value(), pb.g.support);
    const QuadratureRule lags = s_hi > s_lo ? detail::lag_rule(t, s_lo, s_hi, false, opt) : QuadratureRule{};
    std::vector<ChartFrame> frames;
    frames.reserve(lags.size());
    for (std::size_t k = 0; k < lags.size(); ++k)
      frames.emplace_back(KernelFrame(op, t, t - lags.nodes[k]), chart, KernelDerivative::value(), pb.f.support);
    const double damp = std::exp(-pb.lambda * t);
    parallel_for(slice, [&](std::size_t local) {
      const std::size_t idx = static_cast<std::size_t>(it) * slice + local;
      const Vector x = out.point(idx).x;
      double acc = initial.integrate(x, 0.0, pb.g.fn);
      for (std::size_t k = 0; k < lags.size(); ++k) {
        const double s = t - lags.nodes[k];
        acc -= lags.weights[k] * std::exp(pb.lambda * s) * frames[k].integrate(x, s, pb.f.fn);
      }
      out[idx] = damp * acc;
    });
  }
  return out;
}

/// L^2 mismatch between the finite-difference (L - lambda) u and f, relative
/// to ||f|| + ||Yu|| so that homogeneous problems are measured too. Only nodes
/// off the space faces and from the third time node on (where the backward
/// time stencil is second order) count.
inline double cauchy_residual(const CauchyProblem& pb, const GridFunction& u) {
  const GridFunction lu = apply_operator_fd(pb.op, u, pb.lambda);
  const GridFunction f = GridFunction::sample(pb.f, u.box(), u.shape());
  const GridFunction yu = u.drift(pb.op.geometry().drift());
  const int n = u.n_space();
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    bool interior = u.index(k, n) >= 2;
    for (int a = 0; a < n && interior; ++a) interior = u.index(k, a) > 0 && u.index(k, a) < u.extent(a) - 1;
    if (!interior) continue;
    num += (lu[k] - f[k]) * (lu[k] - f[k]);
    den += f[k] * f[k] + yu[k] * yu[k];
  }
  return std::sqrt(num / (den > 0.0 ? den : 1.0));
}

/// ||u||_{W^{2,p}_X} / (||f||_p + T^{1/p} ||g||_{W^{2,p}_X(R^N)}), all on u's grid.
inline double estimate_cauchy_constant(const CauchyProblem& pb, const GridFunction& u, double p) {
  const Matrix& b = pb.op.geometry().drift();
  const int q = pb.op.q();
  const GridFunction f = GridFunction::sample(pb.f, u.box(), u.shape());
  const ScalarField g0{[g = pb.g.fn](const double* x, double) { return g(x, 0.0); }, std::nullopt};
  // g extended constantly in t: its grid norm is T^{1/p} times the spatial norm.
  const GridFunction g = GridFunction::sample(g0, u.box(), u.shape());
  const double data = f.lp_norm(p) + g.sobolev_norm(b, q, p);
  require(data > 0.0, ErrorCode::ZeroData, "Cauchy constant needs nonzero data");
  return u.sobolev_norm(b, q, p) / data;
}

}  // namespace kfp
