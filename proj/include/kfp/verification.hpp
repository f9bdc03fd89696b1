#pragma once

// Property suites run by `kfp geometry` and `kfp verify`: each check
// reports its worst case against a tolerance.

#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "kfp/fundamental_solution.hpp"
#include "kfp/spec_io.hpp"

namespace kfp {

inline constexpr const char* kToolVersion = "0.3.0";
inline constexpr int kReportSchemaVersion = 1;

struct CheckResult {
  std::string check;
  std::size_t samples = 0;
  double worst_case = 0.0;
  double tolerance = 0.0;
  bool pass = false;

  [[nodiscard]] json to_json() const {
    return {{"check", check}, {"samples", samples}, {"worst_case", worst_case}, {"tolerance", tolerance}, {"pass", pass}};
  }
};

inline CheckResult make_check(std::string name, std::size_t samples, double worst, double tol) {
  return {std::move(name), samples, worst, tol, std::isfinite(worst) && worst < tol};
}

inline bool all_pass(const std::vector<CheckResult>& checks) {
  for (const auto& c : checks)
    if (!c.pass) return false;
  return true;
}

/// Difference of two points relative to max(1, |b|) componentwise sup.
inline double point_error(const Point& a, const Point& b) {
  const double diff = std::max((a.x - b.x).cwiseAbs().maxCoeff(), std::abs(a.t - b.t));
  const double scale = std::max({1.0, b.x.cwiseAbs().maxCoeff(), std::abs(b.t)});
  return diff / scale;
}

inline double scalar_error(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

/// Group axioms, quasidistance invariances and the exponential law on
/// `samples` seeded random inputs from [-1, 1]^{N+1}.
inline std::vector<CheckResult> geometry_axioms(const Geometry& g, std::size_t samples, std::uint64_t seed,
                                                double tol = 1e-12) {
  std::mt19937_64 rng(seed);
  const Box box = Box::cube(g.N(), 1.0);
  std::uniform_real_distribution<double> lam(0.1, 10.0);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  double assoc = 0.0, inverse = 0.0, relative = 0.0, left = 0.0, homog = 0.0, norm_homog = 0.0, autom = 0.0,
         exp_law = 0.0, equal_time = 0.0;
  for (std::size_t k = 0; k < samples; ++k) {
    const Point a = uniform_point(box, rng);
    const Point b = uniform_point(box, rng);
    const Point c = uniform_point(box, rng);
    const double l = lam(rng);
    assoc = std::max(assoc, point_error(g.compose(g.compose(a, b), c), g.compose(a, g.compose(b, c))));
    const Point zero{Vector::Zero(g.N()), 0.0};
    inverse = std::max({inverse, point_error(g.compose(a, g.invert(a)), zero), point_error(g.compose(g.invert(a), a), zero)});
    relative = std::max(relative, point_error(g.compose(g.invert(b), a), g.relative(b, a)));
    left = std::max(left, scalar_error(g.quasidistance(g.compose(c, a), g.compose(c, b)), g.quasidistance(a, b)));
    homog = std::max(homog, scalar_error(g.quasidistance(g.dilate(l, a), g.dilate(l, b)) / l, g.quasidistance(a, b)));
    norm_homog = std::max(norm_homog, scalar_error(g.homogeneous_norm(g.dilate(l, a)) / l, g.homogeneous_norm(a)));
    autom = std::max(autom, point_error(g.dilate(l, g.compose(a, b)), g.compose(g.dilate(l, a), g.dilate(l, b))));
    const double t1 = unit(rng);
    const double t2 = unit(rng);
    exp_law = std::max(exp_law, max_abs_diff(g.exp_drift(t1 + t2), g.exp_drift(t1) * g.exp_drift(t2)));
    const Point bt{b.x, a.t};
    equal_time = std::max(equal_time, std::abs(g.quasidistance(a, bt) - g.quasidistance(bt, a)));
  }
  return {make_check("associativity", samples, assoc, tol),
          make_check("inverse", samples, inverse, tol),
          make_check("relative_translation", samples, relative, tol),
          make_check("left_invariance", samples, left, tol),
          make_check("distance_homogeneity", samples, homog, tol),
          make_check("norm_homogeneity", samples, norm_homog, tol),
          make_check("dilation_automorphism", samples, autom, tol),
          make_check("exponential_law", samples, exp_law, tol),
          make_check("equal_time_symmetry", samples, equal_time, tol)};
}

inline json geometry_json(const Geometry& g) {
  const GeometryInfo& info = g.info();
  json j = {{"N", g.N()}, {"q", g.q()}, {"exponents", info.exponents}, {"Q", info.Q},
            {"Qplus2", info.Qplus2}, {"nilpotency_index", info.nilpotency_index}};
  if (info.kappa) j["kappa"] = *info.kappa;
  if (info.omega) j["omega"] = *info.omega;
  return j;
}

struct KernelSuiteOptions {
  std::size_t normalization_samples = 50;
  std::size_t hessian_samples = 1000;
  std::size_t residual_samples = 200;
  std::uint64_t seed = 0;
  int chart_nodes = 32;
};

/// Random (x, t, s) with t - s log-uniform in [1e-3, 10] and x in [-1, 1]^N.
struct KernelSample {
  Vector x;
  double t;
  double s;
};

inline std::vector<KernelSample> kernel_samples(int n, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<KernelSample> out;
  for (std::size_t k = 0; k < count; ++k) {
    Vector x(n);
    for (int i = 0; i < n; ++i) x[i] = unit(rng);
    const double s = unit(rng);
    const double tau = std::pow(10.0, -3.0 + 4.0 * 0.5 * (unit(rng) + 1.0));
    out.push_back({x, s + tau, s});
  }
  return out;
}

/// Relative residual of L Gamma(., eta) at xi, by finite differences of the
/// kernel value in every variable, scaled by the sum of the term magnitudes.
inline double kernel_pde_residual(const ModelOperator& op, const Point& xi, const Point& eta) {
  const Geometry& g = op.geometry();
  const int n = g.N();
  const double tau = xi.t - eta.t;
  const double eps4 = std::pow(std::numeric_limits<double>::epsilon(), 0.25);
  const auto val = [&](const Vector& x, double t) { return gamma(op, {x, t}, eta).value; };
  const double g0 = val(xi.x, xi.t);
  const Matrix a = op.path().at(xi.x, xi.t);
  double second = 0.0;
  double second_abs = 0.0;
  const Vector scale = g.dilation_diagonal(std::sqrt(tau));
  for (int i = 0; i < op.q(); ++i)
    for (int j = 0; j < op.q(); ++j) {
      if (a(i, j) == 0.0) continue;
      const double hi = eps4 * scale[i];
      const double hj = eps4 * scale[j];
      Vector pp = xi.x, pm = xi.x, mp = xi.x, mm = xi.x;
      double d2;
      if (i == j) {
        pp[i] += hi;
        mm[i] -= hi;
        d2 = (val(pp, xi.t) - 2.0 * g0 + val(mm, xi.t)) / (hi * hi);
      } else {
        pp[i] += hi, pp[j] += hj;
        pm[i] += hi, pm[j] -= hj;
        mp[i] -= hi, mp[j] += hj;
        mm[i] -= hi, mm[j] -= hj;
        d2 = (val(pp, xi.t) - val(pm, xi.t) - val(mp, xi.t) + val(mm, xi.t)) / (4.0 * hi * hj);
      }
      second += a(i, j) * d2;
      second_abs += std::abs(a(i, j) * d2);
    }
  const double eps3 = std::cbrt(std::numeric_limits<double>::epsilon());
  const Vector bx = g.drift() * xi.x;
  double drift = 0.0;
  double drift_abs = 0.0;
  for (int k = 0; k < n; ++k) {
    if (bx[k] == 0.0) continue;
    const double h = eps3 * scale[k];
    Vector p = xi.x, m = xi.x;
    p[k] += h;
    m[k] -= h;
    const double d = bx[k] * (val(p, xi.t) - val(m, xi.t)) / (2.0 * h);
    drift += d;
    drift_abs += std::abs(d);
  }
  const double ht = eps3 * tau;
  const double dt = (val(xi.x, xi.t + ht) - val(xi.x, xi.t - ht)) / (2.0 * ht);
  const double scale_sum = second_abs + drift_abs + std::abs(dt);
  if (scale_sum == 0.0) return 0.0;
  return std::abs(second + drift - dt) / scale_sum;
}

/// Max over entries of |H_fd - H| / max |H|, where H_fd differentiates the
/// analytic gradient centrally with h_i = eps^{1/3} (t - s)^{q_i / 2}; the
/// gradient itself is checked against differences of the value.
struct DerivativeCheck {
  double hessian = 0.0;
  double gradient = 0.0;
};

inline DerivativeCheck derivative_fd_error(const ModelOperator& op, const Point& xi, const Point& eta) {
  const Geometry& g = op.geometry();
  const int q = op.q();
  const int n = op.N();
  const double tau = xi.t - eta.t;
  const double eps3 = std::cbrt(std::numeric_limits<double>::epsilon());
  const Vector scale = g.dilation_diagonal(std::sqrt(tau));
  const KernelEval k0 = gamma(op, xi, eta);
  Matrix hfd(q, q);
  Vector gfd(n);
  for (int j = 0; j < n; ++j) {
    const double h = eps3 * scale[j];
    Point p = xi, m = xi;
    p.x[j] += h;
    m.x[j] -= h;
    const KernelEval kp = gamma(op, p, eta);
    const KernelEval km = gamma(op, m, eta);
    gfd[j] = (kp.value - km.value) / (2.0 * h);
    if (j < q)
      for (int i = 0; i < q; ++i) hfd(i, j) = (kp.grad_x[i] - km.grad_x[i]) / (2.0 * h);
  }
  DerivativeCheck out;
  const double hmax = k0.hess_x.cwiseAbs().maxCoeff();
  const double gmax = k0.grad_x.cwiseAbs().maxCoeff();
  out.hessian = hmax > 0.0 ? (hfd - k0.hess_x).cwiseAbs().maxCoeff() / hmax : 0.0;
  out.gradient = gmax > 0.0 ? (gfd - k0.grad_x).cwiseAbs().maxCoeff() / gmax : 0.0;
  return out;
}

inline bool near_breakpoint(const CoefficientPath& path, double t, double s, double margin) {
  for (double b : path.breakpoints())
    if (std::abs(t - b) < margin || std::abs(s - b) < margin) return true;
  return false;
}

/// Normalization, vanishing derivative integrals, derivative checks, PDE
/// residual, plus the constant-coefficient identities where they apply.
inline std::vector<CheckResult> kernel_suite(const ModelOperator& op, const KernelSuiteOptions& opt = {}) {
  const Geometry& g = op.geometry();
  const int n = g.N();
  std::vector<CheckResult> out;
  const auto samples = kernel_samples(n, opt.normalization_samples, opt.seed);
  const GaussianChart chart(n, opt.chart_nodes);
  double norm_err = 0.0;
  double first_err = 0.0;
  for (const auto& smp : samples) {
    // public gamma() at the chart nodes, weighted by the bare rule and the chart Jacobian
    const KernelFrame frame(op, smp.t, smp.s);
    const Vector base = frame.exp_backward() * smp.x;
    double acc = 0.0;
    for (std::size_t k = 0; k < chart.nodes.size(); ++k) {
      const Vector y = base - frame.chart() * chart.nodes[k];
      acc += chart.plain_weights[k] * gamma(op, {smp.x, smp.t}, {y, smp.s}).value;
    }
    norm_err = std::max(norm_err, std::abs(acc * frame.chart_jacobian() - 1.0));
    for (int i = 0; i < n; ++i) {
      if (g.exponent(i) > kMaxWeightedOrder) continue;
      MultiIndex l(static_cast<std::size_t>(n), 0);
      l[static_cast<std::size_t>(i)] = 1;
      // scale by the typical size of d_i Gamma integrated in |.|, (t - s)^{-q_i/2}
      const double typical = std::pow(smp.t - smp.s, -0.5 * g.exponent(i));
      first_err = std::max(first_err, std::abs(gamma_derivative_integrals(op, smp.x, smp.t, smp.s, l, opt.chart_nodes)) / typical);
    }
  }
  out.push_back(make_check("normalization", samples.size(), norm_err, 1e-6));
  out.push_back(make_check("first_derivative_integrals", samples.size() * static_cast<std::size_t>(n), first_err, 1e-6));

  const auto dsamples = kernel_samples(n, opt.hessian_samples, opt.seed + 1);
  double hess = 0.0;
  double grad = 0.0;
  std::size_t used = 0;
  for (const auto& smp : dsamples) {
    if (near_breakpoint(op.path(), smp.t, smp.s, 1e-3 * (smp.t - smp.s))) continue;
    // x = 2 L z with z in [-2, 2]^N keeps Gamma well above underflow
    const KernelFrame frame(op, smp.t, smp.s);
    const Point xi{2.0 * frame.cholesky() * (2.0 * smp.x), smp.t};
    const DerivativeCheck d = derivative_fd_error(op, xi, {Vector::Zero(n), smp.s});
    hess = std::max(hess, d.hessian);
    grad = std::max(grad, d.gradient);
    ++used;
  }
  out.push_back(make_check("hessian_vs_fd", used, hess, 1e-6));
  out.push_back(make_check("gradient_vs_fd", used, grad, 1e-6));

  const auto rsamples = kernel_samples(n, opt.residual_samples, opt.seed + 2);
  double res = 0.0;
  used = 0;
  for (const auto& smp : rsamples) {
    const double tau = smp.t - smp.s;
    if (near_breakpoint(op.path(), smp.t, smp.s, 1e-2 * tau)) continue;  // PDE residual undefined at jumps
    // stay at moderate Mahalanobis distance so Gamma is not below rounding
    const KernelFrame frame(op, smp.t, smp.s);
    const Vector z = smp.x.normalized() * 1.5;
    const Vector x = 2.0 * frame.cholesky() * z;
    res = std::max(res, kernel_pde_residual(op, {x, smp.t}, {Vector::Zero(n), smp.s}));
    ++used;
  }
  out.push_back(make_check("pde_residual", used, res, 1e-4));

  if (op.path().is_constant()) {
    double conv = 0.0;
    double homog = 0.0;
    for (const auto& smp : samples) {
      Vector y(n);
      for (int i = 0; i < n; ++i) y[i] = 0.5 * smp.x[(i + 1) % n];
      const Point xi{smp.x, smp.t};
      const Point eta{y, smp.s};
      const Point rel = g.relative(eta, xi);
      const double direct = gamma(op, xi, eta).value;
      const double shifted = gamma(op, rel, {Vector::Zero(n), 0.0}).value;
      conv = std::max(conv, std::abs(direct - shifted) / std::max(direct, 1e-300));
      const Matrix exact = covariance(op, smp.t, smp.s, CovarianceMethod::ExactPiecewise).C;
      const Matrix hom = covariance(op, smp.t, smp.s, CovarianceMethod::HomogeneousClosedForm).C;
      // entrywise relative to the diagonal scale sqrt(C_ii C_jj)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          homog = std::max(homog, std::abs(exact(i, j) - hom(i, j)) / std::sqrt(exact(i, i) * exact(j, j)));
    }
    out.push_back(make_check("convolution_identity", samples.size(), conv, 1e-12));
    out.push_back(make_check("covariance_homogeneity", samples.size(), homog, 1e-12));
  }
  return out;
}

inline json report_json(const std::string& command, const json& spec, const std::vector<CheckResult>& checks,
                        json extra = json::object()) {
  json j = {{"schema_version", kReportSchemaVersion}, {"tool_version", kToolVersion}, {"command", command},
            {"spec_hash", spec_hash(spec)}};
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  json arr = json::array();
  for (const auto& c : checks) arr.push_back(c.to_json());
  j["checks"] = arr;
  j["pass"] = all_pass(checks);
  return j;
}

}  // namespace kfp
