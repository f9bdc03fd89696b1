#pragma once

// Singular integral operators with kernel d^2_{x_i x_j} Gamma:
//   T_ij f(x,t)   = int d^2 Gamma(x,t;y,s) [f(E(s-t)x, s) - f(y,s)] dy ds,
//   T^eps_ij f    = -int phi_eps(t-s) d^2 Gamma(x,t;y,s) f(y,s) dy ds.

#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "kfp/cauchy_solver.hpp"

namespace kfp {

/// phi_eps(tau) = 0 for tau <= eps, 1 for tau >= 2 eps, and the quintic
/// smoothstep 6r^5 - 15r^4 + 10r^3 in r = tau/eps - 1 between;
/// |phi'| <= 1.875 / eps.
struct TruncationProfile {
  double epsilon = 0.1;

  static constexpr double kDerivativeBound = 2.0;

  [[nodiscard]] double operator()(double tau) const {
    if (tau <= epsilon) return 0.0;
    if (tau >= 2.0 * epsilon) return 1.0;
    const double r = tau / epsilon - 1.0;
    return r * r * r * (10.0 + r * (-15.0 + 6.0 * r));
  }

  [[nodiscard]] double derivative(double tau) const {
    if (tau <= epsilon || tau >= 2.0 * epsilon) return 0.0;
    const double r = tau / epsilon - 1.0;
    return 30.0 * r * r * (1.0 - r) * (1.0 - r) / epsilon;
  }
};

/// Discrete partial Holder seminorm sup |f(x,t) - f(y,t)| / d((x,t),(y,t))^alpha
/// over node pairs of each time slice at most `reach` steps apart per axis.
inline double holder_seminorm_x(const Geometry& g, const GridFunction& f, double alpha, int reach = 2) {
  const int n = f.n_space();
  double sup = 0.0;
  std::vector<int> off(static_cast<std::size_t>(n), -reach);
  std::vector<std::vector<int>> offsets;
  while (true) {
    bool nonzero = false;
    for (int v : off) nonzero = nonzero || v != 0;
    if (nonzero) offsets.push_back(off);
    int a = 0;
    while (a < n && ++off[static_cast<std::size_t>(a)] > reach) off[static_cast<std::size_t>(a++)] = -reach;
    if (a == n) break;
  }
  for (std::size_t k = 0; k < f.size(); ++k) {
    const Point p = f.point(k);
    for (const auto& o : offsets) {
      std::size_t other = k;
      bool inside = true;
      Vector y = p.x;
      for (int a = 0; a < n && inside; ++a) {
        const int i = f.index(k, a) + o[static_cast<std::size_t>(a)];
        if (i < 0 || i >= f.extent(a)) inside = false;
        else {
          other = other + static_cast<std::size_t>(static_cast<long>(f.stride(a)) * o[static_cast<std::size_t>(a)]);
          y[a] = f.coordinate(a, i);
        }
      }
      if (!inside) continue;
      const double d = g.space_norm(p.x - y);
      sup = std::max(sup, std::abs(f[k] - f[other]) / std::pow(d, alpha));
    }
  }
  return sup;
}

inline void require_holder(const Geometry& g, const GridFunction& f, double alpha, double threshold) {
  const double h = holder_seminorm_x(g, f, alpha);
  require(std::isfinite(h) && h <= threshold, ErrorCode::HolderSeminormUnbounded,
          "discrete C^alpha_x seminorm " + std::to_string(h) + " exceeds " + std::to_string(threshold));
}

/// T_ij f on the output grid (difference form).
inline GridFunction apply_Tij(const ModelOperator& op, const ScalarField& f, int i, int j, const Box& out_box,
                              const std::vector<int>& shape, const SolverOptions& opt = {}) {
  require(i >= 0 && j >= 0 && i < op.q() && j < op.q(), ErrorCode::InvalidArgument, "need 1 <= i, j <= q");
  return kernel_potential(op, f, out_box, shape, KernelDerivative::second(i, j), opt, -1.0);
}

/// Grid input: compact support is checked, and the Holder seminorm against `holder_threshold`.
inline GridFunction apply_Tij(const ModelOperator& op, const GridFunction& f, int i, int j, double alpha,
                              double holder_threshold, const SolverOptions& opt = {}) {
  require_holder(op.geometry(), f, alpha, holder_threshold);
  return apply_Tij(op, compact_source(f), i, j, f.box(), f.shape(), opt);
}

/// T^eps_ij f. The lag axis is split at eps and 2 eps; where phi_eps = 1 the
/// integral equals the difference form, which is what is evaluated.
inline GridFunction apply_Tij_eps(const ModelOperator& op, const ScalarField& f, int i, int j,
                                  const TruncationProfile& profile, const Box& out_box, const std::vector<int>& shape,
                                  const SolverOptions& opt = {}) {
  require(i >= 0 && j >= 0 && i < op.q() && j < op.q(), ErrorCode::InvalidArgument, "need 1 <= i, j <= q");
  require(profile.epsilon > 0.0, ErrorCode::InvalidArgument, "epsilon must be positive");
  LagWindow window;
  window.min_lag = profile.epsilon;
  window.breakpoints = {2.0 * profile.epsilon};
  window.weight = [profile](double tau) { return profile(tau); };
  return kernel_potential(op, f, out_box, shape, KernelDerivative::second(i, j), opt, -1.0, window);
}

/// T_ij f - T^eps_ij f, the contribution of lags below 2 eps.
inline GridFunction truncation_gap(const ModelOperator& op, const ScalarField& f, int i, int j,
                                   const TruncationProfile& profile, const Box& out_box,
                                   const std::vector<int>& shape, const SolverOptions& opt = {}) {
  LagWindow window;
  window.max_lag = 2.0 * profile.epsilon;
  window.breakpoints = {profile.epsilon};
  window.weight = [profile](double tau) { return 1.0 - profile(tau); };
  return kernel_potential(op, f, out_box, shape, KernelDerivative::second(i, j), opt, -1.0, window);
}

/// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    mx += std::log(x[k]);
    my += std::log(y[k]);
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    sxy += (std::log(x[k]) - mx) * (std::log(y[k]) - my);
    sxx += (std::log(x[k]) - mx) * (std::log(x[k]) - mx);
  }
  return sxy / sxx;
}

struct OperatorNormReport {
  std::vector<double> epsilons;
  std::vector<double> norms;  ///< max over the bank of ||T^eps f||_p / ||f||_p
  double variation = 0.0;     ///< max / min over the ladder
};

/// Max over the bank of ||T^eps_ij f||_p / ||f||_p for every eps and p. Norms
/// are Riemann sums on the output grid, which must contain the supports.
inline std::vector<OperatorNormReport> empirical_operator_norm(const ModelOperator& op, int i, int j,
                                                               const std::vector<double>& epsilons,
                                                               const std::vector<ScalarField>& bank,
                                                               const std::vector<double>& ps, const Box& out_box,
                                                               const std::vector<int>& shape,
                                                               const SolverOptions& opt = {}) {
  require(!bank.empty(), ErrorCode::EmptyBank, "operator norm needs a nonempty test bank");
  require(!epsilons.empty(), ErrorCode::EmptyLadder, "operator norm needs an epsilon ladder");
  for (double p : ps) require(p > 1.0 && std::isfinite(p), ErrorCode::InvalidArgument, "p must lie in (1, inf)");
  std::vector<OperatorNormReport> out(ps.size());
  for (auto& r : out) {
    r.epsilons = epsilons;
    r.norms.assign(epsilons.size(), 0.0);
  }
  for (const auto& f : bank) {
    const GridFunction fg = GridFunction::sample(f, out_box, shape);
    for (std::size_t e = 0; e < epsilons.size(); ++e) {
      const GridFunction tf = apply_Tij_eps(op, f, i, j, TruncationProfile{epsilons[e]}, out_box, shape, opt);
      for (std::size_t k = 0; k < ps.size(); ++k) {
        const double denom = fg.lp_norm(ps[k]);
        if (denom > 0.0) out[k].norms[e] = std::max(out[k].norms[e], tf.lp_norm(ps[k]) / denom);
      }
    }
  }
  for (auto& r : out) {
    const auto [lo, hi] = std::minmax_element(r.norms.begin(), r.norms.end());
    r.variation = *lo > 0.0 ? *hi / *lo : std::numeric_limits<double>::infinity();
  }
  return out;
}

/// Seeded bank of compactly supported test functions inside `box`: products
/// of bumps with random anisotropic widths, half of them modulated by an
/// oscillation along x_1 of half a period to one and a half periods per envelope
/// width, so every member varies on the scale of its own envelope.
inline std::vector<Expr> make_test_bank(int n_space, const Box& box, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Expr> bank;
  char buf[128];
  for (std::size_t k = 0; k < count; ++k) {
    std::string text;
    double width_x1 = 1.0;
    for (int a = 0; a <= n_space; ++a) {
      const double lo = box.lo[a];
      const double hi = box.hi[a];
      const double half = 0.5 * (hi - lo);
      const double width = half * (0.3 + 0.6 * unit(rng));
      const double center = lo + width + (hi - lo - 2.0 * width) * unit(rng);
      if (a == 0) width_x1 = width;
      const std::string var = a < n_space ? "x" + std::to_string(a + 1) : "t";
      std::snprintf(buf, sizeof buf, "bump(%s, %.17g, %.17g)", var.c_str(), center, width);
      if (!text.empty()) text += " * ";
      text += buf;
    }
    if (k % 2 == 1) {
      const double k = std::numbers::pi * (0.5 + unit(rng)) / width_x1;
      std::snprintf(buf, sizeof buf, " * cos(%.17g * x1 + %.17g)", k, 2.0 * std::numbers::pi * unit(rng));
      text += buf;
    }
    bank.push_back(Expr::parse(text, n_space));
  }
  return bank;
}

struct KernelEstimatesReport {
  double size_constant = 0.0;        ///< sup (|K(xi,eta)| + |K(eta,xi)|) |B_{d(xi,eta)}|
  double smoothness_constant = 0.0;  ///< mean-value ratio over admissible triples
  double cancellation_constant = 0.0;
  std::size_t admissible = 0;
  std::size_t rejected = 0;
  GaussianBoundReport size_ladder;
};

/// Empirical constants of the standard kernel estimates for K = d^2_{x_i x_j} Gamma.
inline KernelEstimatesReport kernel_standard_estimates(const ModelOperator& op, int i, int j,
                                                       const std::vector<SamplePair>& pairs,
                                                       const std::vector<SampleTriple>& triples,
                                                       const std::vector<double>& radii, double tau_window = 1.0) {
  const Geometry& g = op.geometry();
  require(g.info().kappa.has_value() && g.info().omega.has_value(), ErrorCode::InvalidArgument,
          "kernel estimates need calibrated kappa and omega");
  const double omega = *g.info().omega;
  const double kappa = *g.info().kappa;
  KernelEstimatesReport rep;
  for (const auto& pr : pairs) {
    if (pr.xi.t <= pr.eta.t) continue;
    const KernelEval k = gamma(op, pr.xi, pr.eta);
    const double d = g.quasidistance(pr.xi, pr.eta);
    rep.size_constant = std::max(rep.size_constant, std::abs(k.hess_x(i, j)) * omega * std::pow(d, g.info().Qplus2));
  }
  for (const auto& tr : triples) {
    if (!mean_value_admissible(g, tr, kappa)) {
      ++rep.rejected;
      continue;
    }
    ++rep.admissible;
    const double d12 = g.quasidistance(tr.xi1, tr.xi2);
    const KernelEval k1 = gamma(op, tr.xi1, tr.eta);
    const KernelEval k2 = gamma(op, tr.xi2, tr.eta);
    const double r = std::abs(k1.hess_x(i, j) - k2.hess_x(i, j)) * omega *
                     std::pow(g.quasidistance(tr.xi1, tr.eta), g.info().Qplus2 + 1) / d12;
    rep.smoothness_constant = std::max(rep.smoothness_constant, r);
  }
  const Vector x0 = Vector::Zero(g.N());
  for (double r : radii) {
    const CancellationResult c = cancellation_integrals(op, x0, tau_window, r, 0.0, i, j);
    rep.cancellation_constant = std::max({rep.cancellation_constant, c.I, c.J});
  }
  rep.size_ladder = check_gaussian_bound(op, pairs);
  return rep;
}

}  // namespace kfp
