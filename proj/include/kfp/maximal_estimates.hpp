#pragma once

// Maximal functions, partial VMO moduli and coverings for the quasimetric
// d, plus the empirical checks of the oscillation and a priori estimates.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "kfp/grid.hpp"
#include "kfp/model_operator.hpp"

namespace kfp {

/// Nodes of `f`'s grid inside B_r(center) = {eta : d(eta, center) < r}.
inline std::vector<std::size_t> ball_nodes(const Geometry& g, const GridFunction& f, const Point& center, double r) {
  const Box bb = g.ball_bounding_box(center, r);
  const int d = f.dims();
  std::vector<int> lo(static_cast<std::size_t>(d));
  std::vector<int> hi(static_cast<std::size_t>(d));
  for (int a = 0; a < d; ++a) {
    const double h = f.spacing(a);
    lo[static_cast<std::size_t>(a)] = std::max(0, static_cast<int>(std::ceil((bb.lo[a] - f.box().lo[a]) / h - 1e-9)));
    hi[static_cast<std::size_t>(a)] =
        std::min(f.extent(a) - 1, static_cast<int>(std::floor((bb.hi[a] - f.box().lo[a]) / h + 1e-9)));
    if (hi[static_cast<std::size_t>(a)] < lo[static_cast<std::size_t>(a)]) return {};
  }
  std::vector<std::size_t> out;
  std::vector<int> idx = lo;
  const int n = d - 1;
  Point p{Vector(n), 0.0};
  while (true) {
    for (int a = 0; a < n; ++a) p.x[a] = f.coordinate(a, idx[static_cast<std::size_t>(a)]);
    p.t = f.coordinate(n, idx[static_cast<std::size_t>(n)]);
    if (g.quasidistance(p, center) < r) out.push_back(f.flat(idx));
    int a = 0;
    while (a < d && ++idx[static_cast<std::size_t>(a)] > hi[static_cast<std::size_t>(a)]) {
      idx[static_cast<std::size_t>(a)] = lo[static_cast<std::size_t>(a)];
      ++a;
    }
    if (a == d) break;
  }
  return out;
}

namespace detail {

// For every node c and radius r, `visit(members, c)` on the node set of
// B_r(c); balls are streamed, never stored.
template <class Visit>
void for_each_grid_ball(const Geometry& g, const GridFunction& f, const std::vector<double>& radii, Visit&& visit) {
  for (std::size_t c = 0; c < f.size(); ++c) {
    const Point center = f.point(c);
    for (double r : radii) visit(ball_nodes(g, f, center, r), c);
  }
}

}  // namespace detail

/// Uncentered Hardy-Littlewood maximal function of |f|, approximated by the
/// centered grid balls of the ladder that contain each node; the node's own
/// value (a vanishing ball) is always included, so Mf >= |f| exactly.
inline GridFunction hl_maximal(const Geometry& g, const GridFunction& f, const std::vector<double>& radii) {
  require(!radii.empty(), ErrorCode::EmptyLadder, "maximal function needs a radius ladder");
  GridFunction m = f.like();
  for (std::size_t k = 0; k < f.size(); ++k) m[k] = std::abs(f[k]);
  detail::for_each_grid_ball(g, f, radii, [&](const std::vector<std::size_t>& nodes, std::size_t) {
    if (nodes.empty()) return;
    double acc = 0.0;
    for (std::size_t k : nodes) acc += std::abs(f[k]);
    const double avg = acc / static_cast<double>(nodes.size());
    for (std::size_t k : nodes) m[k] = std::max(m[k], avg);
  });
  return m;
}

/// Sharp maximal function: largest mean oscillation (1/|B|) int_B |f - f_B|
/// over the same ball family as hl_maximal.
inline GridFunction sharp_maximal(const Geometry& g, const GridFunction& f, const std::vector<double>& radii) {
  require(!radii.empty(), ErrorCode::EmptyLadder, "sharp maximal function needs a radius ladder");
  GridFunction m = f.like();
  detail::for_each_grid_ball(g, f, radii, [&](const std::vector<std::size_t>& nodes, std::size_t) {
    if (nodes.empty()) return;
    double mean = 0.0;
    for (std::size_t k : nodes) mean += f[k];
    mean /= static_cast<double>(nodes.size());
    double osc = 0.0;
    for (std::size_t k : nodes) osc += std::abs(f[k] - mean);
    osc /= static_cast<double>(nodes.size());
    for (std::size_t k : nodes) m[k] = std::max(m[k], osc);
  });
  return m;
}

struct VMOReport {
  std::vector<double> radii;
  std::vector<double> eta;  ///< partial VMO_x modulus, a lower bound (sampled centers)
  std::size_t centers = 0;
};

/// eta_f(r) = sup over sampled centers and rho <= r of
///   (1/|B|) int_B |f(y,s) - f(., s)_B| dy ds,
/// where the partial mean f(., s)_B averages f(y', s) over all (y', s') in B
/// at the fixed time s. Centers are every `stride`-th node per axis whose ball
/// for the largest radius lies inside the grid box.
inline VMOReport vmo_modulus(const Geometry& g, const GridFunction& f, const std::vector<double>& radii,
                             int stride = 2) {
  require(!radii.empty(), ErrorCode::EmptyLadder, "VMO modulus needs radii");
  std::vector<double> sorted = radii;
  std::sort(sorted.begin(), sorted.end());
  const int n = f.n_space();
  VMOReport rep;
  rep.radii = sorted;
  rep.eta.assign(sorted.size(), 0.0);
  const std::size_t slice = f.slice_size();
  for (std::size_t c = 0; c < f.size(); ++c) {
    bool on_stride = true;
    for (int a = 0; a <= n; ++a) on_stride = on_stride && f.index(c, a) % stride == 0;
    if (!on_stride) continue;
    const Point center = f.point(c);
    const Box bb = g.ball_bounding_box(center, sorted.back());
    bool inside = true;
    for (int a = 0; a <= n; ++a) inside = inside && bb.lo[a] >= f.box().lo[a] && bb.hi[a] <= f.box().hi[a];
    if (!inside) continue;
    ++rep.centers;
    for (std::size_t r = 0; r < sorted.size(); ++r) {
      const std::vector<std::size_t> nodes = ball_nodes(g, f, center, sorted[r]);
      if (nodes.empty()) continue;
      // partial means per time index present in the ball
      std::vector<int> times;
      for (std::size_t k : nodes) times.push_back(f.index(k, n));
      std::sort(times.begin(), times.end());
      times.erase(std::unique(times.begin(), times.end()), times.end());
      std::vector<double> means(times.size(), 0.0);
      for (std::size_t ti = 0; ti < times.size(); ++ti) {
        double acc = 0.0;
        for (std::size_t k : nodes) {
          const std::size_t space = k % slice;
          acc += f[static_cast<std::size_t>(times[ti]) * slice + space];
        }
        means[ti] = acc / static_cast<double>(nodes.size());
      }
      double osc = 0.0;
      for (std::size_t k : nodes) {
        const int ti = f.index(k, n);
        const auto it = std::lower_bound(times.begin(), times.end(), ti);
        osc += std::abs(f[k] - means[static_cast<std::size_t>(it - times.begin())]);
      }
      osc /= static_cast<double>(nodes.size());
      rep.eta[r] = std::max(rep.eta[r], osc);
    }
  }
  require(rep.centers > 0, ErrorCode::RadiusExceedsBox, "no ball of the largest radius fits in the grid box");
  for (std::size_t r = 1; r < rep.eta.size(); ++r) rep.eta[r] = std::max(rep.eta[r], rep.eta[r - 1]);
  return rep;
}

/// a#(R) = max over i, j <= q of eta_{a_ij}(R) for the sampled coefficient entries.
inline VMOReport coefficient_vmo(const ModelOperator& op, const Box& box, const std::vector<int>& shape,
                                 const std::vector<double>& radii, int stride = 2) {
  VMOReport out;
  for (int i = 0; i < op.q(); ++i)
    for (int j = i; j < op.q(); ++j) {
      const CoefficientPath path = op.path();
      const int n = op.N();
      const ScalarField a{[path, i, j, n](const double* x, double t) {
                            return path.at(Eigen::Map<const Vector>(x, n), t)(i, j);
                          },
                          std::nullopt};
      const VMOReport r = vmo_modulus(op.geometry(), GridFunction::sample(a, box, shape), radii, stride);
      if (out.eta.empty()) out = r;
      else
        for (std::size_t k = 0; k < r.eta.size(); ++k) out.eta[k] = std::max(out.eta[k], r.eta[k]);
    }
  return out;
}

struct BallFamily {
  std::vector<Point> centers;
  double radius = 0.0;
  double dilation = 1.0;
  int overlap_bound = 0;  ///< max number of H-dilated balls containing a grid node
  bool covers = false;    ///< every grid node lies in some B_R(center)
};

/// Greedy maximal R/2-separated set of grid nodes (in grid order); each node
/// not within R/2 of an earlier center becomes a center.
inline BallFamily build_covering(const Geometry& g, const Box& box, const std::vector<int>& shape, double R, double H) {
  require(R > 0.0, ErrorCode::InvalidArgument, "covering radius must be positive");
  require(H > 1.0, ErrorCode::InvalidArgument, "dilation factor must exceed 1");
  const GridFunction grid(box, shape);
  BallFamily fam;
  fam.radius = R;
  fam.dilation = H;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const Point p = grid.point(k);
    bool near = false;
    for (const Point& c : fam.centers)
      if (g.quasidistance(p, c) < 0.5 * R) {
        near = true;
        break;
      }
    if (!near) fam.centers.push_back(p);
  }
  fam.covers = true;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const Point p = grid.point(k);
    int count = 0;
    bool covered = false;
    for (const Point& c : fam.centers) {
      const double d = g.quasidistance(p, c);
      covered = covered || d < R;
      if (d < H * R) ++count;
    }
    fam.covers = fam.covers && covered;
    fam.overlap_bound = std::max(fam.overlap_bound, count);
  }
  return fam;
}

/// Box D(lambda)(box) for boxes symmetric under the dilation center 0.
inline Box dilate_box(const Geometry& g, double lambda, const Box& box) {
  Box out = box;
  const int n = g.N();
  for (int i = 0; i < n; ++i) {
    const double s = std::pow(lambda, g.exponent(i));
    out.lo[i] *= s;
    out.hi[i] *= s;
  }
  out.lo[n] *= lambda * lambda;
  out.hi[n] *= lambda * lambda;
  return out;
}

// ---------------------------------------------------------------------------
// Monte Carlo ball averages for closed-form functions.

/// Uniform samples of the unit ball B_1(0); B_r(c) samples are c o D(r) zeta.
inline std::vector<Point> unit_ball_samples(const Geometry& g, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Box cube = Box::cube(g.N(), 1.0);
  const Point origin{Vector::Zero(g.N()), 0.0};
  std::vector<Point> out;
  out.reserve(count);
  while (out.size() < count) {
    Point p = uniform_point(cube, rng);
    if (g.homogeneous_norm(p) < 1.0) out.push_back(std::move(p));
  }
  (void)origin;
  return out;
}

template <class F>
double ball_average(const Geometry& g, const std::vector<Point>& unit, const Point& center, double r, F&& f) {
  double acc = 0.0;
  for (const Point& z : unit) acc += f(g.compose(center, g.dilate(r, z)));
  return acc / static_cast<double>(unit.size());
}

struct DoublingReport {
  std::vector<double> radii;
  std::vector<double> ratios;  ///< |B_{2r}| / |B_r|
  double bound = 0.0;          ///< 2^{Q+2}
  double tolerance = 0.0;
  bool pass = false;
};

inline DoublingReport doubling_witness(const Geometry& g, const std::vector<double>& radii, std::size_t mc,
                                       std::uint64_t seed, double tolerance = 0.05) {
  std::mt19937_64 rng(seed);
  DoublingReport rep;
  rep.radii = radii;
  rep.bound = std::pow(2.0, g.info().Qplus2);
  rep.tolerance = tolerance;
  rep.pass = true;
  const Point origin{Vector::Zero(g.N()), 0.0};
  for (double r : radii) {
    const Box b1 = g.ball_bounding_box(origin, r);
    const Box b2 = g.ball_bounding_box(origin, 2.0 * r);
    const double v1 = measure_ball(g, origin, r, mc, b1, rng).volume;
    const double v2 = measure_ball(g, origin, 2.0 * r, mc, b2, rng).volume;
    rep.ratios.push_back(v2 / v1);
    rep.pass = rep.pass && v2 / v1 <= rep.bound * (1.0 + tolerance);
  }
  return rep;
}

/// Fraction of B_r(center) with time below center.t, i.e. the half ball at a
/// strip's upper edge; should be at least 1/2.
inline double half_ball_fraction(const Geometry& g, const Point& center, double r, std::size_t mc, std::uint64_t seed) {
  const std::vector<Point> unit = unit_ball_samples(g, mc, seed);
  return ball_average(g, unit, center, r, [&](const Point& p) { return p.t <= center.t ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Oscillation estimate.

struct OscillationRow {
  double k = 0.0;
  double r = 0.0;
  double ratio = 0.0;  ///< max over the bank and samples of LHS / RHS bracket
};

struct OscillationReport {
  std::vector<OscillationRow> rows;
  double constant = 0.0;  ///< max ratio
  std::vector<double> per_k;  ///< max ratio for each k
  std::vector<double> per_r;  ///< max ratio for each r
};

struct OscillationOptions {
  std::vector<double> k_ladder;  ///< multiples of kappa are typical
  std::vector<double> r_ladder{0.25, 0.5};
  std::vector<double> maximal_radii{0.125, 0.25, 0.5, 1.0, 2.0};
  std::size_t centers = 4;       ///< sampled (xi_bar, xi_0) pairs per u
  std::size_t mc = 2000;         ///< Monte Carlo points per ball
  double p = 2.0;
  int i = 0;
  int j = 0;
  std::uint64_t seed = 0;
  Box center_box;                ///< where xi_bar is drawn
};

/// Empirical constant c in
///   (1/|B_r|) int_{B_r(xi_bar)} |u_ij - (u_ij)_B|
///     <= c { (1/k) M(Lu)(xi_0) + k^{(Q+2)/p} ((1/|B_kr|) int_{B_kr(xi_bar)} |Lu|^p)^{1/p} },
/// xi_0 in B_r(xi_bar), k >= 4 kappa. M is approximated by averages over the
/// balls of `maximal_radii` centered at xi_0.
inline OscillationReport check_oscillation_bound(const ModelOperator& op, const std::vector<Expr>& u_bank,
                                                 const OscillationOptions& opt) {
  const Geometry& g = op.geometry();
  require(g.info().kappa.has_value(), ErrorCode::InvalidArgument, "oscillation check needs a calibrated kappa");
  const double kappa = *g.info().kappa;
  for (double k : opt.k_ladder) require(k >= 4.0 * kappa, ErrorCode::KTooSmall, "k must be at least 4 kappa");
  require(!opt.k_ladder.empty() && !opt.r_ladder.empty(), ErrorCode::EmptyLadder, "empty k or r ladder");
  const std::vector<Point> unit = unit_ball_samples(g, opt.mc, opt.seed);
  std::mt19937_64 rng(opt.seed + 1);
  OscillationReport rep;
  rep.per_k.assign(opt.k_ladder.size(), 0.0);
  rep.per_r.assign(opt.r_ladder.size(), 0.0);
  const double qp2 = g.info().Qplus2;
  std::vector<double> ratios(opt.k_ladder.size() * opt.r_ladder.size(), 0.0);
  for (const Expr& u : u_bank) {
    const Expr uij = u.diff_x(opt.i).diff_x(opt.j);
    const ScalarField lu = op.apply(u);
    const auto d2 = [&](const Point& p) { return uij(p.x, p.t); };
    const auto abs_lu = [&](const Point& p) { return std::abs(lu(p)); };
    const auto pow_lu = [&](const Point& p) { return std::pow(std::abs(lu(p)), opt.p); };
    for (std::size_t c = 0; c < opt.centers; ++c) {
      const Point xi_bar = uniform_point(opt.center_box, rng);
      std::uniform_int_distribution<std::size_t> pick(0, unit.size() - 1);
      const Point& zeta = unit[pick(rng)];
      for (std::size_t ri = 0; ri < opt.r_ladder.size(); ++ri) {
        const double r = opt.r_ladder[ri];
        const Point xi0 = g.compose(xi_bar, g.dilate(r, zeta));
        const double mean = ball_average(g, unit, xi_bar, r, d2);
        const double lhs =
            ball_average(g, unit, xi_bar, r, [&](const Point& p) { return std::abs(d2(p) - mean); });
        double maximal = std::abs(lu(xi0));
        for (double rho : opt.maximal_radii) maximal = std::max(maximal, ball_average(g, unit, xi0, rho, abs_lu));
        for (std::size_t ki = 0; ki < opt.k_ladder.size(); ++ki) {
          const double k = opt.k_ladder[ki];
          const double local = std::pow(ball_average(g, unit, xi_bar, k * r, pow_lu), 1.0 / opt.p);
          const double rhs = maximal / k + std::pow(k, qp2 / opt.p) * local;
          if (rhs <= 0.0) continue;
          double& slot = ratios[ki * opt.r_ladder.size() + ri];
          slot = std::max(slot, lhs / rhs);
        }
      }
    }
  }
  for (std::size_t ki = 0; ki < opt.k_ladder.size(); ++ki)
    for (std::size_t ri = 0; ri < opt.r_ladder.size(); ++ri) {
      const double v = ratios[ki * opt.r_ladder.size() + ri];
      rep.rows.push_back({opt.k_ladder[ki], opt.r_ladder[ri], v});
      rep.per_k[ki] = std::max(rep.per_k[ki], v);
      rep.per_r[ri] = std::max(rep.per_r[ri], v);
      rep.constant = std::max(rep.constant, v);
    }
  return rep;
}

// ---------------------------------------------------------------------------
// A priori Sobolev estimate.

struct SobolevReport {
  double constant = 0.0;               ///< sup ||u||_W / (||Lu||_p + ||u||_p)
  std::vector<double> lambdas;
  std::vector<double> damped;          ///< sup ||u||_W / ||Lu - lambda u||_p per lambda
  std::vector<double> interp_eps;
  double interp_constant = 0.0;        ///< fitted c_p in ||u_i|| <= e ||D^2 u|| + (c_p / e) ||u||
  std::vector<double> per_function;    ///< constant per bank member
};

struct SobolevOptions {
  double p = 2.0;
  std::vector<double> lambdas{0.0, 1.0, 4.0, 16.0, 64.0};
  std::vector<double> interp_eps{0.05, 0.1, 0.2, 0.4, 0.8};
};

/// Checks ellipticity of the sampled coefficients on the grid.
inline void check_grid_ellipticity(const ModelOperator& op, const GridFunction& grid) {
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const Point p = grid.point(k);
    op.path().check_value(op.path().at(p.x, p.t), "coefficients at grid node");
  }
}

/// All norms are discrete on the grid; Lu is applied by finite differences.
inline SobolevReport check_sobolev_estimate(const ModelOperator& op, const std::vector<Expr>& u_bank,
                                            const Box& box, const std::vector<int>& shape,
                                            const SobolevOptions& opt = {}) {
  const Matrix& b = op.geometry().drift();
  const int q = op.q();
  SobolevReport rep;
  rep.lambdas = opt.lambdas;
  rep.damped.assign(opt.lambdas.size(), 0.0);
  rep.interp_eps = opt.interp_eps;
  check_grid_ellipticity(op, GridFunction(box, shape));
  for (const Expr& e : u_bank) {
    const GridFunction u = GridFunction::sample(ScalarField::from_expr(e), box, shape);
    const GridFunction lu = apply_operator_fd(op, u);
    const double w = u.sobolev_norm(b, q, opt.p);
    const double up = u.lp_norm(opt.p);
    const double c = w / (lu.lp_norm(opt.p) + up);
    rep.per_function.push_back(c);
    rep.constant = std::max(rep.constant, c);
    for (std::size_t l = 0; l < opt.lambdas.size(); ++l) {
      GridFunction damped = lu;
      for (std::size_t k = 0; k < u.size(); ++k) damped[k] -= opt.lambdas[l] * u[k];
      rep.damped[l] = std::max(rep.damped[l], w / damped.lp_norm(opt.p));
    }
    double hess = 0.0;
    for (int i = 0; i < q; ++i)
      for (int j = 0; j < q; ++j) hess += u.diff2(i, j).lp_norm(opt.p);
    for (int i = 0; i < q; ++i) {
      const double first = u.diff(i).lp_norm(opt.p);
      for (double eps : opt.interp_eps)
        rep.interp_constant = std::max(rep.interp_constant, eps * (first - eps * hess) / up);
    }
  }
  return rep;
}

}  // namespace kfp
