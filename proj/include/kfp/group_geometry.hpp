#pragma once

// Lie group structure of a Kolmogorov-Fokker-Planck drift matrix:
// translations (y,s)o(x,t) = (x + E(t)y, t + s) with E(t) = exp(-tB),
// anisotropic dilations, the homogeneous norm and the quasidistance.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kfp/error.hpp"
#include "kfp/linalg.hpp"

namespace kfp {

/// Element (x, t) of R^{N+1}.
struct Point {
  Vector x;
  double t = 0.0;

  Point() = default;
  Point(Vector x_, double t_) : x(std::move(x_)), t(t_) {}
};

/// Axis-aligned box in (x, t); `lo`/`hi` have N + 1 entries, t last.
struct Box {
  Vector lo;
  Vector hi;

  [[nodiscard]] int dims() const { return static_cast<int>(lo.size()); }
  [[nodiscard]] double volume() const { return (hi - lo).prod(); }
  [[nodiscard]] bool contains(const Point& p) const {
    const int n = dims() - 1;
    for (int i = 0; i < n; ++i)
      if (p.x[i] < lo[i] || p.x[i] > hi[i]) return false;
    return p.t >= lo[n] && p.t <= hi[n];
  }

  static Box cube(int n_space, double half_width) {
    Box b;
    b.lo = Vector::Constant(n_space + 1, -half_width);
    b.hi = Vector::Constant(n_space + 1, half_width);
    return b;
  }
};

/// Block data of the drift: B has the sub-diagonal blocks B_1..B_k, B_j of
/// shape m_j x m_{j-1}, with m_0 = q.
struct BlockStructure {
  int q = 1;
  std::vector<int> m;
  std::vector<Matrix> blocks;

  [[nodiscard]] int N() const {
    int n = q;
    for (int mi : m) n += mi;
    return n;
  }

  /// Assembled N x N drift matrix.
  [[nodiscard]] Matrix assemble() const {
    const int n = N();
    Matrix b = Matrix::Zero(n, n);
    int row = q;
    int col = 0;
    int prev = q;
    for (std::size_t j = 0; j < blocks.size(); ++j) {
      b.block(row, col, m[j], prev) = blocks[j];
      col += prev;
      prev = m[j];
      row += m[j];
    }
    return b;
  }

  static BlockStructure kolmogorov() {
    BlockStructure s;
    s.q = 1;
    s.m = {1};
    s.blocks = {Matrix::Ones(1, 1)};
    return s;
  }

  static BlockStructure parabolic(int n) {
    BlockStructure s;
    s.q = n;
    return s;
  }

  /// q = 1 chain of length k: exponents 1, 3, ..., 2k + 1.
  static BlockStructure chain(int k) {
    BlockStructure s;
    s.q = 1;
    for (int j = 0; j < k; ++j) {
      s.m.push_back(1);
      s.blocks.push_back(Matrix::Ones(1, 1));
    }
    return s;
  }
};

struct GeometryInfo {
  std::vector<int> exponents;
  int Q = 0;
  int Qplus2 = 0;
  int nilpotency_index = 1;
  std::optional<double> omega;
  std::optional<double> kappa;
};

inline constexpr double kRankTolerance = 1e-10;

inline GeometryInfo validate_structure(const BlockStructure& spec) {
  require(spec.q >= 1, ErrorCode::ShapeMismatch, "q must be positive");
  require(spec.m.size() == spec.blocks.size(), ErrorCode::ShapeMismatch,
          "number of block sizes differs from number of blocks");
  int prev = spec.q;
  for (std::size_t j = 0; j < spec.m.size(); ++j) {
    const int mj = spec.m[j];
    require(mj >= 1, ErrorCode::MonotonicityViolated, "block sizes must be positive");
    require(mj <= prev, ErrorCode::MonotonicityViolated,
            "block sizes must be nonincreasing: m_" + std::to_string(j + 1) + " = " +
                std::to_string(mj) + " > " + std::to_string(prev));
    const Matrix& bj = spec.blocks[j];
    require(bj.rows() == mj && bj.cols() == prev, ErrorCode::ShapeMismatch,
            "block B_" + std::to_string(j + 1) + " must be " + std::to_string(mj) + "x" +
                std::to_string(prev));
    require(bj.allFinite(), ErrorCode::ShapeMismatch, "non-finite block entry");
    Eigen::JacobiSVD<Matrix> svd(bj);
    const auto& sv = svd.singularValues();
    const double largest = sv.size() ? sv[0] : 0.0;
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i)
      if (largest > 0.0 && sv[i] > kRankTolerance * largest) ++rank;
    require(rank == mj, ErrorCode::RankDeficient,
            "block B_" + std::to_string(j + 1) + " has rank " + std::to_string(rank) + " < " +
                std::to_string(mj));
    prev = mj;
  }

  GeometryInfo info;
  for (int i = 0; i < spec.q; ++i) info.exponents.push_back(1);
  for (std::size_t j = 0; j < spec.m.size(); ++j)
    for (int i = 0; i < spec.m[j]; ++i) info.exponents.push_back(2 * static_cast<int>(j + 1) + 1);
  for (int e : info.exponents) info.Q += e;
  info.Qplus2 = info.Q + 2;

  const Matrix b = spec.assemble();
  Matrix power = b;
  info.nilpotency_index = 1;
  while (!power.isZero(0.0)) {
    power = power * b;
    ++info.nilpotency_index;
  }
  return info;
}

/// Validated group structure. Immutable once built; all members are pure.
class Geometry {
 public:
  explicit Geometry(BlockStructure spec)
      : spec_(std::move(spec)), info_(validate_structure(spec_)), drift_(spec_.assemble()) {
    const int n = spec_.N();
    Matrix term = Matrix::Identity(n, n);
    const Matrix minus_b = -drift_;
    for (int p = 0; p < info_.nilpotency_index; ++p) {
      if (p > 0) term = term * minus_b / static_cast<double>(p);
      exp_coeffs_.push_back(term);
    }
  }

  [[nodiscard]] const BlockStructure& spec() const { return spec_; }
  [[nodiscard]] const GeometryInfo& info() const { return info_; }
  [[nodiscard]] const Matrix& drift() const { return drift_; }
  [[nodiscard]] int N() const { return spec_.N(); }
  [[nodiscard]] int q() const { return spec_.q; }
  [[nodiscard]] int exponent(int i) const { return info_.exponents[static_cast<std::size_t>(i)]; }

  /// Copy carrying the calibrated quasitriangle constant and unit-ball volume.
  [[nodiscard]] Geometry with_constants(double kappa, double omega) const {
    Geometry out = *this;
    out.info_.kappa = kappa;
    out.info_.omega = omega;
    return out;
  }

  /// Coefficient matrices M_p = (-B)^p / p! of E(t) = sum_p t^p M_p.
  [[nodiscard]] const std::vector<Matrix>& exp_coefficients() const { return exp_coeffs_; }

  /// E(t) = exp(-tB), evaluated as the exact finite series.
  [[nodiscard]] Matrix exp_drift(double t) const {
    Matrix e = exp_coeffs_.back();
    for (int p = static_cast<int>(exp_coeffs_.size()) - 2; p >= 0; --p)
      e = (e * t + exp_coeffs_[static_cast<std::size_t>(p)]).eval();
    return e;
  }

  [[nodiscard]] Vector apply_exp(double t, const Vector& y) const {
    Vector out = exp_coeffs_.back() * y;
    for (int p = static_cast<int>(exp_coeffs_.size()) - 2; p >= 0; --p)
      out = out * t + exp_coeffs_[static_cast<std::size_t>(p)] * y;
    return out;
  }

  /// (y,s) o (x,t) = (x + E(t) y, t + s).
  [[nodiscard]] Point compose(const Point& eta, const Point& xi) const {
    return {xi.x + apply_exp(xi.t, eta.x), xi.t + eta.t};
  }

  [[nodiscard]] Point invert(const Point& eta) const {
    return {-apply_exp(-eta.t, eta.x), -eta.t};
  }

  /// eta^{-1} o xi = (x - E(t - s) y, t - s).
  [[nodiscard]] Point relative(const Point& eta, const Point& xi) const {
    return {xi.x - apply_exp(xi.t - eta.t, eta.x), xi.t - eta.t};
  }

  [[nodiscard]] Vector dilation_diagonal(double lambda) const {
    Vector d(N());
    for (int i = 0; i < N(); ++i) d[i] = std::pow(lambda, exponent(i));
    return d;
  }

  [[nodiscard]] Point dilate(double lambda, const Point& xi) const {
    require(lambda > 0.0, ErrorCode::NonpositiveLambda, "dilation factor must be positive");
    return {dilation_diagonal(lambda).cwiseProduct(xi.x), lambda * lambda * xi.t};
  }

  /// ||x|| = sum |x_i|^{1/q_i}.
  [[nodiscard]] double space_norm(const Vector& x) const {
    double acc = 0.0;
    for (int i = 0; i < N(); ++i) {
      const double a = std::abs(x[i]);
      const int e = exponent(i);
      acc += e == 1 ? a : (e == 3 ? std::cbrt(a) : std::pow(a, 1.0 / e));
    }
    return acc;
  }

  [[nodiscard]] double homogeneous_norm(const Point& xi) const {
    return space_norm(xi.x) + std::sqrt(std::abs(xi.t));
  }

  /// d(xi, eta) = rho(eta^{-1} o xi) = ||x - E(t-s) y|| + sqrt|t - s|.
  [[nodiscard]] double quasidistance(const Point& xi, const Point& eta) const {
    return homogeneous_norm(relative(eta, xi));
  }

  /// Smallest box containing B_r(center) = {eta : d(eta, center) < r}.
  [[nodiscard]] Box ball_bounding_box(const Point& center, double r) const {
    const int n = N();
    Box b;
    b.lo = Vector(n + 1);
    b.hi = Vector(n + 1);
    const double r2 = r * r;
    // eta in the ball iff eta = center o zeta with rho(zeta) < r, i.e.
    // y = z + E(s') x_c for |s'| < r^2, so y ranges over E(s') x_c + box(r^{q_i}).
    for (int i = 0; i < n; ++i) {
      b.lo[i] = std::numeric_limits<double>::infinity();
      b.hi[i] = -std::numeric_limits<double>::infinity();
    }
    constexpr int kSteps = 512;
    for (int k = 0; k <= kSteps; ++k) {
      const double s = -r2 + 2.0 * r2 * k / kSteps;
      const Vector shifted = apply_exp(s, center.x);
      for (int i = 0; i < n; ++i) {
        b.lo[i] = std::min(b.lo[i], shifted[i]);
        b.hi[i] = std::max(b.hi[i], shifted[i]);
      }
    }
    // The polynomial path between samples can bulge by at most the variation
    // over one step; pad by that variation.
    const Vector dpath = (apply_exp(r2, center.x) - apply_exp(-r2, center.x)).cwiseAbs();
    for (int i = 0; i < n; ++i) {
      const double radius_i = std::pow(r, exponent(i));
      const double pad = 4.0 * dpath[i] / kSteps + 1e-12 * radius_i;
      b.lo[i] -= radius_i + pad;
      b.hi[i] += radius_i + pad;
    }
    b.lo[n] = center.t - r2;
    b.hi[n] = center.t + r2;
    return b;
  }

 private:
  BlockStructure spec_;
  GeometryInfo info_;
  Matrix drift_;
  std::vector<Matrix> exp_coeffs_;
};

inline Point uniform_point(const Box& box, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = box.dims() - 1;
  Point p{Vector(n), 0.0};
  for (int i = 0; i < n; ++i) p.x[i] = box.lo[i] + (box.hi[i] - box.lo[i]) * unit(rng);
  p.t = box.lo[n] + (box.hi[n] - box.lo[n]) * unit(rng);
  return p;
}

/// Empirical quasitriangle / quasisymmetry constant: the largest observed
/// ratio over random triples drawn from `box`. At least 1 (the zeta = eta case).
inline double estimate_kappa(const Geometry& g, std::size_t sample_count, const Box& box,
                             std::uint64_t seed = 0) {
  require(sample_count >= 1000, ErrorCode::InvalidArgument, "kappa needs at least 1e3 samples");
  std::mt19937_64 rng(seed);
  double kappa = 1.0;
  for (std::size_t k = 0; k < sample_count; ++k) {
    const Point xi = uniform_point(box, rng);
    const Point eta = uniform_point(box, rng);
    const Point zeta = uniform_point(box, rng);
    const double d_xe = g.quasidistance(xi, eta);
    const double denom = g.quasidistance(xi, zeta) + g.quasidistance(eta, zeta);
    if (denom > 0.0) kappa = std::max(kappa, d_xe / denom);
    const double d_ex = g.quasidistance(eta, xi);
    if (d_ex > 0.0) kappa = std::max(kappa, d_xe / d_ex);
  }
  return kappa;
}

struct BallVolumeRow {
  double radius = 0.0;
  double volume = 0.0;
  double std_error = 0.0;
  double ratio = 0.0;  ///< volume / r^{Q+2}
  double ratio_std_error = 0.0;
};

struct BallConstantReport {
  double omega = 0.0;
  double omega_std_error = 0.0;
  std::vector<BallVolumeRow> rows;
  bool consistent = true;  ///< pairwise ratio agreement within 3 combined standard errors
};

/// Monte-Carlo measure of B_r(center) by uniform sampling of `sampling_box`.
inline BallVolumeRow measure_ball(const Geometry& g, const Point& center, double r,
                                  std::size_t mc_samples, const Box& sampling_box,
                                  std::mt19937_64& rng) {
  require(r > 0.0, ErrorCode::InvalidArgument, "radius must be positive");
  const Box tight = g.ball_bounding_box(center, r);
  for (int i = 0; i < tight.dims(); ++i)
    require(sampling_box.lo[i] <= tight.lo[i] && sampling_box.hi[i] >= tight.hi[i],
            ErrorCode::BoxTooSmall, "sampling box does not contain the ball of radius " +
                                        std::to_string(r));
  std::size_t hits = 0;
  for (std::size_t k = 0; k < mc_samples; ++k)
    if (g.quasidistance(uniform_point(sampling_box, rng), center) < r) ++hits;
  const double n = static_cast<double>(mc_samples);
  const double frac = static_cast<double>(hits) / n;
  BallVolumeRow row;
  row.radius = r;
  row.volume = frac * sampling_box.volume();
  row.std_error = std::sqrt(frac * (1.0 - frac) / n) * sampling_box.volume();
  const double scale = std::pow(r, g.info().Qplus2);
  row.ratio = row.volume / scale;
  row.ratio_std_error = row.std_error / scale;
  return row;
}

/// omega = |B_1(0)| estimated from |B_r(0)| / r^{Q+2} over several radii.
inline BallConstantReport estimate_ball_constant(const Geometry& g, std::span<const double> radii,
                                                 std::size_t mc_samples, std::uint64_t seed = 0) {
  require(!radii.empty(), ErrorCode::InvalidArgument, "empty radius list");
  std::mt19937_64 rng(seed);
  const Point origin{Vector::Zero(g.N()), 0.0};
  BallConstantReport report;
  double weight_sum = 0.0;
  double weighted = 0.0;
  for (double r : radii) {
    require(r > 0.0, ErrorCode::InvalidArgument, "radii must be positive");
    const BallVolumeRow row = measure_ball(g, origin, r, mc_samples, g.ball_bounding_box(origin, r), rng);
    report.rows.push_back(row);
    const double w = 1.0 / std::max(row.ratio_std_error * row.ratio_std_error, 1e-300);
    weighted += w * row.ratio;
    weight_sum += w;
  }
  report.omega = weighted / weight_sum;
  report.omega_std_error = std::sqrt(1.0 / weight_sum);
  for (std::size_t a = 0; a < report.rows.size(); ++a)
    for (std::size_t b = a + 1; b < report.rows.size(); ++b) {
      const auto& ra = report.rows[a];
      const auto& rb = report.rows[b];
      const double se = std::hypot(ra.ratio_std_error, rb.ratio_std_error);
      if (std::abs(ra.ratio - rb.ratio) > 3.0 * se) report.consistent = false;
    }
  return report;
}

/// Default calibration box and budgets for the cached constants.
struct CalibrationOptions {
  std::size_t kappa_samples = 100000;
  double kappa_half_width = 1.0;
  std::size_t ball_samples = 200000;
  std::uint64_t seed = 0;
};

/// Copy of `g` with kappa and omega estimated and cached in its info.
inline Geometry calibrated(const Geometry& g, const CalibrationOptions& opt = {}) {
  const double kappa =
      estimate_kappa(g, opt.kappa_samples, Box::cube(g.N(), opt.kappa_half_width), opt.seed);
  const double radii[] = {0.5, 1.0, 2.0};
  const double omega = estimate_ball_constant(g, radii, opt.ball_samples, opt.seed).omega;
  return g.with_constants(kappa, omega);
}

}  // namespace kfp
