#pragma once

// Sampled functions on uniform tensor grids in (x, t) with Riemann-sum L^p
// norms and finite-difference operators.

#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "kfp/field.hpp"
#include "kfp/model_operator.hpp"
#include "kfp/parallel.hpp"

namespace kfp {

/// Values at the nodes lo + k h of every axis (endpoints included); axis N
/// is time. Storage has axis 0 fastest and time slowest, so each time slice
/// is contiguous.
class GridFunction {
 public:
  GridFunction() = default;

  GridFunction(Box box, std::vector<int> shape) : box_(std::move(box)), shape_(std::move(shape)) {
    require(static_cast<int>(shape_.size()) == box_.dims(), ErrorCode::GridIncompatible,
            "grid shape must have one entry per axis");
    std::size_t total = 1;
    for (int a = 0; a < dims(); ++a) {
      require(shape_[static_cast<std::size_t>(a)] >= 2, ErrorCode::GridIncompatible, "grid needs >= 2 nodes per axis");
      require(box_.hi[a] > box_.lo[a], ErrorCode::GridIncompatible, "grid box must have positive extent");
      total *= static_cast<std::size_t>(shape_[static_cast<std::size_t>(a)]);
    }
    values_.assign(total, 0.0);
  }

  static GridFunction sample(const ScalarField& f, const Box& box, const std::vector<int>& shape) {
    GridFunction g(box, shape);
    const int n = g.dims() - 1;
    parallel_for(g.size(), [&](std::size_t k) {
      const Point p = g.point(k);
      g.values_[k] = f(p.x.data(), p.t);
      (void)n;
    });
    return g;
  }

  /// Same grid, new values.
  [[nodiscard]] GridFunction like() const {
    GridFunction g = *this;
    std::fill(g.values_.begin(), g.values_.end(), 0.0);
    return g;
  }

  [[nodiscard]] const Box& box() const { return box_; }
  [[nodiscard]] const std::vector<int>& shape() const { return shape_; }
  [[nodiscard]] int dims() const { return static_cast<int>(shape_.size()); }
  [[nodiscard]] int n_space() const { return dims() - 1; }
  [[nodiscard]] std::size_t size() const { return values_.size(); }
  [[nodiscard]] std::vector<double>& values() { return values_; }
  [[nodiscard]] const std::vector<double>& values() const { return values_; }
  [[nodiscard]] double& operator[](std::size_t k) { return values_[k]; }
  [[nodiscard]] double operator[](std::size_t k) const { return values_[k]; }
  [[nodiscard]] int extent(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  [[nodiscard]] double spacing(int axis) const { return (box_.hi[axis] - box_.lo[axis]) / (extent(axis) - 1); }
  [[nodiscard]] double coordinate(int axis, int i) const { return box_.lo[axis] + i * spacing(axis); }
  [[nodiscard]] double cell_volume() const {
    double v = 1.0;
    for (int a = 0; a < dims(); ++a) v *= spacing(a);
    return v;
  }

  [[nodiscard]] std::size_t stride(int axis) const {
    std::size_t s = 1;
    for (int a = 0; a < axis; ++a) s *= static_cast<std::size_t>(extent(a));
    return s;
  }
  [[nodiscard]] int index(std::size_t k, int axis) const {
    return static_cast<int>((k / stride(axis)) % static_cast<std::size_t>(extent(axis)));
  }
  [[nodiscard]] std::size_t flat(const std::vector<int>& idx) const {
    std::size_t k = 0;
    for (int a = dims() - 1; a >= 0; --a) k = k * static_cast<std::size_t>(extent(a)) + static_cast<std::size_t>(idx[static_cast<std::size_t>(a)]);
    return k;
  }
  [[nodiscard]] Point point(std::size_t k) const {
    Point p{Vector(n_space()), 0.0};
    for (int a = 0; a < n_space(); ++a) p.x[a] = coordinate(a, index(k, a));
    p.t = coordinate(n_space(), index(k, n_space()));
    return p;
  }
  /// Number of nodes in one time slice.
  [[nodiscard]] std::size_t slice_size() const { return stride(n_space()); }

  [[nodiscard]] double max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
  }

  /// Riemann-sum L^p norm; p = infinity gives the max norm.
  [[nodiscard]] double lp_norm(double p) const {
    if (std::isinf(p)) return max_abs();
    double acc = 0.0;
    for (double v : values_) acc += std::pow(std::abs(v), p);
    return std::pow(acc * cell_volume(), 1.0 / p);
  }

  /// Largest value on the outer faces of the space axes relative to the max.
  [[nodiscard]] double boundary_ratio() const {
    const double m = max_abs();
    if (m == 0.0) return 0.0;
    double b = 0.0;
    for (std::size_t k = 0; k < size(); ++k)
      for (int a = 0; a < dims(); ++a) {
        const int i = index(k, a);
        if (i == 0 || i == extent(a) - 1) {
          b = std::max(b, std::abs(values_[k]));
          break;
        }
      }
    return b / m;
  }

  /// First derivative along `axis`: central in the interior, second-order
  /// one-sided at the faces.
  [[nodiscard]] GridFunction diff(int axis) const {
    require(extent(axis) >= 3, ErrorCode::GridIncompatible, "derivative needs >= 3 nodes per axis");
    GridFunction out = like();
    const std::size_t st = stride(axis);
    const int n = extent(axis);
    const double h = spacing(axis);
    for (std::size_t k = 0; k < size(); ++k) {
      const int i = index(k, axis);
      const double* v = values_.data();
      if (i == 0)
        out.values_[k] = (-3.0 * v[k] + 4.0 * v[k + st] - v[k + 2 * st]) / (2.0 * h);
      else if (i == n - 1)
        out.values_[k] = (3.0 * v[k] - 4.0 * v[k - st] + v[k - 2 * st]) / (2.0 * h);
      else
        out.values_[k] = (v[k + st] - v[k - st]) / (2.0 * h);
    }
    return out;
  }

  /// Second derivative; a == b uses the 3-point stencil (4-point one-sided at
  /// faces), a != b composes first differences.
  [[nodiscard]] GridFunction diff2(int a, int b) const {
    if (a != b) return diff(a).diff(b);
    require(extent(a) >= 4, ErrorCode::GridIncompatible, "second derivative needs >= 4 nodes per axis");
    GridFunction out = like();
    const std::size_t st = stride(a);
    const int n = extent(a);
    const double h2 = spacing(a) * spacing(a);
    const double* v = values_.data();
    for (std::size_t k = 0; k < size(); ++k) {
      const int i = index(k, a);
      if (i == 0)
        out.values_[k] = (2.0 * v[k] - 5.0 * v[k + st] + 4.0 * v[k + 2 * st] - v[k + 3 * st]) / h2;
      else if (i == n - 1)
        out.values_[k] = (2.0 * v[k] - 5.0 * v[k - st] + 4.0 * v[k - 2 * st] - v[k - 3 * st]) / h2;
      else
        out.values_[k] = (v[k + st] - 2.0 * v[k] + v[k - st]) / h2;
    }
    return out;
  }

  /// d_t by second-order backward differences (BDF2), with first-order
  /// backward at the second node and second-order forward at the first.
  [[nodiscard]] GridFunction diff_t_backward() const {
    const int axis = n_space();
    require(extent(axis) >= 3, ErrorCode::GridIncompatible, "time derivative needs >= 3 time nodes");
    GridFunction out = like();
    const std::size_t st = stride(axis);
    const double h = spacing(axis);
    const double* v = values_.data();
    for (std::size_t k = 0; k < size(); ++k) {
      const int i = index(k, axis);
      if (i == 0)
        out.values_[k] = (-3.0 * v[k] + 4.0 * v[k + st] - v[k + 2 * st]) / (2.0 * h);
      else if (i == 1)
        out.values_[k] = (v[k] - v[k - st]) / h;
      else
        out.values_[k] = (3.0 * v[k] - 4.0 * v[k - st] + v[k - 2 * st]) / (2.0 * h);
    }
    return out;
  }

  /// Y u = <Bx, grad u> - d_t u with centered x-differences and backward t.
  [[nodiscard]] GridFunction drift(const Matrix& b) const {
    const int n = n_space();
    GridFunction out = diff_t_backward();
    for (double& v : out.values_) v = -v;
    for (int j = 0; j < n; ++j) {
      if (b.row(j).isZero(0.0)) continue;
      const GridFunction dj = diff(j);
      for (std::size_t k = 0; k < size(); ++k) {
        double bx = 0.0;
        for (int l = 0; l < n; ++l) bx += b(j, l) * coordinate(l, index(k, l));
        out.values_[k] += bx * dj.values_[k];
      }
    }
    return out;
  }

  /// Discrete W^{2,p}_X norm: L^p norms of u, d_i u (i <= q), d_ij u (i, j <= q) and Y u.
  [[nodiscard]] double sobolev_norm(const Matrix& b, int q, double p) const {
    double acc = lp_norm(p) + drift(b).lp_norm(p);
    for (int i = 0; i < q; ++i) {
      acc += diff(i).lp_norm(p);
      for (int j = 0; j < q; ++j) acc += diff2(i, j).lp_norm(p);
    }
    return acc;
  }

  /// Tensor cubic Lagrange interpolant, zero outside the box.
  [[nodiscard]] ScalarField interpolant() const {
    const GridFunction self = *this;
    Box support = box_;
    return {[self](const double* x, double t) { return self.interpolate(x, t); }, support};
  }

  [[nodiscard]] double interpolate(const double* x, double t) const {
    constexpr int kMaxDims = 6;
    const int d = dims();
    require(d <= kMaxDims, ErrorCode::GridIncompatible, "interpolation supports at most 6 axes");
    std::array<int, kMaxDims> base{};
    std::array<std::array<double, 4>, kMaxDims> w{};
    std::array<int, kMaxDims> width{};
    for (int a = 0; a < d; ++a) {
      const double c = a < d - 1 ? x[a] : t;
      const double lo = box_.lo[a];
      const double hi = box_.hi[a];
      if (c < lo || c > hi) return 0.0;
      const int n = extent(a);
      const double h = spacing(a);
      const double u = (c - lo) / h;
      const int m = std::min(n, 4);
      int b0 = static_cast<int>(std::floor(u)) - (m == 4 ? 1 : 0);
      b0 = std::clamp(b0, 0, n - m);
      base[a] = b0;
      width[a] = m;
      for (int r = 0; r < m; ++r) {
        double l = 1.0;
        for (int s = 0; s < m; ++s)
          if (s != r) l *= (u - (b0 + s)) / static_cast<double>(r - s);
        w[a][r] = l;
      }
    }
    double acc = 0.0;
    std::array<int, kMaxDims> off{};
    while (true) {
      double weight = 1.0;
      std::size_t k = 0;
      for (int a = d - 1; a >= 0; --a) {
        weight *= w[a][off[a]];
        k = k * static_cast<std::size_t>(extent(a)) + static_cast<std::size_t>(base[a] + off[a]);
      }
      acc += weight * values_[k];
      int a = 0;
      while (a < d && ++off[a] == width[a]) off[a++] = 0;
      if (a == d) break;
    }
    return acc;
  }

  GridFunction& operator+=(const GridFunction& o) {
    check_same(o);
    for (std::size_t k = 0; k < size(); ++k) values_[k] += o.values_[k];
    return *this;
  }
  GridFunction& operator-=(const GridFunction& o) {
    check_same(o);
    for (std::size_t k = 0; k < size(); ++k) values_[k] -= o.values_[k];
    return *this;
  }
  GridFunction& operator*=(double a) {
    for (double& v : values_) v *= a;
    return *this;
  }
  friend GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }
  friend GridFunction operator-(GridFunction a, const GridFunction& b) { return a -= b; }
  friend GridFunction operator*(double s, GridFunction a) { return a *= s; }

  void check_same(const GridFunction& o) const {
    require(shape_ == o.shape_ && box_.lo == o.box_.lo && box_.hi == o.box_.hi, ErrorCode::GridIncompatible,
            "grid functions live on different grids");
  }

 private:
  Box box_;
  std::vector<int> shape_;
  std::vector<double> values_;
};

/// (L - lambda) u by finite differences; coefficients are evaluated at the nodes.
inline GridFunction apply_operator_fd(const ModelOperator& op, const GridFunction& u, double lambda = 0.0) {
  require(u.n_space() == op.N(), ErrorCode::GridIncompatible, "grid dimension must equal N");
  GridFunction out = u.drift(op.geometry().drift());
  const int q = op.q();
  std::vector<GridFunction> second;
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < q; ++j) second.push_back(u.diff2(i, j));
  for (std::size_t k = 0; k < u.size(); ++k) {
    const Point p = u.point(k);
    const Matrix a = op.path().at(p.x, p.t);
    double acc = -lambda * u[k];
    for (int i = 0; i < q; ++i)
      for (int j = 0; j < q; ++j) acc += a(i, j) * second[static_cast<std::size_t>(i * q + j)][k];
    out[k] += acc;
  }
  return out;
}

/// ||a - b||_p / ||b||_p.
inline double relative_error(const GridFunction& a, const GridFunction& b, double p) {
  const double denom = b.lp_norm(p);
  return (a - b).lp_norm(p) / (denom > 0.0 ? denom : 1.0);
}

/// Uniform shape with `per_axis` space nodes and `time_nodes` time nodes.
inline std::vector<int> uniform_shape(int n_space, int per_axis, int time_nodes) {
  std::vector<int> s(static_cast<std::size_t>(n_space), per_axis);
  s.push_back(time_nodes);
  return s;
}

}  // namespace kfp
