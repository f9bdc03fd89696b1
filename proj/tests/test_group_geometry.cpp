#include <cmath>
#include <random>

#include "test_support.hpp"

using namespace kfp;
using kfp::testing::point;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

}  // namespace

TEST(Structure, KolmogorovExponents) {
  const GeometryInfo info = validate_structure(BlockStructure::kolmogorov());
  EXPECT_EQ(info.exponents, (std::vector<int>{1, 3}));
  EXPECT_EQ(info.Q, 4);
  EXPECT_EQ(info.Qplus2, 6);
  EXPECT_EQ(info.nilpotency_index, 2);
}

TEST(Structure, ParabolicCase) {
  const GeometryInfo info = validate_structure(BlockStructure::parabolic(3));
  EXPECT_EQ(info.exponents, (std::vector<int>{1, 1, 1}));
  EXPECT_EQ(info.Q, 3);
}

TEST(Structure, ChainExponents) {
  const GeometryInfo info = validate_structure(BlockStructure::chain(2));
  EXPECT_EQ(info.exponents, (std::vector<int>{1, 3, 5}));
  EXPECT_EQ(info.Q, 9);
  EXPECT_EQ(info.nilpotency_index, 3);
}

TEST(Structure, Errors) {
  BlockStructure rank;
  rank.q = 1;
  rank.m = {1};
  rank.blocks = {Matrix::Zero(1, 1)};
  EXPECT_KFP_ERROR(validate_structure(rank), ErrorCode::RankDeficient);

  BlockStructure grows;
  grows.q = 1;
  grows.m = {2};
  grows.blocks = {Matrix::Ones(2, 1)};
  EXPECT_KFP_ERROR(validate_structure(grows), ErrorCode::MonotonicityViolated);

  BlockStructure shape;
  shape.q = 2;
  shape.m = {1};
  shape.blocks = {Matrix::Ones(1, 1)};
  EXPECT_KFP_ERROR(validate_structure(shape), ErrorCode::ShapeMismatch);
}

TEST(Exponential, KolmogorovClosedForm) {
  const Geometry g(BlockStructure::kolmogorov());
  for (double t : {-3.5, 0.0, 0.25, 7.0}) EXPECT_EQ(g.exp_drift(t), mat({{1, 0}, {-t, 1}}));
}

TEST(Exponential, ZeroDriftIsIdentity) {
  const Geometry g(BlockStructure::parabolic(2));
  EXPECT_EQ(g.exp_drift(4.2), Matrix::Identity(2, 2));
}

TEST(Exponential, ChainAtTwo) {
  const Geometry g(BlockStructure::chain(2));
  EXPECT_EQ(g.exp_drift(2.0), mat({{1, 0, 0}, {-2, 1, 0}, {2, -2, 1}}));
}

TEST(Exponential, SemigroupProperty) {
  const Geometry g(BlockStructure::chain(2));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-2.0, 2.0);
  for (int k = 0; k < 100; ++k) {
    const double t = d(rng);
    const double s = d(rng);
    EXPECT_LT((g.exp_drift(t + s) - g.exp_drift(t) * g.exp_drift(s)).cwiseAbs().maxCoeff(), 1e-13);
  }
}

TEST(GroupLaw, KolmogorovCompose) {
  const Geometry g(BlockStructure::kolmogorov());
  const Point eta = point({0.3, -1.2}, 0.7);
  const Point xi = point({2.0, 0.5}, -1.5);
  const Point c = g.compose(eta, xi);
  EXPECT_DOUBLE_EQ(c.x[0], 2.0 + 0.3);
  EXPECT_DOUBLE_EQ(c.x[1], 0.5 - (-1.5) * 0.3 + -1.2);
  EXPECT_DOUBLE_EQ(c.t, -0.8);
}

TEST(GroupLaw, EuclideanWhenDriftVanishes) {
  const Geometry g(BlockStructure::parabolic(2));
  const Point c = g.compose(point({1.0, 2.0}, 3.0), point({-0.5, 0.25}, 1.0));
  EXPECT_EQ(c.x, (Vector(2) << 0.5, 2.25).finished());
  EXPECT_EQ(c.t, 4.0);
}

TEST(GroupLaw, InverseAndRelative) {
  const Geometry g(BlockStructure::chain(2));
  std::mt19937_64 rng(5);
  const Box box = Box::cube(3, 2.0);
  for (int k = 0; k < 200; ++k) {
    const Point eta = uniform_point(box, rng);
    const Point xi = uniform_point(box, rng);
    const Point id = g.compose(eta, g.invert(eta));
    EXPECT_LT(id.x.cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT(std::abs(id.t), 1e-15);
    const Point a = g.compose(g.invert(eta), xi);
    const Point b = g.relative(eta, xi);
    EXPECT_LT((a.x - b.x).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Dilation, KolmogorovExample) {
  const Geometry g(BlockStructure::kolmogorov());
  const Point p = g.dilate(2.0, point({1.0, 1.0}, 1.0));
  EXPECT_EQ(p.x, (Vector(2) << 2.0, 8.0).finished());
  EXPECT_EQ(p.t, 4.0);
  const Point same = g.dilate(1.0, point({0.3, -0.7}, 0.2));
  EXPECT_EQ(same.x, (Vector(2) << 0.3, -0.7).finished());
  EXPECT_KFP_ERROR(g.dilate(0.0, same), ErrorCode::NonpositiveLambda);
}

TEST(Norm, Examples) {
  const Geometry g(BlockStructure::kolmogorov());
  EXPECT_EQ(g.homogeneous_norm(point({0.0, 0.0}, 0.0)), 0.0);
  EXPECT_DOUBLE_EQ(g.homogeneous_norm(point({1.0, 8.0}, 4.0)), 5.0);
  EXPECT_DOUBLE_EQ(g.quasidistance(point({0.0, 0.0}, 1.0), point({0.0, 0.0}, 0.0)), 1.0);
  const Point xi = point({0.4, -0.2}, 0.3);
  EXPECT_EQ(g.quasidistance(xi, xi), 0.0);
}

TEST(Norm, EqualTimeSymmetry) {
  const Geometry g(BlockStructure::chain(2));
  std::mt19937_64 rng(7);
  const Box box = Box::cube(3, 1.0);
  for (int k = 0; k < 200; ++k) {
    Point a = uniform_point(box, rng);
    Point b = uniform_point(box, rng);
    b.t = a.t;
    EXPECT_EQ(g.quasidistance(a, b), g.quasidistance(b, a));
  }
}

TEST(Kappa, AtLeastOneAndNearOneWithoutDrift) {
  const Geometry heat(BlockStructure::parabolic(1));
  const double k_heat = estimate_kappa(heat, 20000, Box::cube(1, 1.0), 0);
  EXPECT_GE(k_heat, 1.0);
  EXPECT_LT(k_heat, 1.0 + 1e-12);
  const Geometry kol(BlockStructure::kolmogorov());
  EXPECT_GE(estimate_kappa(kol, 1000, Box::cube(2, 1.0), 9), 1.0);
  EXPECT_KFP_ERROR(estimate_kappa(kol, 10, Box::cube(2, 1.0), 0), ErrorCode::InvalidArgument);
}

TEST(Kappa, KolmogorovRegression) {
  // seed 0, 10^5 triples in [-1,1]^3; frozen from the first run
  const Geometry g(BlockStructure::kolmogorov());
  EXPECT_EQ(estimate_kappa(g, 100000, Box::cube(2, 1.0), 0), 1.4919581545605038);
}

TEST(BallVolume, HeatOneDimensionalOracle) {
  // |{|x| + sqrt|t| < r}| = int_{-r}^{r} 2 (r - |x|)^2 dx = 4 r^3 / 3
  const Geometry g(BlockStructure::parabolic(1));
  const double radii[] = {0.5, 1.0, 2.0};
  const BallConstantReport rep = estimate_ball_constant(g, radii, 200000, 0);
  EXPECT_TRUE(rep.consistent);
  for (const auto& row : rep.rows) {
    const double exact = 4.0 * std::pow(row.radius, 3) / 3.0;
    EXPECT_NEAR(row.volume, exact, 4.0 * row.std_error);
  }
  EXPECT_NEAR(rep.omega, 4.0 / 3.0, 4.0 * rep.omega_std_error);
}

TEST(BallVolume, KolmogorovClosedForm) {
  // for a single chain link the slices factor: omega = 2^{N+2} prod q_i! / (Q+2)!
  const Geometry g(BlockStructure::kolmogorov());
  const double radii[] = {0.5, 1.0, 2.0};
  const BallConstantReport rep = estimate_ball_constant(g, radii, 200000, 0);
  EXPECT_TRUE(rep.consistent);
  EXPECT_NEAR(rep.omega, 16.0 * 6.0 / 720.0, 4.0 * rep.omega_std_error);
}

TEST(BallVolume, ScalingSlope) {
  const Geometry g(BlockStructure::kolmogorov());
  const double radii[] = {0.25, 0.5, 1.0, 2.0, 4.0};
  const BallConstantReport rep = estimate_ball_constant(g, radii, 200000, 1);
  std::vector<double> r;
  std::vector<double> v;
  for (const auto& row : rep.rows) {
    r.push_back(row.radius);
    v.push_back(row.volume);
  }
  EXPECT_NEAR(loglog_slope(r, v), 6.0, 0.06);
}

TEST(BallVolume, TranslationInvariance) {
  const Geometry g(BlockStructure::kolmogorov());
  std::mt19937_64 rng(11);
  const Point origin = point({0.0, 0.0}, 0.0);
  const Point center = point({0.8, -0.6}, 0.4);
  const BallVolumeRow a = measure_ball(g, origin, 1.0, 200000, g.ball_bounding_box(origin, 1.0), rng);
  const BallVolumeRow b = measure_ball(g, center, 1.0, 200000, g.ball_bounding_box(center, 1.0), rng);
  EXPECT_NEAR(a.volume, b.volume, 4.0 * std::hypot(a.std_error, b.std_error));
  EXPECT_KFP_ERROR(measure_ball(g, origin, 1.0, 10, Box::cube(2, 0.5), rng), ErrorCode::BoxTooSmall);
}

TEST(Axioms, SuitePasses) {
  for (const Geometry& g : {Geometry(BlockStructure::kolmogorov()), Geometry(BlockStructure::chain(2)),
                            Geometry(BlockStructure::parabolic(2))})
    for (const auto& c : geometry_axioms(g, 2000, 0, 1e-12)) EXPECT_TRUE(c.pass) << c.check << " " << c.worst_case;
}
