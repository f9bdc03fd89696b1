#include <cmath>

#include "test_support.hpp"

using namespace kfp;
using kfp::testing::heat_kernel_1d;
using kfp::testing::space_time_box;

namespace {

double max_interior_deviation(const GridFunction& u, const std::function<double(const Point&)>& exact) {
  double dev = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) dev = std::max(dev, std::abs(u[k] - exact(u.point(k))));
  return dev;
}

ScalarField constant(double c) {
  return {[c](const double*, double) { return c; }, std::nullopt};
}

}  // namespace

TEST(Cauchy, HeatSemigroup) {
  const double t0 = 0.5;
  const CauchyProblem pb{kfp::testing::heat(1), ScalarField::zero(),
                         {[t0](const double* x, double) { return heat_kernel_1d(x[0], t0); }, std::nullopt}, 1.0, 0.0};
  const GridFunction u = solve_cauchy(pb, space_time_box(1, 2.0, 0.0, 1.0), {17, 5});
  double peak = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) peak = std::max(peak, std::abs(u[k]));
  const double dev = max_interior_deviation(u, [t0](const Point& p) { return heat_kernel_1d(p.x[0], t0 + p.t); });
  EXPECT_LT(dev / peak, 1e-4);
}

TEST(Cauchy, ConstantDatum) {
  const CauchyProblem pb{kfp::testing::kolmogorov(), ScalarField::zero(), constant(1.0), 1.0, 0.0};
  const GridFunction u = solve_cauchy(pb, space_time_box(2, 1.0, 0.0, 1.0), {5, 5, 5});
  EXPECT_LT(max_interior_deviation(u, [](const Point&) { return 1.0; }), 1e-4);
}

TEST(Cauchy, DampedConstantDatum) {
  // (L - lambda) u = 0 with u(., 0) = 1 gives u = exp(-lambda t)
  const CauchyProblem pb{kfp::testing::kolmogorov(), ScalarField::zero(), constant(1.0), 1.0, 2.0};
  const GridFunction u = solve_cauchy(pb, space_time_box(2, 1.0, 0.0, 1.0), {5, 5, 5});
  EXPECT_LT(max_interior_deviation(u, [](const Point& p) { return std::exp(-2.0 * p.t); }), 1e-4);
}

TEST(Cauchy, ManufacturedSource) {
  const ModelOperator op = kfp::testing::heat(1);
  const Expr u = Expr::parse("exp(-x1^2) * sin(pi * t)^2", 1);
  const CauchyProblem pb{op, op.apply(u, 0.0, space_time_box(1, 6.0, 0.0, 1.0)), ScalarField::zero(), 1.0, 0.0};
  const GridFunction sol = solve_cauchy(pb, space_time_box(1, 1.5, 0.0, 1.0), {25, 17});
  EXPECT_LT(max_interior_deviation(sol, [&](const Point& p) { return u(p.x, p.t); }), 1e-3);
  EXPECT_LT(cauchy_residual(pb, sol), 0.1);
}

TEST(Cauchy, Linearity) {
  const ModelOperator op = kfp::testing::kolmogorov();
  const Expr f = Expr::parse("exp(-x1^2 - x2^2) * bump(t, 0.5, 0.5)", 2);
  const Box support = space_time_box(2, 5.0, 0.0, 1.0);
  const Box out = space_time_box(2, 1.0, 0.0, 1.0);
  const CauchyProblem one{op, ScalarField::from_expr(f, support), ScalarField::zero(), 1.0, 0.0};
  const CauchyProblem two{op, ScalarField::from_expr(f, support).scaled(2.0), ScalarField::zero(), 1.0, 0.0};
  const GridFunction u1 = solve_cauchy(one, out, {5, 5, 5});
  const GridFunction u2 = solve_cauchy(two, out, {5, 5, 5});
  for (std::size_t k = 0; k < u1.size(); ++k) EXPECT_NEAR(u2[k], 2.0 * u1[k], 1e-12 * std::max(1.0, std::abs(u1[k])));
  const double c1 = estimate_cauchy_constant(one, u1, 2.0);
  EXPECT_NEAR(estimate_cauchy_constant(two, u2, 2.0), c1, 1e-12 * c1);
}

TEST(Cauchy, Errors) {
  const CauchyProblem zero{kfp::testing::kolmogorov(), ScalarField::zero(), ScalarField::zero(), 1.0, 0.0};
  const Box out = space_time_box(2, 1.0, 0.0, 1.0);
  const GridFunction u = solve_cauchy(zero, out, {5, 5, 3});
  EXPECT_EQ(u.max_abs(), 0.0);
  EXPECT_KFP_ERROR(estimate_cauchy_constant(zero, u, 2.0), ErrorCode::ZeroData);
  EXPECT_KFP_ERROR(solve_cauchy(zero, space_time_box(2, 1.0, 0.0, 0.5), {5, 5, 3}), ErrorCode::GridIncompatible);

  std::vector<std::vector<Expr>> entries{{Expr::parse("1 + 0.1 * sin(x1)", 2)}};
  const ModelOperator xdep(Geometry(BlockStructure::kolmogorov()), CoefficientPath::closed_form(entries, 0.5));
  const CauchyProblem bad{xdep, ScalarField::zero(), ScalarField::zero(), 1.0, 0.0};
  EXPECT_KFP_ERROR(solve_cauchy(bad, out, {5, 5, 3}), ErrorCode::UnsupportedCoefficients);
}

TEST(Representation, ZeroInput) {
  const ModelOperator op = kfp::testing::kolmogorov();
  const Box box = space_time_box(2, 1.0, 0.0, 1.0);
  EXPECT_EQ(represent_u(op, ScalarField::zero(box), box, {5, 5, 5}).max_abs(), 0.0);
  EXPECT_EQ(represent_first_derivative(op, ScalarField::zero(box), 1, box, {5, 5, 5}).max_abs(), 0.0);
}

TEST(Representation, HeatManufactured) {
  const ModelOperator op = kfp::testing::heat(1);
  const Expr u = Expr::parse("exp(-x1^2 - t^2) * bump(t, 0.5, 0.5)", 1);
  const ScalarField lu = op.apply(u, 0.0, space_time_box(1, 6.0, 0.0, 1.0));
  const Box out = space_time_box(1, 1.5, 0.1, 0.9);
  const std::vector<int> shape{13, 9};
  SolverOptions opt;
  opt.graded_floor = 1e-4;
  const GridFunction rep = represent_u(op, lu, out, shape, opt);
  const GridFunction exact = GridFunction::sample(ScalarField::from_expr(u), out, shape);
  EXPECT_LT(relative_error(rep, exact, INFINITY), 1e-3);
  const GridFunction drep = represent_first_derivative(op, lu, 0, out, shape, opt);
  const GridFunction dexact = GridFunction::sample(ScalarField::from_expr(u.diff_x(0)), out, shape);
  EXPECT_LT(relative_error(drep, dexact, INFINITY), 1e-3);
}

TEST(Representation, KolmogorovDerivativeConsistency) {
  // centred difference of represent_u against represent_first_derivative
  const ModelOperator op = kfp::testing::kolmogorov();
  const Expr u = Expr::parse("(1 + x1 * x2) * exp(-x1^2 - x2^2) * bump(t, 0.5, 0.5)", 2);
  const ScalarField lu = op.apply(u, 0.0, space_time_box(2, 6.0, 0.0, 1.0));
  const Box out = space_time_box(2, 1.0, 0.3, 0.7);
  const std::vector<int> shape{21, 3, 3};
  SolverOptions opt;
  opt.graded_floor = 1e-4;
  const GridFunction v = represent_u(op, lu, out, shape, opt);
  const GridFunction dv = represent_first_derivative(op, lu, 0, out, shape, opt);
  const double h = v.spacing(0);
  double worst = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    const int i = v.index(k, 0);
    if (i == 0 || i == v.extent(0) - 1) continue;
    const double fd = (v[k + 1] - v[k - 1]) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - dv[k]) / dv.max_abs());
  }
  EXPECT_LT(worst, 1e-3 + 2.0 * h * h);
  const GridFunction exact = GridFunction::sample(ScalarField::from_expr(u), out, shape);
  EXPECT_LT(relative_error(v, exact, INFINITY), 1e-3);
}

TEST(Representation, SupportChecks) {
  const ModelOperator op = kfp::testing::kolmogorov();
  const Box box = space_time_box(2, 1.0, 0.0, 1.0);
  EXPECT_KFP_ERROR(represent_u(op, ScalarField::zero(), box, {5, 5, 5}), ErrorCode::SupportNotCompact);
  const GridFunction ones = GridFunction::sample(constant(1.0), box, {5, 5, 5});
  EXPECT_KFP_ERROR(represent_u(op, ones), ErrorCode::SupportNotCompact);
}
