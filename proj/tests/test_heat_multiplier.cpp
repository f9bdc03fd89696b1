// Fourier-side oracle for the heat case: with Lbar u = u_xx - u_t the operator
// T_11 acts on f = Lbar u as the multiplier xi^2 / (xi^2 + i omega).

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "test_support.hpp"

using namespace kfp;
using kfp::testing::space_time_box;

TEST(HeatMultiplier, L2NormMatchesFourierSide) {
  const ModelOperator op = kfp::testing::heat(1);
  const Expr u = Expr::parse("exp(-2 * x1^2) * bump(t, 0.5, 0.5)", 1);
  const ScalarField f = op.apply(u, 0.0, space_time_box(1, 6.0, 0.0, 1.0));

  // periodic grid wide enough for the Gaussian and the time bump
  const int nx = 256;
  const int nt = 256;
  const double lx = 16.0;
  const double lt = 4.0;
  const double hx = lx / nx;
  const double ht = lt / nt;
  fftw_complex* data = fftw_alloc_complex(static_cast<std::size_t>(nx) * nt);
  for (int a = 0; a < nt; ++a)
    for (int b = 0; b < nx; ++b) {
      const double x = -lx / 2 + b * hx;
      const double t = -1.5 + a * ht;
      data[a * nx + b][0] = f(Vector::Constant(1, x), t);
      data[a * nx + b][1] = 0.0;
    }
  fftw_plan plan = fftw_plan_dft_2d(nt, nx, data, data, FFTW_FORWARD, FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);
  double f_norm2 = 0.0;
  double tf_norm2 = 0.0;
  for (int a = 0; a < nt; ++a)
    for (int b = 0; b < nx; ++b) {
      const double xi = 2.0 * std::numbers::pi / lx * (b <= nx / 2 ? b : b - nx);
      const double om = 2.0 * std::numbers::pi / lt * (a <= nt / 2 ? a : a - nt);
      const std::complex<double> fh(data[a * nx + b][0], data[a * nx + b][1]);
      const std::complex<double> denom(xi * xi, om);
      const std::complex<double> m = std::abs(denom) > 0.0 ? xi * xi / denom : 0.0;
      f_norm2 += std::norm(fh);
      tf_norm2 += std::norm(m * fh);
    }
  fftw_free(data);
  const double fourier_ratio = std::sqrt(tf_norm2 / f_norm2);

  // the output vanishes outside the support of u, so a box around it holds the full norm
  const Box out = space_time_box(1, 3.5, 0.0, 1.0);
  const std::vector<int> shape{57, 33};
  SolverOptions opt;
  opt.graded_floor = 1e-4;
  const GridFunction tf = apply_Tij(op, f, 0, 0, out, shape, opt);
  const GridFunction fg = GridFunction::sample(f, space_time_box(1, 6.0, 0.0, 1.0), {193, 33});
  const double spatial_ratio = tf.lp_norm(2.0) / fg.lp_norm(2.0);
  EXPECT_NEAR(spatial_ratio, fourier_ratio, 1e-2 * fourier_ratio);
}

TEST(HeatMultiplier, SobolevRatioMatchesFourierSide) {
  // ||u||_W / (||Lu|| + ||u||) with every norm taken through Parseval
  const ModelOperator op = kfp::testing::heat(1);
  const Expr u = Expr::parse("exp(-3 * x1^2) * bump(t, 0.5, 0.5)", 1);
  const int nx = 128;
  const int nt = 128;
  const double lx = 8.0;
  const double lt = 2.0;
  fftw_complex* data = fftw_alloc_complex(static_cast<std::size_t>(nx) * nt);
  for (int a = 0; a < nt; ++a)
    for (int b = 0; b < nx; ++b) {
      data[a * nx + b][0] = u(Vector::Constant(1, -lx / 2 + b * lx / nx), -0.5 + a * lt / nt);
      data[a * nx + b][1] = 0.0;
    }
  fftw_plan plan = fftw_plan_dft_2d(nt, nx, data, data, FFTW_FORWARD, FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);
  double s_u = 0.0, s_x = 0.0, s_xx = 0.0, s_t = 0.0, s_l = 0.0;
  for (int a = 0; a < nt; ++a)
    for (int b = 0; b < nx; ++b) {
      const double xi = 2.0 * std::numbers::pi / lx * (b <= nx / 2 ? b : b - nx);
      const double om = 2.0 * std::numbers::pi / lt * (a <= nt / 2 ? a : a - nt);
      const double p = data[a * nx + b][0] * data[a * nx + b][0] + data[a * nx + b][1] * data[a * nx + b][1];
      s_u += p;
      s_x += xi * xi * p;
      s_xx += xi * xi * xi * xi * p;
      s_t += om * om * p;
      s_l += (xi * xi * xi * xi + om * om) * p;
    }
  fftw_free(data);
  const double w = std::sqrt(s_u) + std::sqrt(s_t) + std::sqrt(s_x) + std::sqrt(s_xx);
  const double fourier = w / (std::sqrt(s_l) + std::sqrt(s_u));

  const SobolevReport rep = check_sobolev_estimate(op, {u}, space_time_box(1, 3.0, 0.0, 1.0), {97, 97});
  EXPECT_NEAR(rep.per_function[0], fourier, 2e-2 * fourier);
}
