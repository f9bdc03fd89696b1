// kfp: command-line front end to the kfp library.
//
// Exit status: 0 when every enabled check passes, 1 when a check fails,
// 2 on configuration, validation or I/O errors.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "kfp/kfp.hpp"

namespace fs = std::filesystem;
using kfp::json;

namespace {

constexpr int kExitFail = 1;
constexpr int kExitInvalid = 2;
constexpr double kBankReferenceEpsilon = 1e-3;

struct Loaded {
  json spec;
  kfp::ModelOperator op;
};

Loaded load_operator(const std::string& path) {
  json spec = kfp::load_config(path);
  kfp::ModelOperator op = kfp::parse_operator(spec);
  return {std::move(spec), std::move(op)};
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    kfp::require(end != item.c_str() && *end == '\0', kfp::ErrorCode::InvalidArgument,
                 "malformed number '" + item + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  for (double v : parse_list(text)) out.push_back(static_cast<int>(v));
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  kfp::require(static_cast<bool>(out), kfp::ErrorCode::IOFailure, "cannot write " + path.string());
  out << text;
  kfp::require(static_cast<bool>(out), kfp::ErrorCode::IOFailure, "write failed for " + path.string());
}

/// Prints the report and, with an output directory, stores it as `name`.
int emit(const json& report, const std::string& out_dir, const std::string& name) {
  const std::string text = report.dump(2) + "\n";
  std::cout << text;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / name, text);
  }
  return report.value("pass", false) ? 0 : kExitFail;
}

kfp::Box space_time_box(int n, double half_width, double t_lo, double t_hi) {
  kfp::Box b = kfp::Box::cube(n, half_width);
  b.lo[n] = t_lo;
  b.hi[n] = t_hi;
  return b;
}

std::vector<kfp::ScalarField> as_fields(const std::vector<kfp::Expr>& bank, const kfp::Box& support) {
  std::vector<kfp::ScalarField> out;
  for (const auto& e : bank) out.push_back(kfp::ScalarField::from_expr(e, support));
  return out;
}

/// A check that passes only when `excess` is not positive.
kfp::CheckResult sign_check(std::string name, std::size_t samples, double excess) {
  return {std::move(name), samples, excess, 0.0, !(excess > 0.0)};
}

double stability(const std::vector<double>& v) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (double x : v) {
    if (!std::isfinite(x)) return std::numeric_limits<double>::infinity();
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------- geometry

struct GeometryArgs {
  std::string spec;
  std::size_t samples = 10000;
  std::uint64_t seed = 0;
  std::string out_dir;
};

int run_geometry(const GeometryArgs& a) {
  const Loaded l = load_operator(a.spec);
  kfp::CalibrationOptions copt;
  copt.seed = a.seed;
  const kfp::Geometry g = kfp::calibrated(l.op.geometry(), copt);
  const auto& info = g.info();
  std::ostringstream exps;
  for (std::size_t i = 0; i < info.exponents.size(); ++i) exps << (i ? ", " : "") << info.exponents[i];
  std::cout << "N = " << g.N() << "\n"
            << "q = " << g.q() << "\n"
            << "exponents = (" << exps.str() << ")\n"
            << "Q = " << info.Q << "\n"
            << "nilpotency index = " << info.nilpotency_index << "\n"
            << "kappa = " << *info.kappa << "\n"
            << "omega = " << *info.omega << "\n";
  const auto checks = kfp::geometry_axioms(g, a.samples, a.seed);
  for (const auto& c : checks)
    std::cout << "  " << c.check << ": worst " << c.worst_case << " (tol " << c.tolerance << ") "
              << (c.pass ? "PASS" : "FAIL") << "\n";
  const bool pass = kfp::all_pass(checks);
  std::cout << "axiom suite " << (pass ? "PASS" : "FAIL") << "\n";
  if (!a.out_dir.empty()) {
    fs::create_directories(a.out_dir);
    const json report = kfp::report_json("geometry", l.spec, checks, {{"geometry", kfp::geometry_json(g)}});
    write_text(fs::path(a.out_dir) / "geometry.json", report.dump(2) + "\n");
  }
  return pass ? 0 : kExitFail;
}

// ------------------------------------------------------------------- gamma

struct GammaArgs {
  std::string spec;
  std::string lo;
  std::string hi;
  std::string shape;
  std::string pole;
  std::string out;
};

int run_gamma(const GammaArgs& a) {
  const Loaded l = load_operator(a.spec);
  const kfp::ModelOperator& op = l.op;
  const int n = op.N();
  const int q = op.q();
  const std::vector<double> lo = parse_list(a.lo);
  const std::vector<double> hi = parse_list(a.hi);
  const std::vector<int> shape = parse_int_list(a.shape);
  const auto dims = static_cast<std::size_t>(n + 1);
  const std::vector<double> pole = a.pole.empty() ? std::vector<double>(dims, 0.0) : parse_list(a.pole);
  kfp::require(lo.size() == dims && hi.size() == dims && shape.size() == dims && pole.size() == dims,
               kfp::ErrorCode::ShapeMismatch, "--lo, --hi, --shape and --pole need N + 1 entries");
  kfp::Box box;
  box.lo = Eigen::Map<const kfp::Vector>(lo.data(), n + 1);
  box.hi = Eigen::Map<const kfp::Vector>(hi.data(), n + 1);
  const kfp::GridFunction grid(box, shape);
  const kfp::Point eta{Eigen::Map<const kfp::Vector>(pole.data(), n), pole[static_cast<std::size_t>(n)]};

  std::ostringstream csv;
  csv.precision(17);
  for (int i = 0; i < n; ++i) csv << "x" << i + 1 << ",";
  csv << "t,";
  for (int i = 0; i < n; ++i) csv << "y" << i + 1 << ",";
  csv << "s,gamma";
  for (int i = 0; i < q; ++i)
    for (int j = i; j < q; ++j) csv << ",d2gamma_" << i + 1 << j + 1;
  csv << "\n";
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const kfp::Point xi = grid.point(k);
    double value = 0.0;
    kfp::Matrix d2 = kfp::Matrix::Zero(q, q);
    if (xi.t > eta.t) {
      const kfp::KernelFrame frame(op, xi.t, eta.t);
      const kfp::Vector x = xi.x - frame.exp_forward() * eta.x;
      value = frame.value_at_offset(x);
      for (int i = 0; i < q; ++i)
        for (int j = i; j < q; ++j) d2(i, j) = frame.second_derivative(x, i, j);
    }
    for (int i = 0; i < n; ++i) csv << xi.x[i] << ",";
    csv << xi.t << ",";
    for (int i = 0; i < n; ++i) csv << eta.x[i] << ",";
    csv << eta.t << "," << value;
    for (int i = 0; i < q; ++i)
      for (int j = i; j < q; ++j) csv << "," << d2(i, j);
    csv << "\n";
  }
  if (a.out.empty()) std::cout << csv.str();
  else write_text(a.out, csv.str());
  return 0;
}

// ------------------------------------------------------------------- solve

kfp::GridFunction read_grid_csv(const std::string& path, const kfp::Box& box, const std::vector<int>& shape) {
  kfp::GridFunction g(box, shape);
  std::istringstream in(kfp::read_text_file(path));
  std::string line;
  std::getline(in, line);  // header
  std::size_t k = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    kfp::require(k < g.size(), kfp::ErrorCode::GridIncompatible, path + " has more rows than the grid");
    const auto pos = line.rfind(',');
    g[k++] = std::strtod(line.c_str() + (pos == std::string::npos ? 0 : pos + 1), nullptr);
  }
  kfp::require(k == g.size(), kfp::ErrorCode::GridIncompatible, path + " has fewer rows than the grid");
  return g;
}

/// Datum from a problem-file entry: an expression string or {csv, lo, hi, shape}.
kfp::ScalarField read_datum(const json& j, int n, const fs::path& base, const char* what) {
  if (j.is_string()) return kfp::ScalarField::from_expr(kfp::Expr::parse(j.get<std::string>(), n));
  kfp::require(j.is_object() && j.contains("csv"), kfp::ErrorCode::SpecInvalid,
               std::string(what) + " must be an expression or a {csv, lo, hi, shape} table");
  const kfp::Box box = kfp::parse_box(j, n);
  const std::vector<int> shape = kfp::parse_shape(j.at("shape"), n);
  return kfp::GridFunction(read_grid_csv((base / j.at("csv").get<std::string>()).string(), box, shape))
      .interpolant();
}

int run_solve(const std::string& problem_path, const std::string& out_dir) {
  const auto start = std::chrono::steady_clock::now();
  const json pb = kfp::load_config(problem_path);
  const fs::path base = fs::path(problem_path).parent_path();
  kfp::require(pb.contains("operator"), kfp::ErrorCode::SpecInvalid, "problem needs an 'operator' entry");
  const json spec = pb.at("operator").is_string()
                        ? kfp::load_config((base / pb.at("operator").get<std::string>()).string())
                        : pb.at("operator");
  kfp::ModelOperator op = kfp::parse_operator(spec);
  const int n = op.N();
  kfp::require(pb.contains("f") && pb.contains("g"), kfp::ErrorCode::SpecInvalid, "problem needs 'f' and 'g'");
  kfp::CauchyProblem problem{op, read_datum(pb.at("f"), n, base, "f"), read_datum(pb.at("g"), n, base, "g"),
                             pb.value("T", 1.0), pb.value("lambda", 0.0)};
  if (pb.contains("f_support")) problem.f.support = kfp::parse_box(pb.at("f_support"), n);
  if (pb.contains("g_support")) problem.g.support = kfp::parse_box(pb.at("g_support"), n);
  kfp::require(pb.contains("grid"), kfp::ErrorCode::SpecInvalid, "problem needs a 'grid' table");
  const json& grid = pb.at("grid");
  kfp::Box box;
  box.lo.resize(n + 1);
  box.hi.resize(n + 1);
  const json& lo = grid.at("lo");
  const json& hi = grid.at("hi");
  kfp::require(lo.size() == static_cast<std::size_t>(n) && hi.size() == static_cast<std::size_t>(n),
               kfp::ErrorCode::ShapeMismatch, "grid lo/hi need N entries (the time axis is [0, T])");
  for (int i = 0; i < n; ++i) {
    box.lo[i] = lo[static_cast<std::size_t>(i)].get<double>();
    box.hi[i] = hi[static_cast<std::size_t>(i)].get<double>();
  }
  box.lo[n] = 0.0;
  box.hi[n] = problem.T;
  const std::vector<int> shape = kfp::parse_shape(grid.at("shape"), n);
  kfp::SolverOptions opt;
  if (pb.contains("solver")) {
    const json& s = pb.at("solver");
    opt.chart_nodes = s.value("chart_nodes", opt.chart_nodes);
    opt.time_nodes = s.value("time_nodes", opt.time_nodes);
    opt.time_panel = s.value("time_panel", opt.time_panel);
  }
  const double p = pb.value("p", 2.0);
  const double tolerance = pb.value("residual_tolerance", 5e-2);

  const kfp::GridFunction u = kfp::solve_cauchy(problem, box, shape, opt);
  const double residual = kfp::cauchy_residual(problem, u);
  json norms = {{"Lp", u.lp_norm(p)}, {"Linf", u.max_abs()},
                {"W2p", u.sobolev_norm(op.geometry().drift(), op.q(), p)}};
  std::vector<kfp::CheckResult> checks{kfp::make_check("fd_residual", u.size(), residual, tolerance)};
  json extra = {{"p", p}, {"T", problem.T}, {"lambda", problem.lambda}, {"norms", norms},
                {"residuals", {{"fd_relative_l2", residual}}},
                {"note", "tolerances are engineering choices"}};
  try {
    extra["cauchy_constant"] = kfp::estimate_cauchy_constant(problem, u, p);
  } catch (const kfp::Error&) {
    extra["cauchy_constant"] = nullptr;
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  extra["timing"] = {{"seconds", seconds}};
  json report = kfp::report_json("solve", spec, checks, extra);

  std::ostringstream csv;
  csv.precision(17);
  for (int i = 0; i < n; ++i) csv << "x" << i + 1 << ",";
  csv << "t,u\n";
  for (std::size_t k = 0; k < u.size(); ++k) {
    const kfp::Point xi = u.point(k);
    for (int i = 0; i < n; ++i) csv << xi.x[i] << ",";
    csv << xi.t << "," << u[k] << "\n";
  }
  const fs::path dir = out_dir.empty() ? fs::path(".") : fs::path(out_dir);
  fs::create_directories(dir);
  write_text(dir / "u.csv", csv.str());
  return emit(report, out_dir.empty() ? "." : out_dir, "summary.json");
}

// ---------------------------------------------------------------- singular

struct SingularArgs {
  std::string spec;
  int i = 1;
  int j = 1;
  std::string epsilons = "0.1,0.01,0.001,0.0001";
  std::string ps = "2,4";
  std::uint64_t bank_seed = 0;
  std::size_t bank_size = 4;
  int per_axis = 9;
  int time_nodes = 9;
  std::string out_dir;
};

int run_singular(const SingularArgs& a) {
  const Loaded l = load_operator(a.spec);
  const kfp::ModelOperator& op = l.op;
  const int n = op.N();
  kfp::require(a.i >= 1 && a.j >= 1 && a.i <= op.q() && a.j <= op.q(), kfp::ErrorCode::InvalidArgument,
               "--i and --j must lie in 1..q");
  const std::vector<double> eps = parse_list(a.epsilons);
  const std::vector<double> ps = parse_list(a.ps);
  // T^eps commutes with the dilations up to eps -> eps / lambda^2, so the bank
  // is the unit bank dilated until the largest eps acts on it like
  // kBankReferenceEpsilon acts on the unit bank.
  const double lambda = std::sqrt(*std::max_element(eps.begin(), eps.end()) / kBankReferenceEpsilon);
  const kfp::Geometry& g = op.geometry();
  const kfp::Box support = kfp::dilate_box(g, lambda, space_time_box(n, 1.0, 0.0, 1.0));
  const kfp::Box out_box = kfp::dilate_box(g, lambda, space_time_box(n, 1.25, 0.0, 1.25));
  const std::vector<int> shape = kfp::uniform_shape(n, a.per_axis, a.time_nodes);
  kfp::SolverOptions opt;
  opt.chart_nodes = 16;
  opt.time_nodes = 6;
  opt.graded_floor = 1e-4;
  const auto bank = as_fields(kfp::make_test_bank(n, support, a.bank_size, a.bank_seed), support);
  const auto reports = kfp::empirical_operator_norm(op, a.i - 1, a.j - 1, eps, bank, ps, out_box, shape, opt);

  std::vector<kfp::CheckResult> checks;
  json per_p = json::array();
  for (std::size_t k = 0; k < ps.size(); ++k) {
    per_p.push_back({{"p", ps[k]}, {"epsilons", reports[k].epsilons}, {"norms", reports[k].norms},
                     {"variation", reports[k].variation}});
    checks.push_back(kfp::make_check("norm_variation_p" + std::to_string(static_cast<int>(ps[k])), eps.size(),
                                     reports[k].variation, 2.0));
  }

  // Truncation gap for a 1/2-Holder source: sup |T f - T^eps f| ~ eps^{alpha/2}.
  const double alpha = 0.5;
  std::string text = "sqrt(abs(x1)) * bump(x1, 0, 1)";
  for (int i = 1; i < n; ++i) text += " * bump(x" + std::to_string(i + 1) + ", 0, 1)";
  text += " * bump(t, 0.5, 0.5)";
  const kfp::Box unit = space_time_box(n, 1.0, 0.0, 1.0);
  const kfp::ScalarField holder = kfp::ScalarField::from_expr(kfp::Expr::parse(text, n), unit);
  std::vector<double> gaps;
  for (double e : eps)
    gaps.push_back(
        kfp::truncation_gap(op, holder, a.i - 1, a.j - 1, kfp::TruncationProfile{e}, unit, shape, opt).max_abs());
  const double slope = kfp::loglog_slope(eps, gaps);
  checks.push_back(sign_check("gap_slope_deficit", eps.size(), (alpha / 2.0 - 0.1) - slope));
  json extra = {{"i", a.i}, {"j", a.j}, {"bank_seed", a.bank_seed}, {"bank_size", a.bank_size},
                {"bank_dilation", lambda},
                {"operator_norms", per_p},
                {"truncation_gap", {{"alpha", alpha}, {"epsilons", eps}, {"sup_gap", gaps}, {"slope", slope}}}};
  return emit(kfp::report_json("singular", l.spec, checks, extra), a.out_dir, "singular.json");
}

// ---------------------------------------------------------------- estimate

struct EstimateArgs {
  std::string spec;
  std::string check;
  double p = 2.0;
  std::string ladder;
  std::uint64_t seed = 0;
  std::size_t bank_size = 4;
  int per_axis = 9;
  std::string baseline;
  std::string out_dir;
};

std::vector<double> ladder_or(const std::string& text, std::vector<double> fallback) {
  return text.empty() ? fallback : parse_list(text);
}

int run_estimate(const EstimateArgs& a) {
  const Loaded l = load_operator(a.spec);
  const int n = l.op.N();
  const kfp::Box box = kfp::Box::cube(n, 1.0);
  const std::vector<int> shape = kfp::uniform_shape(n, a.per_axis, a.per_axis);
  const std::vector<kfp::Expr> bank = kfp::make_test_bank(n, box, a.bank_size, a.seed);
  std::vector<kfp::CheckResult> checks;
  json extra = {{"check", a.check}, {"p", a.p}, {"seed", a.seed}, {"bank_size", a.bank_size}};
  double constant = 0.0;

  if (a.check == "maximal" || a.check == "sharp") {
    const kfp::Geometry& g = l.op.geometry();
    const std::vector<double> radii = ladder_or(a.ladder, {0.125, 0.25, 0.5});
    double below = 0.0;
    for (const auto& e : bank) {
      const kfp::GridFunction f = kfp::GridFunction::sample(kfp::ScalarField::from_expr(e), box, shape);
      if (a.check == "maximal") {
        const kfp::GridFunction m = kfp::hl_maximal(g, f, radii);
        for (std::size_t k = 0; k < f.size(); ++k) below = std::max(below, std::abs(f[k]) - m[k]);
        constant = std::max(constant, m.lp_norm(a.p) / f.lp_norm(a.p));
      } else {
        constant = std::max(constant, f.lp_norm(a.p) / kfp::sharp_maximal(g, f, radii).lp_norm(a.p));
      }
    }
    extra["radii"] = radii;
    if (a.check == "maximal") checks.push_back(sign_check("maximal_dominates", bank.size(), below));
    checks.push_back(kfp::make_check(a.check + "_constant_finite", bank.size(),
                                     std::isfinite(constant) ? 0.0 : constant, 1.0));
  } else if (a.check == "vmo") {
    const std::vector<double> radii = ladder_or(a.ladder, {0.125, 0.25, 0.5});
    const kfp::VMOReport r = kfp::coefficient_vmo(l.op, box, shape, radii);
    constant = r.eta.back();
    extra["radii"] = radii;
    extra["coefficient_eta"] = r.eta;
    extra["centers"] = r.centers;
    checks.push_back(kfp::make_check("vmo_modulus_finite", r.centers, std::isfinite(constant) ? 0.0 : constant, 1.0));
  } else if (a.check == "covering") {
    const kfp::Geometry& g = l.op.geometry();
    const std::vector<double> ladder = ladder_or(a.ladder, {0.5, 1.0, 2.0});
    std::vector<double> overlaps;
    bool covers = true;
    for (double R : ladder) {
      const kfp::BallFamily fam = kfp::build_covering(g, kfp::dilate_box(g, R, box), shape, R, 2.0);
      overlaps.push_back(fam.overlap_bound);
      covers = covers && fam.covers;
    }
    constant = *std::max_element(overlaps.begin(), overlaps.end());
    extra["radii"] = ladder;
    extra["overlap_bounds"] = overlaps;
    checks.push_back(kfp::make_check("covering_complete", ladder.size(), covers ? 0.0 : 1.0, 0.5));
    checks.push_back(kfp::make_check("overlap_stability", ladder.size(), stability(overlaps), 2.0 + 1e-12));
  } else if (a.check == "oscillation") {
    kfp::CalibrationOptions copt;
    copt.seed = a.seed;
    const kfp::ModelOperator op(kfp::calibrated(l.op.geometry(), copt), l.op.path());
    const double kappa = *op.geometry().info().kappa;
    kfp::OscillationOptions opt;
    for (double m : ladder_or(a.ladder, {4.0, 8.0})) opt.k_ladder.push_back(m * kappa);
    opt.p = a.p;
    opt.seed = a.seed;
    opt.center_box = kfp::Box::cube(n, 0.25);
    const kfp::OscillationReport r = kfp::check_oscillation_bound(op, bank, opt);
    constant = r.constant;
    extra["kappa"] = kappa;
    extra["k_ladder"] = opt.k_ladder;
    extra["per_k"] = r.per_k;
    extra["per_r"] = r.per_r;
    checks.push_back(kfp::make_check("oscillation_constant_finite", r.rows.size(),
                                     std::isfinite(constant) ? 0.0 : constant, 1.0));
  } else if (a.check == "sobolev") {
    kfp::SobolevOptions opt;
    opt.p = a.p;
    if (!a.ladder.empty()) opt.lambdas = parse_list(a.ladder);
    const kfp::SobolevReport r = kfp::check_sobolev_estimate(l.op, bank, box, shape, opt);
    constant = r.constant;
    extra["lambdas"] = r.lambdas;
    extra["damped"] = r.damped;
    extra["interp_constant"] = r.interp_constant;
    extra["per_function"] = r.per_function;
    checks.push_back(kfp::make_check("sobolev_constant_finite", bank.size(),
                                     std::isfinite(constant) && std::isfinite(r.interp_constant) ? 0.0 : 1.0, 0.5));
  } else {
    throw kfp::Error(kfp::ErrorCode::InvalidArgument, "unknown check '" + a.check + "'");
  }
  extra["constant"] = constant;

  if (!a.baseline.empty()) {
    const json base = kfp::load_config(a.baseline);
    const json& entry = base.contains(a.check) ? base.at(a.check) : base;
    kfp::require(entry.contains("constant"), kfp::ErrorCode::SpecInvalid, "baseline needs a 'constant'");
    const double ref = entry.at("constant").get<double>();
    const double rtol = entry.value("rtol", 1e-9);
    checks.push_back(kfp::make_check("baseline", 1, std::abs(constant - ref) / std::max(std::abs(ref), 1e-300),
                                     rtol));
    extra["baseline"] = ref;
  }
  return emit(kfp::report_json("estimate", l.spec, checks, extra), a.out_dir, "estimate_" + a.check + ".json");
}

// ------------------------------------------------------------------ verify

struct VerifyArgs {
  std::string target;
  std::string spec;
  std::size_t samples = 50;
  std::size_t derivative_samples = 1000;
  std::uint64_t seed = 0;
  std::string out_dir;
};

int run_verify(const VerifyArgs& a) {
  const Loaded l = load_operator(a.spec);
  kfp::require(a.target == "kernel" || a.target == "all", kfp::ErrorCode::InvalidArgument,
               "verify target must be 'kernel' or 'all'");
  kfp::KernelSuiteOptions opt;
  opt.normalization_samples = a.samples;
  opt.hessian_samples = a.derivative_samples;
  opt.seed = a.seed;
  std::vector<kfp::CheckResult> checks;
  if (a.target == "all") checks = kfp::geometry_axioms(l.op.geometry(), 10000, a.seed);
  for (auto& c : kfp::kernel_suite(l.op, opt)) checks.push_back(std::move(c));
  return emit(kfp::report_json("verify " + a.target, l.spec, checks), a.out_dir, "verify_" + a.target + ".json");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kolmogorov-Fokker-Planck operators: geometry, kernels, solvers and estimates"};
  app.set_version_flag("--version", kfp::kToolVersion);
  app.require_subcommand(1);

  GeometryArgs geo;
  auto* geometry = app.add_subcommand("geometry", "print the group structure and run the axiom suite");
  geometry->add_option("spec", geo.spec, "operator spec file (JSON or TOML)")->required();
  geometry->add_option("--samples", geo.samples, "axiom samples");
  geometry->add_option("--seed", geo.seed, "RNG seed");
  geometry->add_option("--out-dir", geo.out_dir, "directory for geometry.json");

  GammaArgs gam;
  auto* gamma = app.add_subcommand("gamma", "evaluate Gamma and its second derivatives on a grid (CSV)");
  gamma->add_option("spec", gam.spec, "operator spec file")->required();
  gamma->add_option("--lo", gam.lo, "grid lower corner x1,..,xN,t")->required();
  gamma->add_option("--hi", gam.hi, "grid upper corner x1,..,xN,t")->required();
  gamma->add_option("--shape", gam.shape, "nodes per axis")->required();
  gamma->add_option("--pole", gam.pole, "pole y1,..,yN,s (default origin)");
  gamma->add_option("--out", gam.out, "CSV file (default stdout)");

  std::string problem;
  std::string solve_dir;
  auto* solve = app.add_subcommand("solve", "solve a Cauchy problem; writes u.csv and summary.json");
  solve->add_option("problem", problem, "problem file")->required();
  solve->add_option("--out-dir", solve_dir, "output directory (default .)");

  SingularArgs sing;
  auto* singular = app.add_subcommand("singular", "empirical norms of the truncated singular integrals");
  singular->add_option("spec", sing.spec, "operator spec file")->required();
  singular->add_option("--i", sing.i, "derivative index i (1-based)");
  singular->add_option("--j", sing.j, "derivative index j (1-based)");
  singular->add_option("--epsilon-ladder", sing.epsilons, "comma-separated truncation levels");
  singular->add_option("--p", sing.ps, "comma-separated exponents");
  singular->add_option("--bank-seed", sing.bank_seed, "test bank seed");
  singular->add_option("--bank-size", sing.bank_size, "test bank size");
  singular->add_option("--per-axis", sing.per_axis, "output nodes per space axis");
  singular->add_option("--time-nodes", sing.time_nodes, "output nodes in time");
  singular->add_option("--out-dir", sing.out_dir, "directory for singular.json");

  EstimateArgs est;
  auto* estimate = app.add_subcommand("estimate", "maximal-function, covering and a priori estimates");
  estimate->add_option("spec", est.spec, "operator spec file")->required();
  estimate->add_option("--check", est.check, "which estimate")
      ->required()
      ->check(CLI::IsMember({"maximal", "sharp", "vmo", "covering", "oscillation", "sobolev"}));
  estimate->add_option("--p", est.p, "exponent");
  estimate->add_option("--ladder", est.ladder, "comma-separated radii, k multiples of kappa, or lambdas");
  estimate->add_option("--seed", est.seed, "RNG and bank seed");
  estimate->add_option("--bank-size", est.bank_size, "test bank size");
  estimate->add_option("--per-axis", est.per_axis, "grid nodes per axis");
  estimate->add_option("--baseline", est.baseline, "JSON/TOML file with a regression baseline");
  estimate->add_option("--out-dir", est.out_dir, "directory for the report");

  VerifyArgs ver;
  auto* verify = app.add_subcommand("verify", "property suites with a JSON report");
  verify->add_option("target", ver.target, "kernel | all")->required()->check(CLI::IsMember({"kernel", "all"}));
  verify->add_option("spec", ver.spec, "operator spec file")->required();
  verify->add_option("--samples", ver.samples, "sampled (x, t, s) triples");
  verify->add_option("--derivative-samples", ver.derivative_samples, "points for the derivative checks");
  verify->add_option("--seed", ver.seed, "RNG seed");
  verify->add_option("--out-dir", ver.out_dir, "directory for the report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  try {
    if (*geometry) return run_geometry(geo);
    if (*gamma) return run_gamma(gam);
    if (*solve) return run_solve(problem, solve_dir);
    if (*singular) return run_singular(sing);
    if (*estimate) return run_estimate(est);
    if (*verify) return run_verify(ver);
  } catch (const kfp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const json::exception& e) {
    std::cerr << "error: ConfigParse: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  return kExitInvalid;
}
