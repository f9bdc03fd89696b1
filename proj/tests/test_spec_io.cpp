#include <cmath>
#include <numbers>

#include "test_support.hpp"

using namespace kfp;

namespace {

std::string operator_file(const char* name) { return std::string(KFP_OPERATOR_DIR) + "/" + name; }

}  // namespace

TEST(Config, TomlSubset) {
  const json j = parse_config(
      "# comment\n"
      "q = 1\n"
      "m = [1, 2]  # trailing\n"
      "name = \"chain\"\n"
      "flag = true\n"
      "blocks = [[[1.0]], [[2.5], [-1e-3]]]\n"
      "\n"
      "[coefficients]\n"
      "kind = 'constant_alpha'\n"
      "alpha = 0.5\n",
      "inline.toml");
  EXPECT_EQ(j["q"], 1);
  EXPECT_EQ(j["m"], json::array({1, 2}));
  EXPECT_EQ(j["name"], "chain");
  EXPECT_EQ(j["flag"], true);
  EXPECT_DOUBLE_EQ(j["blocks"][1][1][0].get<double>(), -1e-3);
  EXPECT_EQ(j["coefficients"]["kind"], "constant_alpha");
  EXPECT_DOUBLE_EQ(j["coefficients"]["alpha"].get<double>(), 0.5);
}

TEST(Config, JsonAndErrors) {
  EXPECT_EQ(parse_config("{\"q\": 2}")["q"], 2);
  EXPECT_KFP_ERROR(parse_config(""), ErrorCode::ConfigParse);
  EXPECT_KFP_ERROR(parse_config("  \n\t"), ErrorCode::ConfigParse);
  EXPECT_KFP_ERROR(parse_config("{\"q\": ", "x.json"), ErrorCode::ConfigParse);
  EXPECT_KFP_ERROR(parse_config("q = [1, 2", "x.toml"), ErrorCode::ConfigParse);
  EXPECT_KFP_ERROR(load_config(operator_file("does_not_exist.toml")), ErrorCode::IOFailure);
}

TEST(Config, HashIsDeterministic) {
  const json a = load_config(operator_file("kolmogorov.toml"));
  const json b = load_config(operator_file("kolmogorov.toml"));
  EXPECT_EQ(spec_hash(a), spec_hash(b));
  EXPECT_EQ(spec_hash(a).size(), 16u);
  EXPECT_NE(spec_hash(a), spec_hash(load_config(operator_file("chain3.toml"))));
}

TEST(Operators, ShippedSpecsParse) {
  const ModelOperator kol = parse_operator(load_config(operator_file("kolmogorov.toml")));
  EXPECT_EQ(kol.geometry().info().Q, 4);
  const ModelOperator heat = parse_operator(load_config(operator_file("heat1d.json")));
  EXPECT_EQ(heat.N(), 1);
  const ModelOperator chain = parse_operator(load_config(operator_file("chain3.toml")));
  EXPECT_EQ(chain.geometry().info().Q, 9);
  for (const char* name : {"heat2d.toml", "kolmogorov_piecewise.toml", "kolmogorov_smooth.toml"})
    EXPECT_NO_THROW(parse_operator(load_config(operator_file(name)))) << name;
}

TEST(Operators, InvalidSpecs) {
  EXPECT_KFP_ERROR(parse_operator(parse_config("q = 0\n", "a.toml")), ErrorCode::SpecInvalid);
  EXPECT_KFP_ERROR(parse_operator(parse_config("q = 1\n[coefficients]\nkind = \"odd\"\n", "a.toml")),
                   ErrorCode::SpecInvalid);
  EXPECT_KFP_ERROR(parse_operator(parse_config("q = 1\nm = [1]\nblocks = [[[0.0]]]\n", "a.toml")),
                   ErrorCode::RankDeficient);
}

TEST(Expression, Evaluation) {
  const Expr e = Expr::parse("2 * x1^2 - x2 / 4 + sin(pi * t) + exp(0) + sqrt(abs(-9))", 2);
  const Vector x = (Vector(2) << 1.5, 2.0).finished();
  EXPECT_DOUBLE_EQ(e(x, 0.5), 2.0 * 2.25 - 0.5 + 1.0 + 1.0 + 3.0);
  EXPECT_DOUBLE_EQ(Expr::parse("-2^2", 1)(Vector::Zero(1), 0.0), -4.0);
  EXPECT_DOUBLE_EQ(Expr::parse("bump(x1, 1, 2)", 1)(Vector::Constant(1, 1.0), 0.0), std::exp(-1.0));
  EXPECT_EQ(Expr::parse("bump(x1, 1, 2)", 1)(Vector::Constant(1, 3.0), 0.0), 0.0);
}

TEST(Expression, Derivatives) {
  const Expr e = Expr::parse("x1^3 * cos(t) + bump(x1, 0, 2)", 1);
  const double x = 0.7;
  const double t = 0.3;
  const double h = 1e-6;
  const auto at = [&](const Expr& f, double a, double b) { return f(Vector::Constant(1, a), b); };
  EXPECT_NEAR(at(e.diff_x(0), x, t), (at(e, x + h, t) - at(e, x - h, t)) / (2 * h), 1e-7);
  EXPECT_NEAR(at(e.diff_t(), x, t), (at(e, x, t + h) - at(e, x, t - h)) / (2 * h), 1e-7);
  const double h2 = 1e-4;
  EXPECT_NEAR(at(e.diff_x(0).diff_x(0), x, t),
              (at(e, x + h2, t) - 2.0 * at(e, x, t) + at(e, x - h2, t)) / (h2 * h2), 1e-5);
  EXPECT_FALSE(Expr::parse("t^2", 1).depends_on_x());
}

TEST(Expression, ParseErrors) {
  EXPECT_KFP_ERROR(Expr::parse("x1 +", 1), ErrorCode::ExpressionParse);
  EXPECT_KFP_ERROR(Expr::parse("x3", 2), ErrorCode::ExpressionParse);
  EXPECT_KFP_ERROR(Expr::parse("foo(x1)", 1), ErrorCode::ExpressionParse);
  EXPECT_KFP_ERROR(Expr::parse("(x1", 1), ErrorCode::ExpressionParse);
}
