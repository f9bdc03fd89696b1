#pragma once

// Minimal closed-form expression language over the variables x1..xN and t:
// + - * / ^, exp, sin, cos, log, sqrt, abs and the compactly supported
// bump(arg, center, width) = exp(-1 / (1 - r^2)) for |r| < 1, r = (arg - center) / width.
// Expressions differentiate symbolically and compile to a flat tape for
// evaluation inside quadrature loops.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <numbers>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kfp/error.hpp"
#include "kfp/linalg.hpp"

namespace kfp {

namespace expr_detail {

enum class Op { Const, VarX, VarT, Add, Sub, Mul, Div, Neg, Pow, Exp, Sin, Cos, Log, Sqrt, Abs, Sign, Bump };

struct Node {
  Op op = Op::Const;
  double value = 0.0;  // Const value
  int var = 0;         // VarX index
  std::shared_ptr<const Node> a;
  std::shared_ptr<const Node> b;
  double center = 0.0;  // Bump
  double width = 1.0;   // Bump
  int order = 0;        // Bump derivative order
};

using NodePtr = std::shared_ptr<const Node>;

inline constexpr int kMaxBumpOrder = 12;

/// k-th derivative of exp(-1/(1 - r^2)) at r, via truncated Taylor arithmetic.
inline double bump_derivative(double r, int k) {
  const double h0 = 1.0 - r * r;
  if (h0 <= 0.0) return 0.0;
  if (1.0 / h0 > 700.0) return 0.0;
  std::array<double, kMaxBumpOrder + 1> h{};
  h[0] = h0;
  if (k >= 1) h[1] = -2.0 * r;
  if (k >= 2) h[2] = -1.0;
  std::array<double, kMaxBumpOrder + 1> inv{};
  inv[0] = 1.0 / h0;
  for (int n = 1; n <= k; ++n) {
    double acc = 0.0;
    for (int j = 1; j <= std::min(n, 2); ++j) acc += h[static_cast<std::size_t>(j)] * inv[static_cast<std::size_t>(n - j)];
    inv[static_cast<std::size_t>(n)] = -acc / h0;
  }
  std::array<double, kMaxBumpOrder + 1> e{};
  e[0] = std::exp(-inv[0]);
  for (int n = 1; n <= k; ++n) {
    double acc = 0.0;
    for (int j = 1; j <= n; ++j) acc += j * (-inv[static_cast<std::size_t>(j)]) * e[static_cast<std::size_t>(n - j)];
    e[static_cast<std::size_t>(n)] = acc / n;
  }
  double factorial = 1.0;
  for (int j = 2; j <= k; ++j) factorial *= j;
  return e[static_cast<std::size_t>(k)] * factorial;
}

inline NodePtr make_const(double v) {
  auto n = std::make_shared<Node>();
  n->op = Op::Const;
  n->value = v;
  return n;
}

inline bool is_const(const NodePtr& n, double v) { return n->op == Op::Const && n->value == v; }
inline bool is_const(const NodePtr& n) { return n->op == Op::Const; }

inline NodePtr make_unary(Op op, NodePtr a) {
  if (is_const(a)) {
    const double v = a->value;
    switch (op) {
      case Op::Neg: return make_const(-v);
      case Op::Exp: return make_const(std::exp(v));
      case Op::Sin: return make_const(std::sin(v));
      case Op::Cos: return make_const(std::cos(v));
      case Op::Log: return make_const(std::log(v));
      case Op::Sqrt: return make_const(std::sqrt(v));
      case Op::Abs: return make_const(std::abs(v));
      case Op::Sign: return make_const(v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0));
      default: break;
    }
  }
  if (op == Op::Neg && a->op == Op::Neg) return a->a;
  auto n = std::make_shared<Node>();
  n->op = op;
  n->a = std::move(a);
  return n;
}

inline NodePtr make_binary(Op op, NodePtr a, NodePtr b) {
  if (is_const(a) && is_const(b)) {
    const double x = a->value;
    const double y = b->value;
    switch (op) {
      case Op::Add: return make_const(x + y);
      case Op::Sub: return make_const(x - y);
      case Op::Mul: return make_const(x * y);
      case Op::Div: return make_const(x / y);
      case Op::Pow: return make_const(std::pow(x, y));
      default: break;
    }
  }
  switch (op) {
    case Op::Add:
      if (is_const(a, 0.0)) return b;
      if (is_const(b, 0.0)) return a;
      break;
    case Op::Sub:
      if (is_const(b, 0.0)) return a;
      if (is_const(a, 0.0)) return make_unary(Op::Neg, b);
      break;
    case Op::Mul:
      if (is_const(a, 0.0) || is_const(b, 0.0)) return make_const(0.0);
      if (is_const(a, 1.0)) return b;
      if (is_const(b, 1.0)) return a;
      if (is_const(a, -1.0)) return make_unary(Op::Neg, b);
      if (is_const(b, -1.0)) return make_unary(Op::Neg, a);
      break;
    case Op::Div:
      if (is_const(a, 0.0)) return make_const(0.0);
      if (is_const(b, 1.0)) return a;
      break;
    case Op::Pow:
      if (is_const(b, 0.0)) return make_const(1.0);
      if (is_const(b, 1.0)) return a;
      break;
    default: break;
  }
  auto n = std::make_shared<Node>();
  n->op = op;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

inline NodePtr make_bump(NodePtr arg, double center, double width, int order) {
  require(width > 0.0, ErrorCode::ExpressionParse, "bump width must be positive");
  require(order <= kMaxBumpOrder, ErrorCode::InvalidArgument, "bump derivative order too high");
  auto n = std::make_shared<Node>();
  n->op = Op::Bump;
  n->a = std::move(arg);
  n->center = center;
  n->width = width;
  n->order = order;
  return n;
}

// Differentiation with respect to x_i (var >= 0) or t (var == -1).
inline NodePtr differentiate(const NodePtr& n, int var, std::unordered_map<const Node*, NodePtr>& memo) {
  if (auto it = memo.find(n.get()); it != memo.end()) return it->second;
  auto d = [&](const NodePtr& c) { return differentiate(c, var, memo); };
  NodePtr out;
  switch (n->op) {
    case Op::Const: out = make_const(0.0); break;
    case Op::VarX: out = make_const(var >= 0 && n->var == var ? 1.0 : 0.0); break;
    case Op::VarT: out = make_const(var < 0 ? 1.0 : 0.0); break;
    case Op::Add: out = make_binary(Op::Add, d(n->a), d(n->b)); break;
    case Op::Sub: out = make_binary(Op::Sub, d(n->a), d(n->b)); break;
    case Op::Neg: out = make_unary(Op::Neg, d(n->a)); break;
    case Op::Mul:
      out = make_binary(Op::Add, make_binary(Op::Mul, d(n->a), n->b), make_binary(Op::Mul, n->a, d(n->b)));
      break;
    case Op::Div: {
      const NodePtr da = d(n->a);
      const NodePtr db = d(n->b);
      const NodePtr first = make_binary(Op::Div, da, n->b);
      if (is_const(db, 0.0)) {
        out = first;
      } else {
        out = make_binary(Op::Sub, first,
                          make_binary(Op::Div, make_binary(Op::Mul, n->a, db), make_binary(Op::Mul, n->b, n->b)));
      }
      break;
    }
    case Op::Pow: {
      const NodePtr da = d(n->a);
      if (is_const(n->b)) {
        const double c = n->b->value;
        out = make_binary(Op::Mul, make_binary(Op::Mul, make_const(c), make_binary(Op::Pow, n->a, make_const(c - 1.0))), da);
      } else {
        // d(u^v) = u^v (v' log u + v u' / u)
        const NodePtr db = d(n->b);
        out = make_binary(Op::Mul, n,
                          make_binary(Op::Add, make_binary(Op::Mul, db, make_unary(Op::Log, n->a)),
                                      make_binary(Op::Div, make_binary(Op::Mul, n->b, da), n->a)));
      }
      break;
    }
    case Op::Exp: out = make_binary(Op::Mul, n, d(n->a)); break;
    case Op::Sin: out = make_binary(Op::Mul, make_unary(Op::Cos, n->a), d(n->a)); break;
    case Op::Cos: out = make_unary(Op::Neg, make_binary(Op::Mul, make_unary(Op::Sin, n->a), d(n->a))); break;
    case Op::Log: out = make_binary(Op::Div, d(n->a), n->a); break;
    case Op::Sqrt: out = make_binary(Op::Div, d(n->a), make_binary(Op::Mul, make_const(2.0), n)); break;
    case Op::Abs: out = make_binary(Op::Mul, make_unary(Op::Sign, n->a), d(n->a)); break;
    case Op::Sign: out = make_const(0.0); break;
    case Op::Bump: {
      const NodePtr da = d(n->a);
      if (is_const(da, 0.0)) {
        out = make_const(0.0);
      } else {
        out = make_binary(Op::Mul,
                          make_binary(Op::Mul, make_bump(n->a, n->center, n->width, n->order + 1), make_const(1.0 / n->width)),
                          da);
      }
      break;
    }
  }
  memo.emplace(n.get(), out);
  return out;
}

inline bool depends(const NodePtr& n, bool on_x) {
  switch (n->op) {
    case Op::Const: return false;
    case Op::VarX: return on_x;
    case Op::VarT: return !on_x;
    default: break;
  }
  return (n->a && depends(n->a, on_x)) || (n->b && depends(n->b, on_x));
}

inline int max_var(const NodePtr& n) {
  int m = n->op == Op::VarX ? n->var : -1;
  if (n->a) m = std::max(m, max_var(n->a));
  if (n->b) m = std::max(m, max_var(n->b));
  return m;
}

inline std::string to_string(const NodePtr& n) {
  auto num = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    const std::string s = buf;
    return v < 0 ? "(" + s + ")" : s;
  };
  switch (n->op) {
    case Op::Const: return num(n->value);
    case Op::VarX: return "x" + std::to_string(n->var + 1);
    case Op::VarT: return "t";
    case Op::Add: return "(" + to_string(n->a) + " + " + to_string(n->b) + ")";
    case Op::Sub: return "(" + to_string(n->a) + " - " + to_string(n->b) + ")";
    case Op::Mul: return "(" + to_string(n->a) + " * " + to_string(n->b) + ")";
    case Op::Div: return "(" + to_string(n->a) + " / " + to_string(n->b) + ")";
    case Op::Neg: return "(-" + to_string(n->a) + ")";
    case Op::Pow: return "(" + to_string(n->a) + " ^ " + to_string(n->b) + ")";
    case Op::Exp: return "exp(" + to_string(n->a) + ")";
    case Op::Sin: return "sin(" + to_string(n->a) + ")";
    case Op::Cos: return "cos(" + to_string(n->a) + ")";
    case Op::Log: return "log(" + to_string(n->a) + ")";
    case Op::Sqrt: return "sqrt(" + to_string(n->a) + ")";
    case Op::Abs: return "abs(" + to_string(n->a) + ")";
    case Op::Sign: return "sign(" + to_string(n->a) + ")";
    case Op::Bump: {
      std::string base = "bump(" + to_string(n->a) + ", " + num(n->center) + ", " + num(n->width) + ")";
      return n->order == 0 ? base : "bump_d" + std::to_string(n->order) + base.substr(4);
    }
  }
  return "?";
}

class Parser {
 public:
  Parser(std::string_view text, int n_space) : text_(text), n_space_(n_space) {}

  NodePtr parse() {
    NodePtr e = expression();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected trailing input");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::ExpressionParse,
                what + " at position " + std::to_string(pos_) + " in '" + std::string(text_) + "'");
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  NodePtr expression() {
    NodePtr lhs = term();
    for (;;) {
      if (accept('+'))
        lhs = make_binary(Op::Add, lhs, term());
      else if (accept('-'))
        lhs = make_binary(Op::Sub, lhs, term());
      else
        return lhs;
    }
  }

  NodePtr term() {
    NodePtr lhs = unary();
    for (;;) {
      if (accept('*'))
        lhs = make_binary(Op::Mul, lhs, unary());
      else if (accept('/'))
        lhs = make_binary(Op::Div, lhs, unary());
      else
        return lhs;
    }
  }

  NodePtr unary() {
    if (accept('-')) return make_unary(Op::Neg, unary());
    if (accept('+')) return unary();
    return power();
  }

  NodePtr power() {
    NodePtr base = primary();
    if (accept('^')) return make_binary(Op::Pow, base, unary());
    return base;
  }

  double constant_argument() {
    NodePtr e = expression();
    if (!is_const(e)) fail("bump center and width must be numeric constants");
    return e->value;
  }

  NodePtr primary() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr e = expression();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = text_.data() + pos_;
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      if (end == begin) fail("malformed number");
      pos_ += static_cast<std::size_t>(end - begin);
      return make_const(v);
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
        ++pos_;
      const std::string name(text_.substr(start, pos_ - start));
      if (accept('(')) {
        if (name == "bump") {
          NodePtr arg = expression();
          expect(',');
          const double center = constant_argument();
          expect(',');
          const double width = constant_argument();
          expect(')');
          if (width <= 0.0) fail("bump width must be positive");
          return make_bump(arg, center, width, 0);
        }
        NodePtr arg = expression();
        expect(')');
        static const std::unordered_map<std::string, Op> functions{
            {"exp", Op::Exp}, {"sin", Op::Sin},   {"cos", Op::Cos}, {"log", Op::Log},
            {"sqrt", Op::Sqrt}, {"abs", Op::Abs}, {"sign", Op::Sign}};
        auto it = functions.find(name);
        if (it == functions.end()) fail("unknown function '" + name + "'");
        return make_unary(it->second, arg);
      }
      if (name == "t") {
        auto n = std::make_shared<Node>();
        n->op = Op::VarT;
        return n;
      }
      if (name == "pi") return make_const(std::numbers::pi);
      if (name.size() >= 2 && name[0] == 'x' &&
          name.find_first_not_of("0123456789", 1) == std::string::npos) {
        const int index = std::stoi(name.substr(1));
        if (index < 1 || index > n_space_) fail("variable '" + name + "' out of range");
        auto n = std::make_shared<Node>();
        n->op = Op::VarX;
        n->var = index - 1;
        return n;
      }
      fail("unknown identifier '" + name + "'");
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  std::string_view text_;
  int n_space_;
  std::size_t pos_ = 0;
};

struct Instruction {
  Op op;
  int a = -1;
  int b = -1;
  double value = 0.0;
  int var = 0;
  double center = 0.0;
  double width = 1.0;
  int order = 0;
};

}  // namespace expr_detail

/// Flat evaluation tape; shared subexpressions are computed once.
class CompiledExpr {
 public:
  CompiledExpr() = default;

  explicit CompiledExpr(const expr_detail::NodePtr& root) {
    std::unordered_map<const expr_detail::Node*, int> slots;
    result_ = emit(root, slots);
  }

  [[nodiscard]] double operator()(const double* x, double t) const {
    thread_local std::vector<double> reg;
    if (reg.size() < tape_.size()) reg.resize(tape_.size());
    using expr_detail::Op;
    for (std::size_t k = 0; k < tape_.size(); ++k) {
      const auto& in = tape_[k];
      const double a = in.a >= 0 ? reg[static_cast<std::size_t>(in.a)] : 0.0;
      const double b = in.b >= 0 ? reg[static_cast<std::size_t>(in.b)] : 0.0;
      double v = 0.0;
      switch (in.op) {
        case Op::Const: v = in.value; break;
        case Op::VarX: v = x[in.var]; break;
        case Op::VarT: v = t; break;
        case Op::Add: v = a + b; break;
        case Op::Sub: v = a - b; break;
        case Op::Mul: v = a * b; break;
        case Op::Div: v = a / b; break;
        case Op::Neg: v = -a; break;
        case Op::Pow: v = pow_(a, b); break;
        case Op::Exp: v = std::exp(a); break;
        case Op::Sin: v = std::sin(a); break;
        case Op::Cos: v = std::cos(a); break;
        case Op::Log: v = std::log(a); break;
        case Op::Sqrt: v = std::sqrt(a); break;
        case Op::Abs: v = std::abs(a); break;
        case Op::Sign: v = a > 0 ? 1.0 : (a < 0 ? -1.0 : 0.0); break;
        case Op::Bump:
          v = expr_detail::bump_derivative((a - in.center) / in.width, in.order);
          break;
      }
      reg[k] = v;
    }
    return reg[static_cast<std::size_t>(result_)];
  }

  [[nodiscard]] std::size_t size() const { return tape_.size(); }

 private:
  static double pow_(double a, double b) {
    if (b == 2.0) return a * a;
    if (b == 3.0) return a * a * a;
    if (b == std::floor(b) && std::abs(b) <= 8.0) {
      const int n = static_cast<int>(b);
      double r = 1.0;
      const double base = n < 0 ? 1.0 / a : a;
      for (int i = 0; i < std::abs(n); ++i) r *= base;
      return r;
    }
    return std::pow(a, b);
  }

  int emit(const expr_detail::NodePtr& n, std::unordered_map<const expr_detail::Node*, int>& slots) {
    if (auto it = slots.find(n.get()); it != slots.end()) return it->second;
    expr_detail::Instruction in{n->op};
    if (n->a) in.a = emit(n->a, slots);
    if (n->b) in.b = emit(n->b, slots);
    in.value = n->value;
    in.var = n->var;
    in.center = n->center;
    in.width = n->width;
    in.order = n->order;
    tape_.push_back(in);
    const int slot = static_cast<int>(tape_.size()) - 1;
    slots.emplace(n.get(), slot);
    return slot;
  }

  std::vector<expr_detail::Instruction> tape_;
  int result_ = 0;
};

/// Immutable closed-form expression in (x, t).
class Expr {
 public:
  Expr() : Expr(expr_detail::make_const(0.0)) {}
  explicit Expr(expr_detail::NodePtr root) : root_(std::move(root)), tape_(std::make_shared<CompiledExpr>(root_)) {}

  static Expr parse(std::string_view text, int n_space) {
    return Expr(expr_detail::Parser(text, n_space).parse());
  }
  static Expr constant(double v) { return Expr(expr_detail::make_const(v)); }
  static Expr x(int i) {
    auto n = std::make_shared<expr_detail::Node>();
    n->op = expr_detail::Op::VarX;
    n->var = i;
    return Expr(n);
  }
  static Expr t() {
    auto n = std::make_shared<expr_detail::Node>();
    n->op = expr_detail::Op::VarT;
    return Expr(n);
  }

  [[nodiscard]] double operator()(const Vector& x, double t) const { return (*tape_)(x.data(), t); }
  [[nodiscard]] double operator()(const double* x, double t) const { return (*tape_)(x, t); }

  [[nodiscard]] Expr diff_x(int i) const {
    std::unordered_map<const expr_detail::Node*, expr_detail::NodePtr> memo;
    return Expr(expr_detail::differentiate(root_, i, memo));
  }
  [[nodiscard]] Expr diff_t() const {
    std::unordered_map<const expr_detail::Node*, expr_detail::NodePtr> memo;
    return Expr(expr_detail::differentiate(root_, -1, memo));
  }

  [[nodiscard]] bool depends_on_x() const { return expr_detail::depends(root_, true); }
  [[nodiscard]] bool depends_on_t() const { return expr_detail::depends(root_, false); }
  [[nodiscard]] bool is_constant() const { return root_->op == expr_detail::Op::Const; }
  [[nodiscard]] double constant_value() const { return root_->value; }
  /// Number of space variables referenced (highest x index + 1).
  [[nodiscard]] int space_arity() const { return expr_detail::max_var(root_) + 1; }
  [[nodiscard]] std::string str() const { return expr_detail::to_string(root_); }
  [[nodiscard]] std::size_t tape_size() const { return tape_->size(); }
  [[nodiscard]] const expr_detail::NodePtr& node() const { return root_; }

  friend Expr operator+(const Expr& a, const Expr& b) { return Expr(expr_detail::make_binary(expr_detail::Op::Add, a.root_, b.root_)); }
  friend Expr operator-(const Expr& a, const Expr& b) { return Expr(expr_detail::make_binary(expr_detail::Op::Sub, a.root_, b.root_)); }
  friend Expr operator*(const Expr& a, const Expr& b) { return Expr(expr_detail::make_binary(expr_detail::Op::Mul, a.root_, b.root_)); }
  friend Expr operator/(const Expr& a, const Expr& b) { return Expr(expr_detail::make_binary(expr_detail::Op::Div, a.root_, b.root_)); }
  friend Expr operator*(double a, const Expr& b) { return Expr::constant(a) * b; }
  friend Expr operator-(const Expr& a) { return Expr(expr_detail::make_unary(expr_detail::Op::Neg, a.root_)); }

 private:
  expr_detail::NodePtr root_;
  std::shared_ptr<const CompiledExpr> tape_;
};

}  // namespace kfp
