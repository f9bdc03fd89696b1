#pragma once

// Operator and problem files. JSON is read with nlohmann::json; TOML files
// are restricted to the subset used here (tables, key = value, numbers,
// strings, booleans and nested arrays) and converted to the same JSON tree.

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kfp/coefficients.hpp"
#include "kfp/group_geometry.hpp"
#include "kfp/model_operator.hpp"

namespace kfp {

using json = nlohmann::ordered_json;

namespace toml_detail {

class Parser {
 public:
  explicit Parser(std::string text) : text_(std::move(text)) {}

  json parse() {
    json root = json::object();
    json* table = &root;
    while (true) {
      skip_blank_lines();
      if (pos_ >= text_.size()) break;
      if (peek() == '[') {
        ++pos_;
        require(peek() != '[', ErrorCode::ConfigParse, where("arrays of tables are not supported"));
        const std::vector<std::string> path = parse_key_path(']');
        expect(']');
        table = &root;
        for (const auto& k : path) {
          if (!table->contains(k)) (*table)[k] = json::object();
          table = &(*table)[k];
          require(table->is_object(), ErrorCode::ConfigParse, where("key redefined as table: " + k));
        }
        end_of_line();
        continue;
      }
      const std::vector<std::string> path = parse_key_path('=');
      skip_spaces();
      expect('=');
      skip_spaces();
      json value = parse_value();
      json* target = table;
      for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        if (!target->contains(path[i])) (*target)[path[i]] = json::object();
        target = &(*target)[path[i]];
      }
      require(!target->contains(path.back()), ErrorCode::ConfigParse, where("duplicate key " + path.back()));
      (*target)[path.back()] = std::move(value);
      end_of_line();
    }
    return root;
  }

 private:
  [[nodiscard]] char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  [[nodiscard]] std::string where(const std::string& msg) const {
    const auto line = 1 + std::count(text_.begin(), text_.begin() + static_cast<long>(std::min(pos_, text_.size())), '\n');
    return "TOML line " + std::to_string(line) + ": " + msg;
  }

  void expect(char c) {
    require(peek() == c, ErrorCode::ConfigParse, where(std::string("expected '") + c + "'"));
    ++pos_;
  }

  void skip_spaces() {
    while (peek() == ' ' || peek() == '\t') ++pos_;
  }

  void skip_comment() {
    if (peek() == '#')
      while (pos_ < text_.size() && peek() != '\n') ++pos_;
  }

  void skip_blank_lines() {
    while (pos_ < text_.size()) {
      skip_spaces();
      skip_comment();
      if (peek() == '\n' || peek() == '\r') ++pos_;
      else break;
    }
  }

  // whitespace, comments and newlines inside arrays
  void skip_array_space() {
    while (pos_ < text_.size()) {
      skip_spaces();
      skip_comment();
      if (peek() == '\n' || peek() == '\r') ++pos_;
      else break;
    }
  }

  void end_of_line() {
    skip_spaces();
    skip_comment();
    if (pos_ >= text_.size()) return;
    if (peek() == '\r') ++pos_;
    expect('\n');
  }

  std::vector<std::string> parse_key_path(char terminator) {
    std::vector<std::string> path;
    while (true) {
      skip_spaces();
      std::string key;
      if (peek() == '"') key = parse_string();
      else
        while (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-') key += text_[pos_++];
      require(!key.empty(), ErrorCode::ConfigParse, where("empty key"));
      path.push_back(key);
      skip_spaces();
      if (peek() == '.') {
        ++pos_;
        continue;
      }
      require(peek() == terminator, ErrorCode::ConfigParse, where("malformed key"));
      return path;
    }
  }

  std::string parse_string() {
    expect('"');
    std::string out;
    while (true) {
      require(pos_ < text_.size() && peek() != '\n', ErrorCode::ConfigParse, where("unterminated string"));
      const char c = text_[pos_++];
      if (c == '"') break;
      if (c == '\\') {
        const char e = text_[pos_++];
        switch (e) {
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          default: require(false, ErrorCode::ConfigParse, where("unsupported escape"));
        }
      } else {
        out += c;
      }
    }
    return out;
  }

  // 'literal' strings: no escapes, single line
  std::string parse_literal_string() {
    expect('\'');
    const std::size_t end = text_.find_first_of("'\n", pos_);
    require(end != std::string::npos && text_[end] == '\'', ErrorCode::ConfigParse, where("unterminated string"));
    std::string out = text_.substr(pos_, end - pos_);
    pos_ = end + 1;
    return out;
  }

  json parse_value() {
    const char c = peek();
    if (c == '"') return parse_string();
    if (c == '\'') return parse_literal_string();
    if (c == '[') {
      ++pos_;
      json arr = json::array();
      skip_array_space();
      while (peek() != ']') {
        arr.push_back(parse_value());
        skip_array_space();
        if (peek() == ',') {
          ++pos_;
          skip_array_space();
        } else {
          require(peek() == ']', ErrorCode::ConfigParse, where("expected ',' or ']'"));
        }
      }
      ++pos_;
      return arr;
    }
    std::string token;
    while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '.' ||
                                   peek() == '-' || peek() == '+' || peek() == '_'))
      token += text_[pos_++];
    require(!token.empty(), ErrorCode::ConfigParse, where("missing value"));
    if (token == "true") return true;
    if (token == "false") return false;
    std::string clean;
    for (char ch : token)
      if (ch != '_') clean += ch;
    const bool integral = clean.find_first_of(".eE") == std::string::npos && clean != "inf" && clean != "nan";
    try {
      std::size_t used = 0;
      if (integral) {
        const long long v = std::stoll(clean, &used);
        if (used == clean.size()) return v;
      } else {
        const double v = std::stod(clean, &used);
        if (used == clean.size()) return v;
      }
    } catch (const std::exception&) {
    }
    require(false, ErrorCode::ConfigParse, where("cannot parse value '" + token + "'"));
    return {};
  }

  std::string text_;
  std::size_t pos_ = 0;
};

}  // namespace toml_detail

inline json parse_toml(const std::string& text) { return toml_detail::Parser(text).parse(); }

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::IOFailure, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Parses a JSON or TOML document (chosen by extension, then by content).
inline json parse_config(const std::string& text, const std::string& name = "") {
  std::size_t first = text.find_first_not_of(" \t\r\n");
  require(first != std::string::npos, ErrorCode::ConfigParse, "empty configuration" + (name.empty() ? "" : ": " + name));
  const bool is_toml = name.ends_with(".toml");
  const bool is_json = name.ends_with(".json") || (!is_toml && text[first] == '{');
  if (is_json) {
    try {
      json j = json::parse(text);
      require(j.is_object(), ErrorCode::ConfigParse, "configuration must be an object");
      return j;
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ConfigParse, std::string("JSON: ") + e.what());
    }
  }
  json j = parse_toml(text);
  require(!j.empty(), ErrorCode::ConfigParse, "configuration has no keys" + (name.empty() ? "" : ": " + name));
  return j;
}

inline json load_config(const std::string& path) { return parse_config(read_text_file(path), path); }

namespace spec_detail {

inline const json& field(const json& j, const char* key) {
  require(j.contains(key), ErrorCode::SpecInvalid, std::string("missing field '") + key + "'");
  return j.at(key);
}

inline double number(const json& j, const char* what) {
  require(j.is_number(), ErrorCode::SpecInvalid, std::string(what) + " must be a number");
  return j.get<double>();
}

inline Matrix matrix(const json& j, const char* what) {
  require(j.is_array() && !j.empty(), ErrorCode::SpecInvalid, std::string(what) + " must be a nonempty matrix");
  const auto rows = static_cast<Eigen::Index>(j.size());
  require(j[0].is_array(), ErrorCode::SpecInvalid, std::string(what) + " must be a list of rows");
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    require(row.is_array() && static_cast<Eigen::Index>(row.size()) == cols, ErrorCode::ShapeMismatch,
            std::string(what) + " has ragged rows");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = number(row[static_cast<std::size_t>(c)], what);
  }
  return m;
}

inline Expr expression(const json& j, int n_space, const char* what) {
  if (j.is_number()) return Expr::constant(j.get<double>());
  require(j.is_string(), ErrorCode::SpecInvalid, std::string(what) + " must be a string or number");
  try {
    return Expr::parse(j.get<std::string>(), n_space);
  } catch (const Error& e) {
    throw Error(ErrorCode::SpecInvalid, std::string(what) + ": " + e.what());
  }
}

}  // namespace spec_detail

inline BlockStructure parse_block_structure(const json& j) {
  using namespace spec_detail;
  const json& q = field(j, "q");
  require(q.is_number_integer() && q.get<long long>() >= 1, ErrorCode::SpecInvalid, "q must be a positive integer");
  BlockStructure s;
  s.q = q.get<int>();
  if (j.contains("m")) {
    require(j["m"].is_array(), ErrorCode::SpecInvalid, "m must be a list");
    for (const auto& v : j["m"]) {
      require(v.is_number_integer() && v.get<long long>() >= 1, ErrorCode::SpecInvalid, "m entries must be positive integers");
      s.m.push_back(v.get<int>());
    }
  }
  if (j.contains("blocks")) {
    require(j["blocks"].is_array(), ErrorCode::SpecInvalid, "blocks must be a list of matrices");
    for (const auto& b : j["blocks"]) s.blocks.push_back(matrix(b, "block"));
  }
  return s;
}

inline CoefficientPath parse_coefficients(const json& j, int q, int n_space) {
  using namespace spec_detail;
  const std::string kind = field(j, "kind").get<std::string>();
  const double nu = j.contains("nu") ? number(j["nu"], "nu") : 1.0;
  if (kind == "constant_alpha") return CoefficientPath::constant_alpha(q, number(field(j, "alpha"), "alpha"), nu);
  if (kind == "constant_matrix") {
    const Matrix a = matrix(field(j, "matrix"), "matrix");
    require(a.rows() == q && a.cols() == q, ErrorCode::ShapeMismatch, "coefficient matrix must be q x q");
    return CoefficientPath::constant_matrix(a, nu);
  }
  if (kind == "piecewise_constant") {
    std::vector<double> cuts;
    for (const auto& b : field(j, "breakpoints")) cuts.push_back(number(b, "breakpoint"));
    std::vector<Matrix> mats;
    for (const auto& m : field(j, "matrices")) {
      mats.push_back(matrix(m, "matrix"));
      require(mats.back().rows() == q && mats.back().cols() == q, ErrorCode::ShapeMismatch,
              "coefficient matrices must be q x q");
    }
    return CoefficientPath::piecewise_constant(cuts, mats, nu);
  }
  if (kind == "closed_form") {
    const json& rows = field(j, "entries");
    require(rows.is_array() && static_cast<int>(rows.size()) == q, ErrorCode::ShapeMismatch,
            "closed-form entries must have q rows");
    std::vector<std::vector<Expr>> entries;
    for (const auto& row : rows) {
      require(row.is_array() && static_cast<int>(row.size()) == q, ErrorCode::ShapeMismatch,
              "closed-form entries must have q columns");
      std::vector<Expr> r;
      for (const auto& e : row) r.push_back(expression(e, n_space, "coefficient entry"));
      entries.push_back(std::move(r));
    }
    return CoefficientPath::closed_form(std::move(entries), nu);
  }
  throw Error(ErrorCode::SpecInvalid, "unknown coefficient kind '" + kind + "'");
}

/// Operator file: {"q", "m", "blocks", "coefficients": {"kind", ..., "nu"}}.
/// Without a coefficients table the identity (alpha = 1, nu = 1) is used.
inline ModelOperator parse_operator(const json& j) {
  require(j.is_object(), ErrorCode::SpecInvalid, "operator spec must be an object");
  Geometry g(parse_block_structure(j));
  CoefficientPath path = j.contains("coefficients") ? parse_coefficients(j["coefficients"], g.q(), g.N())
                                                    : CoefficientPath::constant_alpha(g.q(), 1.0, 1.0);
  return {std::move(g), std::move(path)};
}

/// FNV-1a over the canonical JSON dump of an operator file.
inline std::string spec_hash(const json& j) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline Box parse_box(const json& j, int n_space) {
  using namespace spec_detail;
  Box b;
  const json& lo = field(j, "lo");
  const json& hi = field(j, "hi");
  require(lo.is_array() && hi.is_array() && static_cast<int>(lo.size()) == n_space + 1 &&
              static_cast<int>(hi.size()) == n_space + 1,
          ErrorCode::ShapeMismatch, "box bounds need N + 1 entries (t last)");
  b.lo = Vector(n_space + 1);
  b.hi = Vector(n_space + 1);
  for (int i = 0; i <= n_space; ++i) {
    b.lo[i] = number(lo[static_cast<std::size_t>(i)], "box bound");
    b.hi[i] = number(hi[static_cast<std::size_t>(i)], "box bound");
    require(b.hi[i] > b.lo[i], ErrorCode::SpecInvalid, "box must have positive extent");
  }
  return b;
}

inline std::vector<int> parse_shape(const json& j, int n_space) {
  require(j.is_array() && static_cast<int>(j.size()) == n_space + 1, ErrorCode::ShapeMismatch,
          "grid shape needs N + 1 entries (t last)");
  std::vector<int> s;
  for (const auto& v : j) {
    require(v.is_number_integer() && v.get<int>() >= 4, ErrorCode::SpecInvalid, "grid needs >= 4 nodes per axis");
    s.push_back(v.get<int>());
  }
  return s;
}

}  // namespace kfp
