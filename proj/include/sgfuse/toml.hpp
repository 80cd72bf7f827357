#pragma once

// Minimal TOML subset reader for the project's config files: tables,
// arrays of tables, bare/quoted keys, strings, integers, floats, booleans,
// and (nested, possibly multi-line) arrays. No dates, no inline tables.

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace sgfuse::toml {

class Value;
using Array = std::vector<Value>;
using Table = std::map<std::string, Value>;

class Value {
 public:
  Value() : v_(Table{}) {}
  explicit Value(std::string s) : v_(std::move(s)) {}
  explicit Value(int64_t i) : v_(i) {}
  explicit Value(double d) : v_(d) {}
  explicit Value(bool b) : v_(b) {}
  explicit Value(Array a) : v_(std::move(a)) {}
  explicit Value(Table t) : v_(std::move(t)) {}

  bool is_table() const { return std::holds_alternative<Table>(v_); }
  bool is_array() const { return std::holds_alternative<Array>(v_); }
  bool is_string() const { return std::holds_alternative<std::string>(v_); }
  bool is_int() const { return std::holds_alternative<int64_t>(v_); }
  bool is_float() const { return std::holds_alternative<double>(v_); }
  bool is_bool() const { return std::holds_alternative<bool>(v_); }

  const std::string& as_string() const { return expect<std::string>("string"); }
  int64_t as_int() const { return expect<int64_t>("integer"); }
  bool as_bool() const { return expect<bool>("boolean"); }
  const Array& as_array() const { return expect<Array>("array"); }
  const Table& as_table() const { return expect<Table>("table"); }
  Table& as_table() { return std::get<Table>(v_); }
  Array& mutable_array() { return std::get<Array>(v_); }

  double as_double() const {
    if (is_int()) return static_cast<double>(std::get<int64_t>(v_));
    return expect<double>("float");
  }

  bool contains(const std::string& key) const {
    return is_table() && as_table().count(key) > 0;
  }

  const Value& at(const std::string& key) const {
    const auto& t = as_table();
    auto it = t.find(key);
    if (it == t.end()) throw std::runtime_error("toml: missing key '" + key + "'");
    return it->second;
  }

  // Lookups with defaults, for optional config fields.
  double get_double(const std::string& key, double dflt) const {
    return contains(key) ? at(key).as_double() : dflt;
  }
  int64_t get_int(const std::string& key, int64_t dflt) const {
    return contains(key) ? at(key).as_int() : dflt;
  }
  bool get_bool(const std::string& key, bool dflt) const {
    return contains(key) ? at(key).as_bool() : dflt;
  }
  std::string get_string(const std::string& key, const std::string& dflt) const {
    return contains(key) ? at(key).as_string() : dflt;
  }

  std::vector<double> as_double_array() const {
    std::vector<double> out;
    for (const Value& v : as_array()) out.push_back(v.as_double());
    return out;
  }
  std::vector<std::string> as_string_array() const {
    std::vector<std::string> out;
    for (const Value& v : as_array()) out.push_back(v.as_string());
    return out;
  }

 private:
  template <typename T>
  const T& expect(const char* what) const {
    if (!std::holds_alternative<T>(v_)) {
      throw std::runtime_error(std::string("toml: value is not a ") + what);
    }
    return std::get<T>(v_);
  }

  std::variant<std::string, int64_t, double, bool, Array, Table> v_;
};

namespace detail {

class Parser {
 public:
  explicit Parser(std::string text) : text_(std::move(text)) {}

  Table parse() {
    Table root;
    Table* current = &root;
    while (!eof()) {
      skip_ws_and_comments();
      if (eof()) break;
      if (peek() == '[') {
        current = parse_table_header(root);
      } else {
        auto [key, value] = parse_key_value();
        if (current->count(key)) fail("duplicate key '" + key + "'");
        current->emplace(std::move(key), std::move(value));
      }
    }
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw std::runtime_error("toml: line " + std::to_string(line_) + ": " + msg);
  }

  bool eof() const { return pos_ >= text_.size(); }
  char peek() const { return text_[pos_]; }
  char get() {
    const char c = text_[pos_++];
    if (c == '\n') ++line_;
    return c;
  }

  void skip_inline_ws() {
    while (!eof() && (peek() == ' ' || peek() == '\t' || peek() == '\r')) get();
  }

  void skip_ws_and_comments() {
    while (!eof()) {
      const char c = peek();
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        get();
      } else if (c == '#') {
        while (!eof() && peek() != '\n') get();
      } else {
        break;
      }
    }
  }

  void expect_line_end() {
    skip_inline_ws();
    if (!eof() && peek() == '#') {
      while (!eof() && peek() != '\n') get();
    }
    if (!eof()) {
      if (peek() != '\n') fail("unexpected trailing characters");
      get();
    }
  }

  std::string parse_key_token() {
    skip_inline_ws();
    if (eof()) fail("expected key");
    if (peek() == '"') return parse_basic_string();
    std::string key;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' ||
                      peek() == '-')) {
      key.push_back(get());
    }
    if (key.empty()) fail("expected key");
    return key;
  }

  // Walks (creating as needed) the dotted path of a [header]; returns the leaf.
  Table* descend(Table& root, const std::vector<std::string>& path, bool array_of_tables) {
    Table* t = &root;
    for (std::size_t i = 0; i < path.size(); ++i) {
      const std::string& part = path[i];
      const bool leaf = (i + 1 == path.size());
      auto it = t->find(part);
      if (it == t->end()) {
        if (leaf && array_of_tables) {
          Array arr;
          arr.emplace_back(Table{});
          it = t->emplace(part, Value(std::move(arr))).first;
          auto& a = it->second.mutable_array();
          return &a.back().as_table();
        }
        it = t->emplace(part, Value(Table{})).first;
        t = &it->second.as_table();
        continue;
      }
      Value& v = it->second;
      if (leaf && array_of_tables) {
        if (!v.is_array()) fail("'" + part + "' is not an array of tables");
        auto& arr = v.mutable_array();
        arr.emplace_back(Table{});
        return &arr.back().as_table();
      }
      if (v.is_array()) {
        auto& arr = v.mutable_array();
        if (arr.empty() || !arr.back().is_table()) fail("'" + part + "' is not a table");
        t = &arr.back().as_table();
      } else if (v.is_table()) {
        t = &v.as_table();
      } else {
        fail("'" + part + "' is not a table");
      }
    }
    return t;
  }

  Table* parse_table_header(Table& root) {
    get();  // '['
    const bool array_of_tables = !eof() && peek() == '[';
    if (array_of_tables) get();
    std::vector<std::string> path;
    while (true) {
      path.push_back(parse_key_token());
      skip_inline_ws();
      if (!eof() && peek() == '.') {
        get();
        continue;
      }
      break;
    }
    if (eof() || get() != ']') fail("expected ']' in table header");
    if (array_of_tables && (eof() || get() != ']')) fail("expected ']]' in table header");
    expect_line_end();
    return descend(root, path, array_of_tables);
  }

  std::pair<std::string, Value> parse_key_value() {
    std::string key = parse_key_token();
    skip_inline_ws();
    if (eof() || get() != '=') fail("expected '=' after key '" + key + "'");
    skip_inline_ws();
    Value v = parse_value();
    expect_line_end();
    return {std::move(key), std::move(v)};
  }

  Value parse_value() {
    if (eof()) fail("expected value");
    const char c = peek();
    if (c == '"') return Value(parse_basic_string());
    if (c == '[') return parse_array();
    if (c == 't' || c == 'f') return parse_bool();
    return parse_number();
  }

  std::string parse_basic_string() {
    get();  // opening quote
    std::string out;
    while (true) {
      if (eof()) fail("unterminated string");
      char c = get();
      if (c == '"') break;
      if (c == '\\') {
        if (eof()) fail("unterminated escape");
        const char e = get();
        switch (e) {
          case 'n': out.push_back('\n'); break;
          case 't': out.push_back('\t'); break;
          case '"': out.push_back('"'); break;
          case '\\': out.push_back('\\'); break;
          default: fail("unsupported escape");
        }
      } else {
        out.push_back(c);
      }
    }
    return out;
  }

  Value parse_bool() {
    if (text_.compare(pos_, 4, "true") == 0) {
      pos_ += 4;
      return Value(true);
    }
    if (text_.compare(pos_, 5, "false") == 0) {
      pos_ += 5;
      return Value(false);
    }
    fail("expected boolean");
  }

  Value parse_number() {
    std::string tok;
    while (!eof()) {
      const char c = peek();
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '+' || c == '-' || c == '.' ||
          c == 'e' || c == 'E' || c == '_') {
        tok.push_back(get());
      } else {
        break;
      }
    }
    if (tok.empty()) fail("expected value");
    std::erase(tok, '_');
    const bool is_float = tok.find_first_of(".eE") != std::string::npos;
    try {
      if (is_float) return Value(std::stod(tok));
      return Value(static_cast<int64_t>(std::stoll(tok)));
    } catch (const std::exception&) {
    }
    fail("malformed number '" + tok + "'");
  }

  Value parse_array() {
    get();  // '['
    Array arr;
    while (true) {
      skip_ws_and_comments();
      if (eof()) fail("unterminated array");
      if (peek() == ']') {
        get();
        break;
      }
      arr.push_back(parse_value());
      skip_ws_and_comments();
      if (!eof() && peek() == ',') {
        get();
        continue;
      }
      skip_ws_and_comments();
      if (eof() || peek() != ']') fail("expected ',' or ']' in array");
    }
    return Value(std::move(arr));
  }

  std::string text_;
  std::size_t pos_ = 0;
  int line_ = 1;
};

}  // namespace detail

inline Value parse(const std::string& text) {
  detail::Parser p(text);
  return Value(p.parse());
}

inline Value parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("toml: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace sgfuse::toml
