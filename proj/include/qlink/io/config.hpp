#pragma once

// JSON run configurations with line-accurate diagnostics. The document is
// parsed through a SAX handler fed by a line-counting iterator, so every
// value remembers the line it appeared on.

#include <cstddef>
#include <cstdint>
#include <iterator>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace qlink::io {

using Json = nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, std::size_t line, const std::string& msg)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + msg), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

namespace detail {

struct LineTracker {
  std::size_t line = 1;
  std::size_t token_line = 1;  // line of the last non-blank character read
};

class CountingIterator {
 public:
  using iterator_category = std::input_iterator_tag;
  using value_type = char;
  using difference_type = std::ptrdiff_t;
  using pointer = const char*;
  using reference = const char&;

  CountingIterator(const char* p, LineTracker* t) : p_(p), t_(t) {}
  reference operator*() const { return *p_; }
  CountingIterator& operator++() {
    const char c = *p_;
    if (c == '\n') {
      ++t_->line;
    } else if (c != ' ' && c != '\t' && c != '\r') {
      t_->token_line = t_->line;
    }
    ++p_;
    return *this;
  }
  CountingIterator operator++(int) {
    auto old = *this;
    ++*this;
    return old;
  }
  friend bool operator==(const CountingIterator& a, const CountingIterator& b) { return a.p_ == b.p_; }
  friend bool operator!=(const CountingIterator& a, const CountingIterator& b) { return a.p_ != b.p_; }

 private:
  const char* p_;
  LineTracker* t_;
};

inline std::string escape_pointer_token(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '~') {
      out += "~0";
    } else if (c == '/') {
      out += "~1";
    } else {
      out += c;
    }
  }
  return out;
}

class LineSax {
 public:
  LineSax(const std::string& source, LineTracker* t) : source_(source), t_(t) {}

  bool null() { return value(Json(nullptr)); }
  bool boolean(bool v) { return value(Json(v)); }
  bool number_integer(Json::number_integer_t v) { return value(Json(v)); }
  bool number_unsigned(Json::number_unsigned_t v) { return value(Json(v)); }
  bool number_float(Json::number_float_t v, const std::string&) { return value(Json(v)); }
  bool string(std::string& v) { return value(Json(v)); }
  bool binary(Json::binary_t&) { fail("binary values are not supported"); }
  bool start_object(std::size_t) { return open(Json::object(), false); }
  bool end_object() { return close(); }
  bool start_array(std::size_t) { return open(Json::array(), true); }
  bool end_array() { return close(); }
  bool key(std::string& k) {
    auto& top = stack_.back();
    if (top.node->contains(k)) fail("duplicate key '" + k + "'");
    top.key = k;
    return true;
  }
  bool parse_error(std::size_t, const std::string&, const nlohmann::detail::exception& ex) {
    std::string msg = ex.what();
    const auto pos = msg.find("syntax error");
    fail(pos == std::string::npos ? msg : msg.substr(pos));
  }

  Json root;
  std::map<std::string, std::size_t> lines;

 private:
  struct Frame {
    Json* node;
    bool array;
    std::string ptr;
    std::string key;
  };

  [[noreturn]] void fail(const std::string& msg) { throw ConfigError(source_, t_->token_line, msg); }

  Json* place(Json v, std::string& ptr) {
    if (stack_.empty()) {
      root = std::move(v);
      ptr = "";
      return &root;
    }
    auto& top = stack_.back();
    if (top.array) {
      ptr = top.ptr + "/" + std::to_string(top.node->size());
      top.node->push_back(std::move(v));
      return &top.node->back();
    }
    ptr = top.ptr + "/" + escape_pointer_token(top.key);
    (*top.node)[top.key] = std::move(v);
    return &(*top.node)[top.key];
  }

  bool value(Json v) {
    std::string ptr;
    place(std::move(v), ptr);
    lines[ptr] = t_->token_line;
    return true;
  }
  bool open(Json v, bool array) {
    std::string ptr;
    Json* node = place(std::move(v), ptr);
    lines[ptr] = t_->token_line;
    stack_.push_back(Frame{node, array, ptr, {}});
    return true;
  }
  bool close() {
    stack_.pop_back();
    return true;
  }

  std::string source_;
  LineTracker* t_;
  std::vector<Frame> stack_;
};

}  // namespace detail

class ConfigDocument;

// A view of one value inside a parsed document.
class Node {
 public:
  Node(const ConfigDocument* doc, const Json* j, std::string ptr) : doc_(doc), j_(j), ptr_(std::move(ptr)) {}

  const Json& json() const { return *j_; }
  const std::string& pointer() const { return ptr_; }
  std::size_t line() const;
  [[noreturn]] void fail(const std::string& msg) const;

  bool is_object() const { return j_->is_object(); }
  bool is_array() const { return j_->is_array(); }
  bool is_string() const { return j_->is_string(); }
  bool is_number() const { return j_->is_number(); }

  bool has(const std::string& key) const { return j_->is_object() && j_->contains(key); }

  Node at(const std::string& key) const {
    require_object();
    if (!j_->contains(key)) fail("missing required key '" + key + "'");
    return Node(doc_, &(*j_)[key], ptr_ + "/" + detail::escape_pointer_token(key));
  }
  std::optional<Node> get(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    return at(key);
  }

  std::vector<Node> elements() const {
    if (!j_->is_array()) fail("expected an array");
    std::vector<Node> out;
    for (std::size_t i = 0; i < j_->size(); ++i) out.emplace_back(doc_, &(*j_)[i], ptr_ + "/" + std::to_string(i));
    return out;
  }

  void allow_keys(std::initializer_list<const char*> keys) const {
    require_object();
    std::set<std::string> ok(keys.begin(), keys.end());
    for (auto it = j_->begin(); it != j_->end(); ++it)
      if (!ok.count(it.key())) at(it.key()).fail("unknown key '" + it.key() + "'");
  }

  void require_object() const {
    if (!j_->is_object()) fail("expected an object");
  }

  double as_double() const {
    if (!j_->is_number()) fail("expected a number");
    return j_->get<double>();
  }
  long long as_int() const {
    if (j_->is_number_integer()) return j_->get<long long>();
    if (j_->is_number_float()) {
      const double v = j_->get<double>();
      if (v == static_cast<double>(static_cast<long long>(v))) return static_cast<long long>(v);
    }
    fail("expected an integer");
  }
  int as_int_in(long long lo, long long hi) const {
    const long long v = as_int();
    if (v < lo || v > hi) fail("value " + std::to_string(v) + " outside [" + std::to_string(lo) + "," + std::to_string(hi) + "]");
    return static_cast<int>(v);
  }
  double as_probability() const {
    const double v = as_double();
    if (!(v >= 0.0 && v <= 1.0)) fail("probability must lie in [0,1]");
    return v;
  }
  std::string as_string() const {
    if (!j_->is_string()) fail("expected a string");
    return j_->get<std::string>();
  }
  bool as_bool() const {
    if (!j_->is_boolean()) fail("expected true or false");
    return j_->get<bool>();
  }

 private:
  const ConfigDocument* doc_;
  const Json* j_;
  std::string ptr_;
};

class ConfigDocument {
 public:
  static ConfigDocument parse(const std::string& text, std::string source) {
    detail::LineTracker tracker;
    detail::LineSax sax(source, &tracker);
    detail::CountingIterator first(text.data(), &tracker), last(text.data() + text.size(), &tracker);
    Json::sax_parse(first, last, &sax);
    if (!sax.root.is_object()) throw ConfigError(source, 1, "configuration must be a JSON object");
    ConfigDocument doc;
    doc.source_ = std::move(source);
    doc.root_ = std::make_shared<Json>(std::move(sax.root));
    doc.lines_ = std::move(sax.lines);
    return doc;
  }

  Node root() const { return Node(this, root_.get(), ""); }
  const Json& json() const { return *root_; }
  const std::string& source() const { return source_; }

  std::size_t line_of(std::string ptr) const {
    for (;;) {
      const auto it = lines_.find(ptr);
      if (it != lines_.end()) return it->second;
      const auto slash = ptr.rfind('/');
      if (slash == std::string::npos) return 1;
      ptr.resize(slash);
    }
  }

 private:
  std::string source_;
  std::shared_ptr<Json> root_;
  std::map<std::string, std::size_t> lines_;
};

inline std::size_t Node::line() const { return doc_->line_of(ptr_); }

inline void Node::fail(const std::string& msg) const {
  throw ConfigError(doc_->source(), line(), (ptr_.empty() ? std::string("/") : ptr_) + ": " + msg);
}

// FNV-1a over the canonical serialization (sorted keys, no whitespace).
inline std::uint64_t config_hash(const Json& j) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

}  // namespace qlink::io
