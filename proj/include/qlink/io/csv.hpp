#pragma once

// Result tables and their CSV form: a '#'-prefixed metadata block, a header
// row, then data rows. Reals use the shortest decimal that round-trips.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "qlink/errors.hpp"

namespace qlink::io {

struct NA {
  friend bool operator==(NA, NA) { return true; }
};

using Cell = std::variant<NA, long long, double, std::string>;

inline std::string format_number(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string format_cell(const Cell& c) {
  struct {
    std::string operator()(NA) const { return "NA"; }
    std::string operator()(long long v) const { return std::to_string(v); }
    std::string operator()(double v) const { return format_number(v); }
    std::string operator()(const std::string& s) const {
      if (s.find_first_of(",\"\n") == std::string::npos) return s;
      std::string out = "\"";
      for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
      }
      return out + "\"";
    }
  } visit;
  return std::visit(visit, c);
}

class ResultTable {
 public:
  ResultTable() = default;
  explicit ResultTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  void set_meta(std::string key, std::string value) {
    for (auto& kv : meta_)
      if (kv.first == key) {
        kv.second = std::move(value);
        return;
      }
    meta_.emplace_back(std::move(key), std::move(value));
  }
  const std::string* meta(const std::string& key) const {
    for (const auto& kv : meta_)
      if (kv.first == key) return &kv.second;
    return nullptr;
  }

  void add_row(std::vector<Cell> row) {
    if (row.size() != columns_.size()) {
      throw ParameterError("row has " + std::to_string(row.size()) + " cells, table has " +
                           std::to_string(columns_.size()) + " columns");
    }
    rows_.push_back(std::move(row));
  }

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < columns_.size(); ++i)
      if (columns_[i] == name) return i;
    throw ParameterError("no column '" + name + "'");
  }

  // Numeric view of a cell; integers widen, NA is empty.
  std::optional<double> number(std::size_t row, const std::string& col) const {
    const Cell& c = rows_.at(row).at(column(col));
    if (const auto* d = std::get_if<double>(&c)) return *d;
    if (const auto* i = std::get_if<long long>(&c)) return static_cast<double>(*i);
    return std::nullopt;
  }

  const std::vector<std::string>& columns() const { return columns_; }
  const std::vector<std::vector<Cell>>& rows() const { return rows_; }
  const std::vector<std::pair<std::string, std::string>>& metadata() const { return meta_; }

 private:
  std::vector<std::pair<std::string, std::string>> meta_;
  std::vector<std::string> columns_;
  std::vector<std::vector<Cell>> rows_;
};

inline void write_csv(std::ostream& out, const ResultTable& t) {
  for (const auto& [k, v] : t.metadata()) out << "# " << k << ": " << v << '\n';
  for (std::size_t i = 0; i < t.columns().size(); ++i) out << (i ? "," : "") << t.columns()[i];
  out << '\n';
  for (const auto& row : t.rows()) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_cell(row[i]);
    out << '\n';
  }
}

namespace detail {

inline Cell parse_cell(const std::string& s, bool quoted) {
  if (quoted) return s;
  if (s == "NA") return NA{};
  if (s.empty()) return s;
  const char* b = s.data();
  const char* e = b + s.size();
  {
    long long v = 0;
    const auto r = std::from_chars(b, e, v);
    if (r.ec == std::errc() && r.ptr == e) return v;
  }
  const char c0 = s[0];
  if ((c0 >= '0' && c0 <= '9') || c0 == '-' || c0 == '.') {
    double v = 0.0;
    const auto r = std::from_chars(b, e, v);
    if (r.ec == std::errc() && r.ptr == e) return v;
  }
  return s;
}

inline std::vector<Cell> split_row(const std::string& line) {
  std::vector<Cell> out;
  std::string cur;
  bool quoted = false, in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (in_quotes) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        in_quotes = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      in_quotes = quoted = true;
    } else if (ch == ',') {
      out.push_back(parse_cell(cur, quoted));
      cur.clear();
      quoted = false;
    } else {
      cur += ch;
    }
  }
  out.push_back(parse_cell(cur, quoted));
  return out;
}

}  // namespace detail

inline ResultTable read_csv(std::istream& in) {
  std::string line;
  std::vector<std::pair<std::string, std::string>> meta;
  while (std::getline(in, line)) {
    if (line.rfind("# ", 0) == 0) {
      const auto colon = line.find(": ", 2);
      if (colon == std::string::npos) throw ParameterError("malformed metadata line: " + line);
      meta.emplace_back(line.substr(2, colon - 2), line.substr(colon + 2));
      continue;
    }
    break;
  }
  std::vector<std::string> cols;
  for (const auto& c : detail::split_row(line)) cols.push_back(format_cell(c));
  ResultTable t(cols);
  for (auto& [k, v] : meta) t.set_meta(k, v);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    t.add_row(detail::split_row(line));
  }
  return t;
}

}  // namespace qlink::io
