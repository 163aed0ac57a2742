#pragma once

// Minimal RFC-4180 CSV reading and writing. Doubles are written in their
// shortest round-trip form so emitted files are byte-stable.

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <type_traits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace meritmatch::csv {

class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::string_view kMissing = "NA";

inline std::string quote(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string{field};
  std::string out;
  out.reserve(field.size() + 2);
  out.push_back('"');
  for (const char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline std::string format(double v) {
  if (std::isnan(v)) return std::string{kMissing};
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string format(std::optional<double> v) { return v ? format(*v) : std::string{kMissing}; }

template <typename Int>
  requires std::is_integral_v<Int>
std::string format(Int v) {
  return std::to_string(v);
}

inline void write_row(std::ostream& os, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) os << ',';
    os << quote(fields[i]);
  }
  os << '\n';
}

/// Parses RFC-4180 text. Accepts LF or CRLF line endings; a trailing newline is optional.
inline std::vector<std::vector<std::string>> parse(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t i = 0;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    rows.push_back(std::move(row));
    row.clear();
  };
  while (i < text.size()) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          i += 2;
          continue;
        }
        in_quotes = false;
        ++i;
        if (i < text.size() && text[i] != ',' && text[i] != '\n' && text[i] != '\r')
          throw CsvError("csv: unexpected character after closing quote");
        continue;
      }
      field.push_back(c);
      ++i;
      continue;
    }
    if (c == '"') {
      if (field_started && !field.empty()) throw CsvError("csv: quote inside unquoted field");
      in_quotes = true;
      field_started = true;
      ++i;
    } else if (c == ',') {
      end_field();
      ++i;
    } else if (c == '\r' || c == '\n') {
      end_row();
      i += (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ? 2 : 1;
    } else {
      field.push_back(c);
      field_started = true;
      ++i;
    }
  }
  if (in_quotes) throw CsvError("csv: unterminated quoted field");
  if (field_started || !row.empty()) end_row();
  return rows;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CsvError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline double to_double(std::string_view s) {
  if (s == kMissing || s.empty()) return std::nan("");
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw CsvError("csv: not a number: '" + std::string{s} + "'");
  return v;
}

inline long long to_int(std::string_view s) {
  long long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw CsvError("csv: not an integer: '" + std::string{s} + "'");
  return v;
}

/// Header-addressed view over parsed rows.
class Document {
 public:
  explicit Document(std::vector<std::vector<std::string>> rows) {
    if (rows.empty()) throw CsvError("csv: missing header");
    header_ = std::move(rows.front());
    rows.erase(rows.begin());
    for (std::size_t r = 0; r < rows.size(); ++r)
      if (rows[r].size() != header_.size())
        throw CsvError("csv: row " + std::to_string(r + 2) + " has " + std::to_string(rows[r].size()) +
                       " fields, expected " + std::to_string(header_.size()));
    rows_ = std::move(rows);
  }

  static Document from_file(const std::string& path) { return Document{parse(read_text(path))}; }

  [[nodiscard]] const std::vector<std::string>& header() const { return header_; }
  [[nodiscard]] std::size_t size() const { return rows_.size(); }

  [[nodiscard]] std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header_.size(); ++i)
      if (header_[i] == name) return i;
    throw CsvError("csv: missing column '" + std::string{name} + "'");
  }

  [[nodiscard]] const std::string& at(std::size_t row, std::string_view name) const { return rows_.at(row)[column(name)]; }
  [[nodiscard]] const std::vector<std::string>& row(std::size_t r) const { return rows_.at(r); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace meritmatch::csv
