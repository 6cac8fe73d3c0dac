#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gtwr::csv {

// Shortest round-trip decimal representation of a double ("%.17g" always
// round-trips; 17 significant digits keep reruns byte-identical).
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot open for writing: " + path);
  }

  void raw_row(const std::string& line) { out_ << line << "\n"; }

  void begin_row() { first_ = true; }
  void field(const std::string& s) {
    if (!first_) out_ << ',';
    out_ << s;
    first_ = false;
  }
  void field(double v) { field(format_double(v)); }
  void field(long long v) { field(std::to_string(v)); }
  void field(int v) { field(std::to_string(v)); }
  void end_row() { out_ << "\n"; }

 private:
  std::ofstream out_;
  bool first_ = true;
};

// Splits one CSV line on commas (no quoting: the library's own formats never
// quote and never embed commas).  Trailing '\r' from CRLF files is dropped.
inline std::vector<std::string> split_line(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;  // raw fields, data rows only
};

inline Table read_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file, expected a header row");
  t.header = split_line(line);
  while (std::getline(in, line)) {
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    t.rows.push_back(split_line(line));
  }
  return t;
}

// Escapes a string for embedding in a JSON document.
inline std::string json_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 8);
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out += buf;
        } else {
          out.push_back(c);
        }
    }
  }
  return out;
}

// Strict double parse; `where` names file/line for the error message.
inline double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(where + ": cannot parse '" + s + "' as a number");
  }
}

}  // namespace gtwr::csv
