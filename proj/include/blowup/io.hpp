#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "blowup/config.hpp"
#include "blowup/errors.hpp"

namespace blowup {

using Json = nlohmann::ordered_json;

inline std::string fmt17(double v) { return detail::format_double(v); }

/// Non-finite doubles become null.
inline Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

namespace detail {

inline void write_json(std::string& out, const Json& j, int indent, int depth) {
  const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
  const std::string close(static_cast<std::size_t>(indent * depth), ' ');
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += pad + Json(it.key()).dump() + ": ";
        write_json(out, it.value(), indent, depth + 1);
      }
      out += "\n" + close + "}";
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ",\n";
        out += pad;
        write_json(out, j[i], indent, depth + 1);
      }
      out += "\n" + close + "]";
      return;
    }
    case Json::value_t::number_float: {
      const double v = j.get<double>();
      out += std::isfinite(v) ? format_double(v) : "null";
      return;
    }
    default:
      out += j.dump();
  }
}

}  // namespace detail

/// JSON text with every float at 17 significant digits.
inline std::string json_text(const Json& j) {
  std::string out;
  detail::write_json(out, j, 2, 0);
  return out + "\n";
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << text;
  if (!f) throw ConfigError("write failed: " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

/// CSV with a one-line header and 17-digit floats.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : ncol_(header.size()) {
    for (std::size_t i = 0; i < header.size(); ++i) text_ += (i ? "," : "") + header[i];
    text_ += "\n";
  }

  void row(const std::vector<double>& values) {
    if (values.size() != ncol_) throw DomainError("csv row width differs from header");
    for (std::size_t i = 0; i < values.size(); ++i) text_ += (i ? "," : "") + fmt17(values[i]);
    text_ += "\n";
  }

  void raw_row(const std::vector<std::string>& cells) {
    if (cells.size() != ncol_) throw DomainError("csv row width differs from header");
    for (std::size_t i = 0; i < cells.size(); ++i) text_ += (i ? "," : "") + cells[i];
    text_ += "\n";
  }

  const std::string& text() const { return text_; }
  void save(const std::filesystem::path& path) const { write_text_file(path, text_); }

 private:
  std::size_t ncol_;
  std::string text_;
};

/// Numeric CSV with a header line; '#' lines are skipped. Columns are looked up by name.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw ConfigError("csv has no column '" + name + "'");
  }

  std::vector<double> values(const std::string& name) const {
    const std::size_t c = column(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[c]);
    return out;
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(detail::trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  CsvTable t;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = detail::trim(line);
    if (s.empty() || s[0] == '#') continue;
    auto cells = split_csv_line(s);
    if (t.header.empty()) {
      t.header = cells;
      continue;
    }
    if (cells.size() != t.header.size())
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": row width differs from header");
    std::vector<double> r;
    for (const auto& c : cells) r.push_back(detail::parse_double(path.string() + ":" + std::to_string(lineno), c));
    t.rows.push_back(std::move(r));
  }
  if (t.header.empty()) throw ConfigError(path.string() + ": empty csv");
  return t;
}

/// "# key=value,key=value" metadata lines of a CSV file.
inline std::map<std::string, std::string> read_csv_metadata(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::map<std::string, std::string> meta;
  std::string line;
  while (std::getline(in, line)) {
    const std::string s = detail::trim(line);
    if (s.empty() || s[0] != '#') continue;
    for (const auto& kv : split_csv_line(detail::trim(s.substr(1)))) {
      const auto eq = kv.find('=');
      if (eq != std::string::npos) meta[detail::trim(kv.substr(0, eq))] = detail::trim(kv.substr(eq + 1));
    }
  }
  return meta;
}

}  // namespace blowup
