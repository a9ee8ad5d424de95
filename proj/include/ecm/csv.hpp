#pragma once

#include <algorithm>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ecm/config.hpp"
#include "ecm/machine.hpp"
#include "ecm/scaling.hpp"
#include "ecm/traffic.hpp"

namespace ecm::csvio {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

inline double number(const Table& t, std::size_t row, int col,
                     const std::string& what) {
  const std::string& s = t.rows[row][col];
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(what + ": row " + std::to_string(row + 2) +
                      ": not a number: '" + s + "'");
  }
}

}  // namespace detail

inline Table parse(const std::string& text, const std::string& what) {
  Table t;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    line = detail::trim(line);
    if (line.empty() || line[0] == '#') continue;
    auto cells = detail::split(line);
    if (t.header.empty()) {
      t.header = cells;
    } else {
      if (cells.size() != t.header.size())
        throw ConfigError(what + ": row with " +
                          std::to_string(cells.size()) + " cells, header has " +
                          std::to_string(t.header.size()));
      t.rows.push_back(cells);
    }
  }
  if (t.header.empty()) throw ConfigError(what + ": empty file");
  return t;
}

inline int require_column(const Table& t, const std::string& name,
                          const std::string& what) {
  int c = t.column(name);
  if (c < 0) throw ConfigError(what + ": missing column '" + name + "'");
  return c;
}

// cores,performance_it_per_s
inline std::vector<std::pair<int, double>> load_measured_scaling(
    const std::string& text, const std::string& what = "measured csv") {
  Table t = parse(text, what);
  int cc = require_column(t, "cores", what);
  int pc = require_column(t, "performance_it_per_s", what);
  std::vector<std::pair<int, double>> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    int n = static_cast<int>(detail::number(t, r, cc, what));
    out.emplace_back(n, detail::number(t, r, pc, what));
  }
  return out;
}

// threads,cycles
inline BarrierTable load_barrier(const std::string& text,
                                 const std::string& what = "barrier csv") {
  Table t = parse(text, what);
  int tc = require_column(t, "threads", what);
  int cc = require_column(t, "cycles", what);
  BarrierTable bt;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    bt.points.emplace_back(static_cast<int>(detail::number(t, r, tc, what)),
                           detail::number(t, r, cc, what));
  }
  std::sort(bt.points.begin(), bt.points.end());
  return bt;
}

// link,down_bytes_per_it,up_bytes_per_it
inline std::map<LinkId, LinkVolume> load_traffic(
    const std::string& text, const std::string& what = "traffic csv") {
  Table t = parse(text, what);
  int lc = require_column(t, "link", what);
  int dc = require_column(t, "down_bytes_per_it", what);
  int uc = require_column(t, "up_bytes_per_it", what);
  std::map<LinkId, LinkVolume> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    auto id = link_from_string(t.rows[r][lc]);
    if (!id)
      throw ConfigError(what + ": row " + std::to_string(r + 2) +
                        ": unknown link '" + t.rows[r][lc] + "'");
    out[*id] = {detail::number(t, r, dc, what),
                detail::number(t, r, uc, what)};
  }
  return out;
}

// residence,cycles_per_it
inline std::vector<std::pair<Level, double>> load_residence_cycles(
    const std::string& text, const std::string& what = "measured csv") {
  Table t = parse(text, what);
  int rc = require_column(t, "residence", what);
  int cc = require_column(t, "cycles_per_it", what);
  std::vector<std::pair<Level, double>> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    auto level = level_from_string(t.rows[r][rc]);
    if (!level)
      throw ConfigError(what + ": row " + std::to_string(r + 2) +
                        ": unknown residence '" + t.rows[r][rc] + "'");
    out.emplace_back(*level, detail::number(t, r, cc, what));
  }
  return out;
}

}  // namespace ecm::csvio
