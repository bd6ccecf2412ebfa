#include "dmatch/csv.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace dmatch {

void write_csv(const std::string& path, const CsvTable& table) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("write_csv: cannot open " + path);
  for (const auto& c : table.comments) out << "# " << c << "\n";
  for (size_t i = 0; i < table.columns.size(); ++i)
    out << table.columns[i] << (i + 1 < table.columns.size() ? "," : "");
  out << "\n";
  for (const auto& row : table.rows) {
    if (row.size() != table.columns.size())
      throw std::invalid_argument("write_csv: row width mismatch in " + path);
    for (size_t i = 0; i < row.size(); ++i) out << row[i] << (i + 1 < row.size() ? "," : "");
    out << "\n";
  }
  if (!out) throw std::runtime_error("write_csv: write failed for " + path);
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("read_csv: cannot open " + path);
  CsvTable table;
  std::string line;
  bool have_header = false;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(s);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!s.empty() && s.back() == ',') cells.push_back("");
    return cells;
  };
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      table.comments.push_back(line.size() > 2 && line[1] == ' ' ? line.substr(2)
                                                                 : line.substr(1));
      continue;
    }
    if (!have_header) {
      table.columns = split(line);
      have_header = true;
      continue;
    }
    std::vector<std::string> cells = split(line);
    if (cells.size() != table.columns.size())
      throw std::invalid_argument("read_csv: row width mismatch in " + path);
    table.rows.push_back(std::move(cells));
  }
  if (!have_header) throw std::invalid_argument("read_csv: no header row in " + path);
  return table;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double_cell(const std::string& cell) {
  if (cell == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (cell == "inf") return std::numeric_limits<double>::infinity();
  if (cell == "-inf") return -std::numeric_limits<double>::infinity();
  if (cell.empty()) throw std::invalid_argument("parse_double_cell: empty cell");
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end != cell.c_str() + cell.size())
    throw std::invalid_argument("parse_double_cell: bad number '" + cell + "'");
  return v;
}

int column_index(const CsvTable& table, const std::string& name) {
  for (size_t i = 0; i < table.columns.size(); ++i)
    if (table.columns[i] == name) return static_cast<int>(i);
  throw std::invalid_argument("column_index: no column '" + name + "'");
}

std::vector<double> column_values(const CsvTable& table, const std::string& name) {
  const int c = column_index(table, name);
  std::vector<double> out;
  out.reserve(table.rows.size());
  for (const auto& row : table.rows) out.push_back(parse_double_cell(row[c]));
  return out;
}

std::vector<std::string> standard_comments(const std::string& config_hash,
                                           const std::string& extra) {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char stamp[64];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  std::vector<std::string> out;
  out.push_back(std::string("generated ") + stamp);
  out.push_back("config_hash " + config_hash);
  if (!extra.empty()) out.push_back(extra);
  return out;
}

CsvTable trace_to_csv(const RunTrace& trace, const std::string& config_hash) {
  CsvTable table;
  table.comments = standard_comments(
      config_hash, "units: losses nats (summed over domains), wall_ms milliseconds");
  if (trace.diverged())
    table.comments.push_back("diverged_at_step " + std::to_string(*trace.diverged_step) + " " +
                             trace.note);
  table.columns = {"step", "recon", "entropy", "xent", "dsm", "gw", "nll", "wall_ms"};
  for (const auto& r : trace.rows)
    table.rows.push_back({std::to_string(r.step), format_double(r.recon),
                          format_double(r.entropy), format_double(r.xent), format_double(r.dsm),
                          format_double(r.gw), format_double(r.nll), format_double(r.wall_ms)});
  return table;
}

}  // namespace dmatch
