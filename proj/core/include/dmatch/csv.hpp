#pragma once

#include <string>
#include <vector>

#include "dmatch/trainer.hpp"

namespace dmatch {

// In-memory CSV with leading '#' comment lines. Cells are already-formatted
// strings; numeric formatting goes through format_double so emitted files are
// reproducible byte for byte.
struct CsvTable {
  std::vector<std::string> comments;  // stored without the leading "# "
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

void write_csv(const std::string& path, const CsvTable& table);

// Strict read-back: comment lines skipped, first remaining line is the
// header, every row must match the header width.
CsvTable read_csv(const std::string& path);

// %.17g with normalized non-finite spellings (nan, inf, -inf).
std::string format_double(double v);
double parse_double_cell(const std::string& cell);  // accepts the spellings above

int column_index(const CsvTable& table, const std::string& name);  // throws if absent
std::vector<double> column_values(const CsvTable& table, const std::string& name);

// Standard comment block for emitted artifacts. The generated line is the
// only part of any output allowed to differ between identical re-runs.
std::vector<std::string> standard_comments(const std::string& config_hash,
                                           const std::string& extra = "");

// Trace schema: step,recon,entropy,xent,dsm,gw,nll,wall_ms. Term columns are
// sums over domains of per-domain batch means; wall_ms is wall clock and is
// exempt from byte-level determinism comparisons.
CsvTable trace_to_csv(const RunTrace& trace, const std::string& config_hash);

}  // namespace dmatch
