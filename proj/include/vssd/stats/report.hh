#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "vssd/stats/metrics.hh"

namespace vssd::stats {

/// One sweep point's results. `key`/`value` are empty for single runs.
struct SweepRow {
  std::string key;
  std::string value;
  Summary summary;
};

/// Stable column order; one row per sweep point. Schema documented in
/// the README.
void write_csv(std::ostream& out, const std::vector<SweepRow>& rows);

void write_json(std::ostream& out, const std::vector<SweepRow>& rows);

std::vector<SweepRow> read_json(std::istream& in);

/// Per-metric absolute and relative deltas, row by row. Throws
/// ConfigError when the reports' shapes do not match.
std::string compare_text(const std::vector<SweepRow>& a,
                         const std::vector<SweepRow>& b);

}  // namespace vssd::stats
