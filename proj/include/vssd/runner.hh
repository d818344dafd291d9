#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "vssd/config/config.hh"
#include "vssd/stats/report.hh"

namespace vssd {

/// Enumerate sweep points (cartesian product of the sweep axes; a single
/// point when no sweep is configured), run each on a fresh simulator,
/// and write reports plus a manifest into the output directory.
std::vector<stats::SweepRow> run_experiment(const config::ExperimentConfig& cfg,
                                            std::ostream& log);

/// Materialize one sweep point's full config.
config::ExperimentConfig materialize_point(
    const config::ExperimentConfig& base,
    const std::vector<std::pair<std::string, config::Value>>& overrides);

/// Run one already-materialized point (no file output).
stats::SweepRow run_point(const config::ExperimentConfig& cfg,
                          const std::string& key, const std::string& value);

}  // namespace vssd
