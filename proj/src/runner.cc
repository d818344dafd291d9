#include "vssd/runner.hh"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <ostream>

#include <json.hpp>

#include "vssd/device.hh"
#include "vssd/host/workload.hh"
#include "vssd/util/fault.hh"

namespace vssd {

config::ExperimentConfig materialize_point(
    const config::ExperimentConfig& base,
    const std::vector<std::pair<std::string, config::Value>>& overrides) {
  config::Table t = base.raw;
  t.erase("sweep");
  for (const auto& [key, v] : overrides) {
    config::apply_override(t, key, v);
  }
  std::vector<std::string> errors;
  config::ExperimentConfig cfg = config::from_table(t, errors);
  if (!errors.empty()) {
    throw ConfigError("sweep point invalid: " + errors.front());
  }
  cfg.seed = base.seed;
  cfg.output = base.output;
  return cfg;
}

stats::SweepRow run_point(const config::ExperimentConfig& cfg,
                          const std::string& key, const std::string& value) {
  Device dev(cfg.device);
  host::WorkloadSpec spec = cfg.workload;
  spec.seed = cfg.seed;
  host::Harness harness(dev, spec);

  std::ofstream trace_out;
  if (!cfg.output.protocol_trace.empty()) {
    std::string path = cfg.output.protocol_trace;
    if (!value.empty()) {
      path += "." + value;
    }
    trace_out.open(path);
    dev.hil().set_protocol_trace(
        [&trace_out](const std::string& line) { trace_out << line << '\n'; });
  }

  harness.precondition();
  dev.reset_measurement();
  harness.run();
  stats::SweepRow row;
  row.key = key;
  row.value = value;
  row.summary = dev.summarize();

  if (!cfg.output.transaction_log.empty() && cfg.device.transaction_log) {
    std::string path = cfg.output.transaction_log;
    if (!value.empty()) {
      path += "." + value;
    }
    std::ofstream log(path);
    for (const auto& t : dev.backend().log()) {
      log << t.issued_at << ' '
          << (t.op == flash::Op::read
                  ? 'R'
                  : (t.op == flash::Op::program ? 'P' : 'E'))
          << " ch=" << t.addr.channel << " way=" << t.addr.way
          << " die=" << t.addr.die << " pl=" << t.addr.plane
          << " blk=" << t.addr.block << " pg=" << t.addr.page
          << " bus=" << t.bus_start << " cell=" << t.cell_start
          << " done=" << t.done_at << '\n';
    }
  }
  return row;
}

std::vector<stats::SweepRow> run_experiment(const config::ExperimentConfig& cfg,
                                            std::ostream& log) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.output.dir);

  // Cartesian product over the sweep axes, first axis slowest.
  std::vector<std::vector<std::pair<std::string, config::Value>>> points;
  points.emplace_back();
  for (const auto& axis : cfg.sweep) {
    std::vector<std::vector<std::pair<std::string, config::Value>>> next;
    for (const auto& base : points) {
      for (const auto& v : axis.values) {
        auto p = base;
        p.emplace_back(axis.key, v);
        next.push_back(std::move(p));
      }
    }
    points = std::move(next);
  }

  std::vector<stats::SweepRow> rows;
  for (const auto& point : points) {
    std::string key;
    std::string value;
    for (const auto& [k, v] : point) {
      key += (key.empty() ? "" : "+") + k;
      value += (value.empty() ? "" : "+") + v.to_string();
    }
    log << "point " << (key.empty() ? "(single)" : key + "=" + value)
        << " ... " << std::flush;
    config::ExperimentConfig pc = materialize_point(cfg, point);
    rows.push_back(run_point(pc, key, value));
    log << "bw=" << rows.back().summary.bandwidth_mbps << " MB/s\n";
  }

  std::vector<std::string> outputs;
  for (const std::string& f : cfg.output.formats) {
    const std::string path = cfg.output.dir + "/summary." + f;
    std::ofstream out(path);
    if (!out) {
      throw ConfigError("cannot write report: " + path);
    }
    if (f == "csv") {
      stats::write_csv(out, rows);
    } else {
      stats::write_json(out, rows);
    }
    outputs.push_back(path);
  }

  nlohmann::ordered_json manifest;
  config::Table hashed = cfg.raw;
  manifest["config_hash"] = config::table_hash(hashed);
  manifest["seed"] = cfg.seed;
  manifest["points"] = points.size();
  manifest["outputs"] = outputs;
  manifest["wall_clock"] =
      std::chrono::duration_cast<std::chrono::seconds>(
          std::chrono::system_clock::now().time_since_epoch())
          .count();
  std::ofstream mf(cfg.output.dir + "/manifest.json");
  mf << manifest.dump(2) << '\n';
  return rows;
}

}  // namespace vssd
