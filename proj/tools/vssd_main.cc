#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "vssd/config/config.hh"
#include "vssd/runner.hh"
#include "vssd/stats/report.hh"
#include "vssd/util/fault.hh"

namespace {

int cmd_run(const std::string& config_path, const std::string& out_dir,
            std::int64_t seed, const std::vector<std::string>& sweeps) {
  vssd::config::ExperimentConfig cfg = vssd::config::load_config(config_path);
  if (!out_dir.empty()) {
    cfg.output.dir = out_dir;
  }
  if (seed >= 0) {
    cfg.seed = static_cast<std::uint64_t>(seed);
  }
  if (!sweeps.empty()) {
    cfg.sweep.clear();  // CLI sweeps replace the config's
    for (const std::string& s : sweeps) {
      const std::size_t eq = s.find('=');
      if (eq == std::string::npos) {
        throw vssd::ConfigError("--sweep expects KEY=V1,V2,...: " + s);
      }
      vssd::config::SweepAxis axis;
      axis.key = s.substr(0, eq);
      std::string rest = s.substr(eq + 1);
      std::size_t start = 0;
      while (start <= rest.size()) {
        const std::size_t comma = rest.find(',', start);
        const std::string tok =
            rest.substr(start, comma == std::string::npos ? std::string::npos
                                                          : comma - start);
        if (!tok.empty()) {
          axis.values.push_back(vssd::config::parse_scalar(tok));
        }
        if (comma == std::string::npos) {
          break;
        }
        start = comma + 1;
      }
      if (axis.values.empty()) {
        throw vssd::ConfigError("--sweep has no values: " + s);
      }
      // Validate the axis key the same way the config loader does.
      vssd::config::Table probe = cfg.raw;
      probe.erase("sweep");
      vssd::config::apply_override(probe, axis.key, axis.values.front());
      std::vector<std::string> errors;
      vssd::config::from_table(probe, errors);
      if (!errors.empty()) {
        throw vssd::ConfigError("--sweep " + axis.key + ": " + errors.front());
      }
      cfg.sweep.push_back(std::move(axis));
    }
  }
  vssd::run_experiment(cfg, std::cout);
  return 0;
}

int cmd_validate(const std::string& config_path) {
  vssd::config::load_config(config_path);
  std::cout << "ok\n";
  return 0;
}

int cmd_compare(const std::string& a, const std::string& b) {
  std::ifstream fa(a);
  std::ifstream fb(b);
  if (!fa || !fb) {
    throw vssd::ConfigError("cannot open report files");
  }
  const auto ra = vssd::stats::read_json(fa);
  const auto rb = vssd::stats::read_json(fb);
  std::cout << vssd::stats::compare_text(ra, rb);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vssd: deterministic discrete-event SSD simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::int64_t seed = -1;
  std::vector<std::string> sweeps;
  auto* run = app.add_subcommand("run", "run an experiment config");
  run->add_option("config", config_path, "config file")->required();
  run->add_option("--out", out_dir, "output directory (overrides config)");
  run->add_option("--seed", seed, "RNG seed (overrides config)");
  run->add_option("--sweep", sweeps,
                  "KEY=V1,V2,... sweep override (repeatable)");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "check a config file");
  validate->add_option("config", validate_path, "config file")->required();

  std::string report_a;
  std::string report_b;
  auto* compare = app.add_subcommand("compare", "diff two JSON reports");
  compare->add_option("a", report_a, "first report")->required();
  compare->add_option("b", report_b, "second report")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      return cmd_run(config_path, out_dir, seed, sweeps);
    }
    if (validate->parsed()) {
      return cmd_validate(validate_path);
    }
    if (compare->parsed()) {
      return cmd_compare(report_a, report_b);
    }
  } catch (const vssd::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const vssd::SimFault& e) {
    std::cerr << "simulation fault: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
