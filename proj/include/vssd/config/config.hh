#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vssd/device.hh"
#include "vssd/host/workload.hh"

namespace vssd::config {

/// One parsed config value. The accepted syntax is a TOML subset:
/// `[section]` headers, `key = value` pairs, integers, floats, booleans,
/// double-quoted strings, homogeneous flat arrays, and `#` comments.
struct Value {
  enum class Kind : std::uint8_t { integer, real, boolean, text, array };
  Kind kind = Kind::integer;
  std::int64_t i = 0;
  double f = 0.0;
  bool b = false;
  std::string s;
  std::vector<Value> arr;
  std::size_t line = 0;

  static Value integer(std::int64_t v) {
    Value x;
    x.kind = Kind::integer;
    x.i = v;
    return x;
  }
  static Value real(double v) {
    Value x;
    x.kind = Kind::real;
    x.f = v;
    return x;
  }
  static Value boolean(bool v) {
    Value x;
    x.kind = Kind::boolean;
    x.b = v;
    return x;
  }
  static Value text(std::string v) {
    Value x;
    x.kind = Kind::text;
    x.s = std::move(v);
    return x;
  }

  double as_real() const { return kind == Kind::integer ? static_cast<double>(i) : f; }
  std::string to_string() const;
};

using Section = std::map<std::string, Value>;
using Table = std::map<std::string, Section>;

/// Parse the TOML-subset text; syntax problems are appended to `errors`
/// with line numbers.
Table parse_toml(const std::string& text, std::vector<std::string>& errors);

/// Parse a single scalar literal (`--sweep` values on the CLI).
Value parse_scalar(const std::string& text);

struct SweepAxis {
  std::string key;  // dotted: section.key
  std::vector<Value> values;
};

struct OutputConfig {
  std::string dir = "out";
  std::vector<std::string> formats = {"csv", "json"};
  std::string transaction_log;  // per-point flash op log, empty = off
  std::string protocol_trace;   // per-point SQ/CQ trace, empty = off
};

struct ExperimentConfig {
  DeviceConfig device;
  host::WorkloadSpec workload;
  std::vector<SweepAxis> sweep;
  OutputConfig output;
  std::uint64_t seed = 1;
  bool ramp_exclude = true;
  Table raw;  // post-parse table, used to materialize sweep points
};

/// Validate and build a config from a parsed table. Every violation
/// (unknown key, bad type, range error) is reported at once.
ExperimentConfig from_table(const Table& table, std::vector<std::string>& errors);

/// Load + parse + validate; throws ConfigError listing all violations.
ExperimentConfig load_config(const std::string& path);

/// Set `section.key` in a raw table (sweep materialization).
void apply_override(Table& table, const std::string& dotted_key,
                    const Value& v);

/// FNV-1a hash of the canonicalized table, for run manifests.
std::string table_hash(const Table& table);

}  // namespace vssd::config
