#include "vssd/stats/report.hh"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "vssd/util/fault.hh"

namespace vssd::stats {

namespace {

struct Field {
  const char* name;
  double (*get)(const Summary&);
};

// One definition drives the CSV columns, the JSON fields, and compare().
const Field kFields[] = {
    {"commands", [](const Summary& s) { return double(s.commands); }},
    {"errors", [](const Summary& s) { return double(s.errors); }},
    {"span_us", [](const Summary& s) { return s.span_us; }},
    {"bandwidth_mbps", [](const Summary& s) { return s.bandwidth_mbps; }},
    {"iops", [](const Summary& s) { return s.iops; }},
    {"lat_mean_us", [](const Summary& s) { return s.lat_mean_us; }},
    {"lat_p50_us", [](const Summary& s) { return s.lat_p50_us; }},
    {"lat_p95_us", [](const Summary& s) { return s.lat_p95_us; }},
    {"lat_p99_us", [](const Summary& s) { return s.lat_p99_us; }},
    {"stage_queue_us", [](const Summary& s) { return s.stage_queue_us; }},
    {"stage_fw_us", [](const Summary& s) { return s.stage_fw_us; }},
    {"stage_post_us", [](const Summary& s) { return s.stage_post_us; }},
    {"host_read_bytes", [](const Summary& s) { return double(s.host_read_bytes); }},
    {"host_write_bytes", [](const Summary& s) { return double(s.host_write_bytes); }},
    {"flash_reads", [](const Summary& s) { return double(s.flash_reads); }},
    {"flash_programs", [](const Summary& s) { return double(s.flash_programs); }},
    {"flash_erases", [](const Summary& s) { return double(s.flash_erases); }},
    {"write_amplification", [](const Summary& s) { return s.write_amplification; }},
    {"gc_invocations", [](const Summary& s) { return double(s.gc_invocations); }},
    {"gc_migrated_pages", [](const Summary& s) { return double(s.gc_migrated_pages); }},
    {"gc_erased_superblocks", [](const Summary& s) { return double(s.gc_erased_superblocks); }},
    {"erase_min", [](const Summary& s) { return double(s.erase_min); }},
    {"erase_max", [](const Summary& s) { return double(s.erase_max); }},
    {"cache_hit_ratio", [](const Summary& s) { return s.cache_hit_ratio; }},
    {"dram_bursts", [](const Summary& s) { return double(s.dram_bursts); }},
    {"energy_flash_j", [](const Summary& s) { return s.energy_flash_j; }},
    {"energy_dram_j", [](const Summary& s) { return s.energy_dram_j; }},
    {"energy_idle_j", [](const Summary& s) { return s.energy_idle_j; }},
    {"energy_total_j", [](const Summary& s) { return s.energy_total_j; }},
};

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

}  // namespace

void write_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "sweep_key,sweep_value,empty";
  for (const Field& f : kFields) {
    out << ',' << f.name;
  }
  out << '\n';
  for (const SweepRow& r : rows) {
    out << r.key << ',' << r.value << ',' << (r.summary.empty ? 1 : 0);
    for (const Field& f : kFields) {
      out << ',' << fmt(f.get(r.summary));
    }
    out << '\n';
  }
}

void write_json(std::ostream& out, const std::vector<SweepRow>& rows) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const SweepRow& r : rows) {
    nlohmann::ordered_json j;
    j["sweep_key"] = r.key;
    j["sweep_value"] = r.value;
    j["empty"] = r.summary.empty;
    for (const Field& f : kFields) {
      j[f.name] = f.get(r.summary);
    }
    doc.push_back(std::move(j));
  }
  out << doc.dump(2) << '\n';
}

std::vector<SweepRow> read_json(std::istream& in) {
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("bad report JSON: ") + e.what());
  }
  if (!doc.is_array()) {
    throw ConfigError("bad report JSON: expected an array of rows");
  }
  std::vector<SweepRow> rows;
  for (const auto& j : doc) {
    SweepRow r;
    r.key = j.value("sweep_key", "");
    r.value = j.value("sweep_value", "");
    Summary& s = r.summary;
    auto need = [&](const char* name) -> double {
      if (!j.contains(name)) {
        throw ConfigError(std::string("report missing field: ") + name);
      }
      return j[name].get<double>();
    };
    s.empty = j.value("empty", false);
    s.commands = static_cast<std::uint64_t>(need("commands"));
    s.errors = static_cast<std::uint64_t>(need("errors"));
    s.span_us = need("span_us");
    s.bandwidth_mbps = need("bandwidth_mbps");
    s.iops = need("iops");
    s.lat_mean_us = need("lat_mean_us");
    s.lat_p50_us = need("lat_p50_us");
    s.lat_p95_us = need("lat_p95_us");
    s.lat_p99_us = need("lat_p99_us");
    s.stage_queue_us = need("stage_queue_us");
    s.stage_fw_us = need("stage_fw_us");
    s.stage_post_us = need("stage_post_us");
    s.host_read_bytes = static_cast<std::uint64_t>(need("host_read_bytes"));
    s.host_write_bytes = static_cast<std::uint64_t>(need("host_write_bytes"));
    s.flash_reads = static_cast<std::uint64_t>(need("flash_reads"));
    s.flash_programs = static_cast<std::uint64_t>(need("flash_programs"));
    s.flash_erases = static_cast<std::uint64_t>(need("flash_erases"));
    s.write_amplification = need("write_amplification");
    s.gc_invocations = static_cast<std::uint64_t>(need("gc_invocations"));
    s.gc_migrated_pages = static_cast<std::uint64_t>(need("gc_migrated_pages"));
    s.gc_erased_superblocks =
        static_cast<std::uint64_t>(need("gc_erased_superblocks"));
    s.erase_min = static_cast<std::uint32_t>(need("erase_min"));
    s.erase_max = static_cast<std::uint32_t>(need("erase_max"));
    s.cache_hit_ratio = need("cache_hit_ratio");
    s.dram_bursts = static_cast<std::uint64_t>(need("dram_bursts"));
    s.energy_flash_j = need("energy_flash_j");
    s.energy_dram_j = need("energy_dram_j");
    s.energy_idle_j = need("energy_idle_j");
    s.energy_total_j = need("energy_total_j");
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string compare_text(const std::vector<SweepRow>& a,
                         const std::vector<SweepRow>& b) {
  if (a.size() != b.size()) {
    throw ConfigError("schema mismatch: reports have different row counts");
  }
  std::ostringstream os;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].key != b[i].key) {
      throw ConfigError("schema mismatch: sweep keys differ at row " +
                        std::to_string(i));
    }
    os << "row " << i;
    if (!a[i].key.empty()) {
      os << " (" << a[i].key << '=' << a[i].value << " vs " << b[i].value
         << ')';
    }
    os << '\n';
    os << "  " << std::left << std::setw(24) << "metric" << std::right
       << std::setw(16) << "a" << std::setw(16) << "b" << std::setw(16)
       << "delta" << std::setw(12) << "rel" << '\n';
    for (const Field& f : kFields) {
      const double va = f.get(a[i].summary);
      const double vb = f.get(b[i].summary);
      const double d = vb - va;
      os << "  " << std::left << std::setw(24) << f.name << std::right
         << std::setw(16) << fmt(va) << std::setw(16) << fmt(vb)
         << std::setw(16) << fmt(d) << std::setw(12);
      if (va != 0.0) {
        os << fmt(d / va);
      } else {
        os << "n/a";
      }
      os << '\n';
    }
  }
  return os.str();
}

}  // namespace vssd::stats
