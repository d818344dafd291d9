#include "vssd/config/config.hh"

#include <cctype>
#include <charconv>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "vssd/util/fault.hh"

namespace vssd::config {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) {
    ++b;
  }
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) {
    --e;
  }
  return s.substr(b, e - b);
}

// Strip a trailing comment that is not inside a string literal.
std::string strip_comment(const std::string& s) {
  bool in_str = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') {
      in_str = !in_str;
    } else if (s[i] == '#' && !in_str) {
      return s.substr(0, i);
    }
  }
  return s;
}

bool parse_value(const std::string& text, Value& out, std::string& err);

bool parse_array(const std::string& text, Value& out, std::string& err) {
  out.kind = Value::Kind::array;
  out.arr.clear();
  std::string body = trim(text.substr(1, text.size() - 2));
  if (body.empty()) {
    return true;
  }
  std::size_t start = 0;
  bool in_str = false;
  for (std::size_t i = 0; i <= body.size(); ++i) {
    if (i < body.size() && body[i] == '"') {
      in_str = !in_str;
    }
    if (i == body.size() || (body[i] == ',' && !in_str)) {
      Value v;
      if (!parse_value(trim(body.substr(start, i - start)), v, err)) {
        return false;
      }
      out.arr.push_back(v);
      start = i + 1;
    }
  }
  return true;
}

bool parse_value(const std::string& text, Value& out, std::string& err) {
  if (text.empty()) {
    err = "empty value";
    return false;
  }
  if (text.front() == '[') {
    if (text.back() != ']') {
      err = "unterminated array";
      return false;
    }
    return parse_array(text, out, err);
  }
  if (text.front() == '"') {
    if (text.size() < 2 || text.back() != '"') {
      err = "unterminated string";
      return false;
    }
    out = Value::text(text.substr(1, text.size() - 2));
    return true;
  }
  if (text == "true" || text == "false") {
    out = Value::boolean(text == "true");
    return true;
  }
  // Number: integer unless it carries a dot or exponent.
  const bool real = text.find_first_of(".eE") != std::string::npos &&
                    !(text.size() > 2 && text[0] == '0' && text[1] == 'x');
  if (real) {
    try {
      std::size_t used = 0;
      const double d = std::stod(text, &used);
      if (used != text.size()) {
        err = "bad number '" + text + "'";
        return false;
      }
      out = Value::real(d);
      return true;
    } catch (...) {
      err = "bad number '" + text + "'";
      return false;
    }
  }
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || p != text.data() + text.size()) {
    err = "bad value '" + text + "'";
    return false;
  }
  out = Value::integer(v);
  return true;
}

}  // namespace

std::string Value::to_string() const {
  switch (kind) {
    case Kind::integer:
      return std::to_string(i);
    case Kind::real: {
      std::ostringstream os;
      os << f;
      return os.str();
    }
    case Kind::boolean:
      return b ? "true" : "false";
    case Kind::text:
      return s;
    case Kind::array: {
      std::string out = "[";
      for (std::size_t k = 0; k < arr.size(); ++k) {
        out += (k ? "," : "") + arr[k].to_string();
      }
      return out + "]";
    }
  }
  return "";
}

Table parse_toml(const std::string& text, std::vector<std::string>& errors) {
  Table table;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) {
      continue;
    }
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        errors.push_back("line " + std::to_string(lineno) +
                         ": malformed section header");
        continue;
      }
      section = trim(line.substr(1, line.size() - 2));
      table[section];
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(lineno) + ": expected key = value");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string vtext = trim(line.substr(eq + 1));
    if (key.empty()) {
      errors.push_back("line " + std::to_string(lineno) + ": empty key");
      continue;
    }
    Value v;
    std::string err;
    if (!parse_value(vtext, v, err)) {
      errors.push_back("line " + std::to_string(lineno) + ": " + err);
      continue;
    }
    v.line = lineno;
    if (table[section].count(key)) {
      errors.push_back("line " + std::to_string(lineno) + ": duplicate key '" +
                       key + "'");
      continue;
    }
    table[section][key] = v;
  }
  return table;
}

Value parse_scalar(const std::string& text) {
  Value v;
  std::string err;
  if (!parse_value(trim(text), v, err)) {
    throw ConfigError("bad value: " + err);
  }
  return v;
}

void apply_override(Table& table, const std::string& dotted_key,
                    const Value& v) {
  const std::size_t dot = dotted_key.find('.');
  if (dot == std::string::npos) {
    table[""][dotted_key] = v;
    return;
  }
  table[dotted_key.substr(0, dot)][dotted_key.substr(dot + 1)] = v;
}

std::string table_hash(const Table& table) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    h ^= 0x1f;
    h *= 0x100000001b3ull;
  };
  for (const auto& [sec, kv] : table) {
    mix(sec);
    for (const auto& [k, v] : kv) {
      mix(k);
      mix(v.to_string());
    }
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

// --------------------------------------------------------------- schema

namespace {

/// Accessor that records consumed keys and type/range violations.
class Reader {
 public:
  Reader(const Table& t, const std::string& section,
         std::vector<std::string>& errors)
      : errors_(errors), section_(section) {
    auto it = t.find(section);
    if (it != t.end()) {
      sec_ = &it->second;
    }
  }

  bool present() const { return sec_ != nullptr; }

  void finish() {
    if (!sec_) {
      return;
    }
    for (const auto& [k, v] : *sec_) {
      if (!seen_.count(k)) {
        fail(k, "unknown key");
      }
    }
  }

  template <typename T>
  void integer(const std::string& key, T& out, std::int64_t lo,
               std::int64_t hi) {
    const Value* v = find(key);
    if (!v) {
      return;
    }
    if (v->kind != Value::Kind::integer) {
      fail(key, "expected an integer");
      return;
    }
    if (v->i < lo || v->i > hi) {
      fail(key, "out of range [" + std::to_string(lo) + ", " +
                    std::to_string(hi) + "]");
      return;
    }
    out = static_cast<T>(v->i);
  }

  void real(const std::string& key, double& out, double lo, double hi) {
    const Value* v = find(key);
    if (!v) {
      return;
    }
    if (v->kind != Value::Kind::integer && v->kind != Value::Kind::real) {
      fail(key, "expected a number");
      return;
    }
    const double d = v->as_real();
    if (d < lo || d > hi) {
      fail(key, "out of range");
      return;
    }
    out = d;
  }

  void time_us(const std::string& key, SimTime& out) {
    double us = -1.0;
    real(key, us, 0.0, 1e12);
    if (us >= 0.0) {
      out = from_us(us);
    }
  }

  void time_ns(const std::string& key, SimTime& out) {
    double ns = -1.0;
    real(key, ns, 0.0, 1e15);
    if (ns >= 0.0) {
      out = from_ns(ns);
    }
  }

  void boolean(const std::string& key, bool& out) {
    const Value* v = find(key);
    if (!v) {
      return;
    }
    if (v->kind != Value::Kind::boolean) {
      fail(key, "expected true or false");
      return;
    }
    out = v->b;
  }

  void text(const std::string& key, std::string& out) {
    const Value* v = find(key);
    if (!v) {
      return;
    }
    if (v->kind != Value::Kind::text) {
      fail(key, "expected a string");
      return;
    }
    out = v->s;
  }

  /// String constrained to a closed set, mapped to an enum via pairs.
  template <typename E>
  void choice(const std::string& key, E& out,
              std::initializer_list<std::pair<const char*, E>> options) {
    const Value* v = find(key);
    if (!v) {
      return;
    }
    if (v->kind != Value::Kind::text) {
      fail(key, "expected a string");
      return;
    }
    for (const auto& [name, val] : options) {
      if (v->s == name) {
        out = val;
        return;
      }
    }
    std::string opts;
    for (const auto& [name, val] : options) {
      opts += std::string(opts.empty() ? "" : "|") + name;
    }
    fail(key, "must be one of " + opts);
  }

  void fail(const std::string& key, const std::string& what) {
    errors_.push_back("[" + section_ + "] " + key + ": " + what);
  }

  void mark_seen(const std::string& key) { seen_.insert(key); }

 private:
  const Value* find(const std::string& key) {
    seen_.insert(key);
    if (!sec_) {
      return nullptr;
    }
    auto it = sec_->find(key);
    return it == sec_->end() ? nullptr : &it->second;
  }

  const Section* sec_ = nullptr;
  std::vector<std::string>& errors_;
  std::string section_;
  std::set<std::string> seen_;
};

ExperimentConfig build(const Table& table, std::vector<std::string>& errors,
                       bool expand_sweep);

}  // namespace

ExperimentConfig from_table(const Table& table, std::vector<std::string>& errors) {
  return build(table, errors, true);
}

namespace {

ExperimentConfig build(const Table& table, std::vector<std::string>& errors,
                       bool expand_sweep) {
  ExperimentConfig cfg;
  cfg.raw = table;

  for (const char* required : {"flash", "workload", "interface"}) {
    if (!table.count(required)) {
      errors.push_back(std::string("[") + required +
                       "] missing required section");
    }
  }

  {
    Reader r(table, "", errors);
    std::int64_t seed = static_cast<std::int64_t>(cfg.seed);
    r.integer("seed", seed, 0, std::numeric_limits<std::int64_t>::max());
    cfg.seed = static_cast<std::uint64_t>(seed);
    r.boolean("ramp_exclude", cfg.ramp_exclude);
    r.finish();
  }
  {
    Reader r(table, "flash", errors);
    auto& g = cfg.device.geometry;
    r.integer("channels", g.channels, 1, 64);
    r.integer("ways", g.ways, 1, 64);
    r.integer("dies", g.dies, 1, 64);
    r.integer("planes", g.planes, 1, 64);
    r.integer("blocks", g.blocks, 1, 1 << 20);
    r.integer("pages", g.pages, 1, 1 << 20);
    r.integer("page_bytes", g.page_bytes, 512, 1 << 20);
    auto& t = cfg.device.flash_timing;
    r.time_us("t_read_fast_us", t.t_read_fast);
    r.time_us("t_read_slow_us", t.t_read_slow);
    r.time_us("t_prog_fast_us", t.t_prog_fast);
    r.time_us("t_prog_slow_us", t.t_prog_slow);
    r.time_us("t_erase_us", t.t_erase);
    r.integer("channel_mhz", t.channel_mhz, 1, 10000);
    r.integer("bus_width_bits", t.bus_width_bits, 8, 64);
    r.boolean("ddr", t.ddr);
    r.integer("cmd_cycles", t.cmd_cycles, 0, 1000);
    r.boolean("prog_pairing", t.prog_pairing);
    r.boolean("read_pairing", t.read_pairing);
    r.finish();
    if (t.t_prog_slow < t.t_prog_fast) {
      r.fail("t_prog_slow_us", "must be >= t_prog_fast_us");
    }
    if (t.t_erase < t.t_prog_slow) {
      r.fail("t_erase_us", "must be >= t_prog_slow_us");
    }
  }
  {
    Reader r(table, "dram", errors);
    auto& d = cfg.device.dram;
    std::int64_t size_mb = -1;
    r.integer("size_mb", size_mb, 1, 1 << 20);
    if (size_mb > 0) {
      d.size_bytes = static_cast<std::uint64_t>(size_mb) << 20;
    }
    r.integer("channels", d.channels, 1, 16);
    r.integer("ranks", d.ranks, 1, 16);
    r.integer("banks", d.banks, 1, 64);
    r.integer("chips", d.chips, 1, 64);
    r.integer("bus_width_bits", d.bus_width_bits, 4, 256);
    r.time_ns("t_rp_ns", d.t_rp);
    r.time_ns("t_rcd_ns", d.t_rcd);
    r.time_ns("t_cl_ns", d.t_cl);
    r.integer("burst_bytes", d.burst_bytes, 8, 4096);
    r.integer("io_mhz", d.io_mhz, 1, 10000);
    r.boolean("ddr", d.ddr);
    r.boolean("close_page", d.close_page);
    std::int64_t row_bytes = -1;
    r.integer("row_kb", row_bytes, 1, 1024);
    if (row_bytes > 0) {
      d.row_bytes = static_cast<std::uint64_t>(row_bytes) << 10;
    }
    r.real("energy_per_burst_nj", d.energy_per_burst_nj, 0.0, 1e9);
    r.finish();
  }
  {
    Reader r(table, "icl", errors);
    auto& c = cfg.device.icl;
    r.boolean("enabled", c.enabled);
    r.choice("mode", c.mode,
             {{"fully-associative", icl::CacheMode::fully_associative},
              {"set-associative", icl::CacheMode::set_associative},
              {"direct-map", icl::CacheMode::direct_map}});
    r.integer("sets", c.sets, 1, 1 << 24);
    r.integer("ways", c.ways, 1, 1 << 24);
    std::int64_t cap = -1;
    r.integer("capacity_lines", cap, 0, std::int64_t{1} << 40);
    if (cap >= 0) {
      c.capacity_lines = static_cast<std::uint64_t>(cap);
    }
    r.real("dram_budget_fraction", c.dram_budget_fraction, 0.0, 1.0);
    r.choice("replacement", c.replacement,
             {{"lru", icl::Replacement::lru},
              {"random", icl::Replacement::random}});
    r.integer("readahead_threshold", c.readahead_threshold, 0, 1 << 20);
    r.integer("readahead_degree", c.readahead_degree, 0, 1 << 20);
    r.boolean("write_through", c.write_through);
    r.integer("stream_slots", c.stream_slots, 1, 1024);
    r.finish();
  }
  {
    Reader r(table, "ftl", errors);
    auto& f = cfg.device.ftl;
    r.real("op_ratio", f.op_ratio, 0.0, 1.0);
    r.real("gc_trigger", f.gc_trigger, 0.0, 1.0);
    r.real("gc_stop", f.gc_stop, 0.0, 1.0);
    r.choice("policy", f.policy,
             {{"greedy", ftl::GcPolicy::greedy},
              {"costbenefit", ftl::GcPolicy::costbenefit}});
    r.choice("mapping", f.mapping,
             {{"superpage", ftl::MappingMode::superpage},
              {"page", ftl::MappingMode::page},
              {"block", ftl::MappingMode::block}});
    r.choice("span", f.span,
             {{"channel", ftl::Span::channel},
              {"channel-way", ftl::Span::channel_way},
              {"all", ftl::Span::all}});
    r.boolean("partial_remap", f.partial_remap);
    r.integer("exception_cap", f.exception_cap, 0, 64);
    r.real("exception_block_fraction", f.exception_block_fraction, 0.0, 1.0);
    r.boolean("background_gc", f.background_gc);
    r.finish();
    if (f.op_ratio <= 0.0 || f.op_ratio >= 1.0) {
      r.fail("op_ratio", "must be inside (0, 1)");
    }
    if (f.gc_stop < f.gc_trigger) {
      r.fail("gc_stop", "must be >= gc_trigger");
    }
  }
  {
    Reader r(table, "interface", errors);
    auto& i = cfg.device.interface;
    r.choice("kind", i.kind,
             {{"nvme", hil::Kind::nvme},
              {"sata", hil::Kind::sata},
              {"ufs", hil::Kind::ufs},
              {"ocssd", hil::Kind::ocssd}});
    std::int64_t mbps = -1;
    r.integer("link_mbps", mbps, 1, 1 << 24);
    if (mbps > 0) {
      i.link_bytes_per_sec = static_cast<std::uint64_t>(mbps) * 1'000'000;
    }
    std::int64_t cmbps = -1;
    r.integer("controller_mbps", cmbps, 1, 1 << 24);
    if (cmbps > 0) {
      i.controller_bytes_per_sec = static_cast<std::uint64_t>(cmbps) * 1'000'000;
    }
    r.choice("arbitration", i.arbitration,
             {{"fifo", hil::Arbitration::fifo},
              {"rr", hil::Arbitration::rr},
              {"wrr", hil::Arbitration::wrr}});
    r.integer("max_queues", i.max_queues, 2, 65536);
    r.finish();
  }
  {
    Reader r(table, "firmware_latency", errors);
    auto& s = cfg.device.interface.stages;
    r.time_ns("doorbell_ns", s.doorbell);
    r.time_ns("fetch_ns", s.fetch);
    r.time_ns("hil_ns", s.hil);
    r.time_ns("completion_ns", s.completion);
    r.time_ns("msi_ns", s.msi);
    r.time_ns("prp_fetch_ns", s.prp_fetch);
    r.time_ns("dma_overhead_ns", s.dma_overhead);
    r.time_ns("controller_ns", s.controller);
    r.time_ns("isr_ns", s.isr);
    SimTime icl_lat = ~SimTime{0};
    r.time_ns("icl_ns", icl_lat);
    if (icl_lat != ~SimTime{0}) {
      cfg.device.icl.entry_latency = icl_lat;
    }
    SimTime ftl_lat = ~SimTime{0};
    r.time_ns("ftl_ns", ftl_lat);
    if (ftl_lat != ~SimTime{0}) {
      cfg.device.ftl.op_latency = ftl_lat;
    }
    SimTime fil_lat = ~SimTime{0};
    r.time_ns("fil_ns", fil_lat);
    if (fil_lat != ~SimTime{0}) {
      cfg.device.ftl.fil_latency = fil_lat;
    }
    r.finish();
  }
  {
    Reader r(table, "energy", errors);
    auto& e = cfg.device.energy;
    r.real("flash_read_nj", e.flash_read_nj, 0.0, 1e12);
    r.real("flash_program_nj", e.flash_program_nj, 0.0, 1e12);
    r.real("flash_erase_nj", e.flash_erase_nj, 0.0, 1e12);
    r.real("dram_burst_nj", cfg.device.dram.energy_per_burst_nj, 0.0, 1e9);
    r.real("idle_flash_mw", e.idle_flash_mw, 0.0, 1e9);
    r.real("idle_dram_mw", e.idle_dram_mw, 0.0, 1e9);
    r.real("idle_controller_mw", e.idle_controller_mw, 0.0, 1e9);
    r.finish();
  }
  {
    Reader r(table, "device", errors);
    r.boolean("data_emulation", cfg.device.data_emulation);
    r.boolean("transaction_log", cfg.device.transaction_log);
    r.finish();
  }
  {
    Reader r(table, "workload", errors);
    auto& w = cfg.workload;
    r.choice("pattern", w.pattern,
             {{"seqread", host::Pattern::seqread},
              {"randread", host::Pattern::randread},
              {"seqwrite", host::Pattern::seqwrite},
              {"randwrite", host::Pattern::randwrite},
              {"mixed", host::Pattern::mixed},
              {"trace", host::Pattern::trace}});
    r.real("read_ratio", w.read_ratio, 0.0, 1.0);
    std::int64_t blk = -1;
    r.integer("block_kb", blk, 1, 1 << 20);
    if (blk > 0) {
      w.block_bytes = static_cast<std::uint64_t>(blk) << 10;
    }
    r.integer("queue_depth", w.queue_depth, 1, 65536);
    std::int64_t ops = -1;
    r.integer("total_ops", ops, 0, std::int64_t{1} << 40);
    if (ops >= 0) {
      w.total_ops = static_cast<std::uint64_t>(ops);
    }
    std::int64_t range_mb = -1;
    r.integer("range_mb", range_mb, 0, std::int64_t{1} << 30);
    if (range_mb >= 0) {
      w.range_bytes = static_cast<std::uint64_t>(range_mb) << 20;
    }
    r.choice("precondition", w.precondition,
             {{"none", host::Precondition::none},
              {"fill", host::Precondition::fill},
              {"stress", host::Precondition::stress}});
    std::int64_t pblk = -1;
    r.integer("precondition_block_kb", pblk, 1, 1 << 20);
    if (pblk > 0) {
      w.precondition_block = static_cast<std::uint64_t>(pblk) << 10;
    }
    r.text("trace", w.trace_path);
    r.choice("replay_mode", w.replay_mode,
             {{"timed", host::ReplayMode::timed},
              {"closed-loop", host::ReplayMode::closed_loop}});
    r.boolean("verify", w.verify);
    r.finish();
    if (w.block_bytes % 512 != 0) {
      r.fail("block_kb", "block must be a multiple of 512 bytes");
    }
    if (w.pattern == host::Pattern::trace && w.trace_path.empty()) {
      r.fail("trace", "required when pattern = \"trace\"");
    }
  }
  {
    Reader r(table, "output", errors);
    auto& o = cfg.output;
    r.text("dir", o.dir);
    r.mark_seen("formats");
    auto it = table.find("output");
    if (it != table.end()) {
      auto fit = it->second.find("formats");
      if (fit != it->second.end()) {
        if (fit->second.kind != Value::Kind::array) {
          r.fail("formats", "expected an array of strings");
        } else {
          o.formats.clear();
          for (const auto& v : fit->second.arr) {
            if (v.kind != Value::Kind::text ||
                (v.s != "csv" && v.s != "json")) {
              r.fail("formats", "entries must be \"csv\" or \"json\"");
              break;
            }
            o.formats.push_back(v.s);
          }
        }
      }
    }
    r.text("transaction_log", o.transaction_log);
    r.text("protocol_trace", o.protocol_trace);
    r.finish();
  }
  // Sweep axes must reference real config keys; probe each against a
  // copy of the table.
  if (expand_sweep) {
    auto it = table.find("sweep");
    if (it != table.end()) {
      for (const auto& [key, v] : it->second) {
        if (v.kind != Value::Kind::array || v.arr.empty()) {
          errors.push_back("[sweep] " + key + ": expected a non-empty array");
          continue;
        }
        if (key.find('.') == std::string::npos) {
          errors.push_back("[sweep] " + key +
                           ": keys are dotted section.key names");
          continue;
        }
        Table probe = table;
        probe.erase("sweep");
        apply_override(probe, key, v.arr.front());
        std::vector<std::string> probe_errors;
        build(probe, probe_errors, false);
        if (!probe_errors.empty()) {
          errors.push_back("[sweep] " + key + ": does not name a valid key (" +
                           probe_errors.front() + ")");
          continue;
        }
        cfg.sweep.push_back(SweepAxis{key, v.arr});
      }
    }
  } else if (table.count("sweep")) {
    // ignored when probing
  }
  if (cfg.workload.queue_depth < 1) {
    errors.push_back("[workload] queue_depth: must be >= 1");
  }
  return cfg;
}

}  // namespace

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config: " + path);
  }
  std::stringstream ss;
  ss << in.rdbuf();
  std::vector<std::string> errors;
  Table t = parse_toml(ss.str(), errors);
  ExperimentConfig cfg = from_table(t, errors);
  if (!errors.empty()) {
    std::string all = "config errors in " + path + ":";
    for (const auto& e : errors) {
      all += "\n  - " + e;
    }
    throw ConfigError(all);
  }
  return cfg;
}

}  // namespace vssd::config
