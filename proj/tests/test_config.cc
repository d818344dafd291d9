#include <doctest.h>

#include <fstream>
#include <sstream>

#include "vssd/config/config.hh"
#include "vssd/util/fault.hh"

using namespace vssd;
using namespace vssd::config;

namespace {
std::string config_dir() { return VSSD_CONFIG_DIR; }
}

TEST_CASE("the shipped intel750-like preset matches the published shape") {
  auto cfg = load_config(config_dir() + "/intel750-like.toml");
  const auto& g = cfg.device.geometry;
  CHECK(g.channels == 12);
  CHECK(g.ways == 5);
  CHECK(g.dies == 1);
  CHECK(g.planes == 2);
  CHECK(g.blocks == 512);
  CHECK(g.pages == 512);
  const auto& t = cfg.device.flash_timing;
  CHECK(t.t_prog_fast == from_us(820.62));
  CHECK(t.t_prog_slow == from_us(2250.0));
  CHECK(t.t_read_fast == from_us(59.975));
  CHECK(t.t_read_slow == from_us(104.956));
  CHECK(t.t_erase == from_us(3000.0));
  CHECK(t.channel_mhz == 333);
  CHECK(t.bus_width_bits == 8);
  const auto& d = cfg.device.dram;
  CHECK(d.size_bytes == (std::uint64_t{1024} << 20));
  CHECK(d.banks == 8);
  CHECK(d.chips == 4);
  CHECK(d.bus_width_bits == 8);
  CHECK(!cfg.sweep.empty());
}

TEST_CASE("every shipped preset validates") {
  for (const char* name :
       {"tiny.toml", "intel750-like.toml", "fast-flash.toml", "op-sweep.toml",
        "parallel-scaling.toml"}) {
    CHECK_NOTHROW(load_config(config_dir() + "/" + name));
  }
}

TEST_CASE("empty config reports the missing required sections") {
  std::vector<std::string> errors;
  Table t = parse_toml("", errors);
  from_table(t, errors);
  REQUIRE(!errors.empty());
  bool flash = false, workload = false, interface = false;
  for (const auto& e : errors) {
    flash |= e.find("[flash]") != std::string::npos;
    workload |= e.find("[workload]") != std::string::npos;
    interface |= e.find("[interface]") != std::string::npos;
  }
  CHECK(flash);
  CHECK(workload);
  CHECK(interface);
}

TEST_CASE("range violations and unknown keys are all reported at once") {
  std::vector<std::string> errors;
  Table t = parse_toml(
      "[flash]\nchannels = 4\nbogus_key = 1\n"
      "[ftl]\nop_ratio = 1.5\n"
      "[workload]\npattern = \"warp\"\n"
      "[interface]\nkind = \"nvme\"\n",
      errors);
  from_table(t, errors);
  bool bogus = false, ratio = false, pattern = false;
  for (const auto& e : errors) {
    bogus |= e.find("bogus_key") != std::string::npos;
    ratio |= e.find("op_ratio") != std::string::npos;
    pattern |= e.find("pattern") != std::string::npos;
  }
  CHECK(bogus);
  CHECK(ratio);
  CHECK(pattern);
}

TEST_CASE("parser handles comments, strings, arrays, and duplicates") {
  std::vector<std::string> errors;
  Table t = parse_toml(
      "# heading\n"
      "top = 3\n"
      "[a]\n"
      "x = 1.5  # trailing\n"
      "y = \"hash # inside\"\n"
      "z = [1, 2, 3]\n"
      "z = 4\n",
      errors);
  CHECK(t[""]["top"].i == 3);
  CHECK(t["a"]["x"].as_real() == doctest::Approx(1.5));
  CHECK(t["a"]["y"].s == "hash # inside");
  REQUIRE(t["a"]["z"].kind == Value::Kind::array);
  CHECK(t["a"]["z"].arr.size() == 3);
  REQUIRE(errors.size() == 1);  // the duplicate
  CHECK(errors[0].find("duplicate") != std::string::npos);
}

TEST_CASE("sweep keys must name real config keys") {
  std::vector<std::string> errors;
  Table t = parse_toml(
      "[flash]\nchannels = 2\n[workload]\npattern = \"seqread\"\n"
      "[interface]\nkind = \"nvme\"\n"
      "[sweep]\nworkload.nonsense = [1, 2]\n",
      errors);
  from_table(t, errors);
  bool flagged = false;
  for (const auto& e : errors) {
    flagged |= e.find("nonsense") != std::string::npos;
  }
  CHECK(flagged);
}

TEST_CASE("overrides materialize sweep points") {
  std::vector<std::string> errors;
  Table t = parse_toml(
      "[flash]\nchannels = 2\n[workload]\npattern = \"seqread\"\n"
      "queue_depth = 1\n[interface]\nkind = \"nvme\"\n",
      errors);
  REQUIRE(errors.empty());
  apply_override(t, "workload.queue_depth", Value::integer(16));
  auto cfg = from_table(t, errors);
  REQUIRE(errors.empty());
  CHECK(cfg.workload.queue_depth == 16);
}

TEST_CASE("table hash is stable and value-sensitive") {
  std::vector<std::string> e1, e2;
  Table a = parse_toml("[flash]\nchannels = 2\n", e1);
  Table b = parse_toml("[flash]\nchannels = 2\n", e2);
  CHECK(table_hash(a) == table_hash(b));
  apply_override(b, "flash.channels", Value::integer(3));
  CHECK(table_hash(a) != table_hash(b));
}

TEST_CASE("scalar parsing for CLI sweep values") {
  CHECK(parse_scalar("42").i == 42);
  CHECK(parse_scalar("0.25").as_real() == doctest::Approx(0.25));
  CHECK(parse_scalar("true").b);
  CHECK(parse_scalar("\"greedy\"").s == "greedy");
  CHECK_THROWS_AS(parse_scalar("not a number"), ConfigError);
}
