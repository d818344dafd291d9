#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vssd/sim/time.hh"

namespace vssd::stats {

enum class CmdOp : std::uint8_t { read, write, flush, other };

/// Lifecycle timestamps of one host command. submit = doorbell/issue,
/// fetch = command pulled from the queue, fw_done = internal datapath
/// complete, complete = completion posted to the host.
struct CommandRecord {
  std::uint64_t id = 0;
  CmdOp op = CmdOp::other;
  std::uint64_t bytes = 0;
  SimTime submit = 0;
  SimTime fetch = 0;
  SimTime fw_done = 0;
  SimTime complete = 0;
  bool ok = true;
  bool done = false;
};

struct EnergyTable {
  double flash_read_nj = 15000.0;
  double flash_program_nj = 120000.0;
  double flash_erase_nj = 400000.0;
  double idle_flash_mw = 30.0;
  double idle_dram_mw = 120.0;
  double idle_controller_mw = 250.0;
};

struct Summary {
  std::uint64_t commands = 0;
  std::uint64_t errors = 0;
  bool empty = true;  // explicit n=0 flag
  double span_us = 0.0;
  double bandwidth_mbps = 0.0;
  double iops = 0.0;
  double lat_mean_us = 0.0;
  double lat_p50_us = 0.0;
  double lat_p95_us = 0.0;
  double lat_p99_us = 0.0;
  double stage_queue_us = 0.0;  // submit -> fetch
  double stage_fw_us = 0.0;     // fetch -> fw_done
  double stage_post_us = 0.0;   // fw_done -> complete
  std::uint64_t host_read_bytes = 0;
  std::uint64_t host_write_bytes = 0;
  std::uint64_t flash_reads = 0;
  std::uint64_t flash_programs = 0;
  std::uint64_t flash_erases = 0;
  double write_amplification = 0.0;
  std::uint64_t gc_invocations = 0;
  std::uint64_t gc_migrated_pages = 0;
  std::uint64_t gc_erased_superblocks = 0;
  std::uint32_t erase_min = 0;
  std::uint32_t erase_max = 0;
  double cache_hit_ratio = 0.0;
  std::uint64_t dram_bursts = 0;
  double energy_flash_j = 0.0;
  double energy_dram_j = 0.0;
  double energy_idle_j = 0.0;
  double energy_total_j = 0.0;
};

/// Per-command statistics collector. Stage timestamps must be monotone;
/// an inversion is a simulator bug and faults.
class Collector {
 public:
  std::uint64_t begin(CmdOp op, std::uint64_t bytes, SimTime submit);
  /// Fill in fields unknown at doorbell time.
  void set_op(std::uint64_t id, CmdOp op, std::uint64_t bytes);
  void on_fetch(std::uint64_t id, SimTime t);
  void on_fw_done(std::uint64_t id, SimTime t);
  void on_complete(std::uint64_t id, SimTime t, bool ok);

  void add_host_read_bytes(std::uint64_t n) { host_read_bytes_ += n; }
  void add_host_write_bytes(std::uint64_t n) { host_write_bytes_ += n; }
  std::uint64_t host_read_bytes() const { return host_read_bytes_; }
  std::uint64_t host_write_bytes() const { return host_write_bytes_; }

  const std::vector<CommandRecord>& records() const { return records_; }
  void clear();

  /// Aggregate completed commands. `ramp_exclude` drops the first
  /// max(total/10, 100) commands when enough remain.
  Summary summarize(bool ramp_exclude) const;

 private:
  CommandRecord& rec(std::uint64_t id);
  std::vector<CommandRecord> records_;
  std::uint64_t host_read_bytes_ = 0;
  std::uint64_t host_write_bytes_ = 0;
};

}  // namespace vssd::stats
