#pragma once

#include <cstdint>
#include <vector>

#include "vssd/sim/time.hh"

namespace vssd::dram {

struct Config {
  std::uint64_t size_bytes = std::uint64_t{1} << 30;
  std::uint32_t channels = 1;
  std::uint32_t ranks = 1;
  std::uint32_t banks = 8;
  std::uint32_t chips = 4;
  std::uint32_t bus_width_bits = 8;  // per chip
  SimTime t_rp = from_ns(13.75);
  SimTime t_rcd = from_ns(13.75);
  SimTime t_cl = from_ns(13.75);
  std::uint32_t burst_bytes = 64;
  std::uint32_t io_mhz = 800;
  bool ddr = true;
  bool close_page = false;  // open-page policy by default
  std::uint64_t row_bytes = 8192;
  double energy_per_burst_nj = 1.0;

  /// Transfer time of one burst on the data bus.
  SimTime burst_time() const {
    const std::uint64_t bytes_per_cycle =
        std::uint64_t{bus_width_bits} / 8 * chips * (ddr ? 2 : 1);
    const std::uint64_t cycles =
        (burst_bytes + bytes_per_cycle - 1) / bytes_per_cycle;
    return cycles * cycle_ps(io_mhz);
  }
};

/// Bank-state-aware internal DRAM timing. Accesses split into bursts;
/// banks are selected by low-order interleave on burst-aligned address
/// bits. Row activations overlap across banks while burst transfers
/// serialize on the shared data bus. Timing/energy only; bytes live in
/// the caller's buffers.
class Dram {
 public:
  explicit Dram(const Config& cfg);

  const Config& config() const { return cfg_; }

  /// Completion time of an access starting at `now`. Out-of-range is a
  /// logic fault.
  SimTime access(std::uint64_t addr, std::uint64_t len, bool is_write,
                 SimTime now);

  /// Table-driven energy of an access, in nanojoules.
  double energy_of_access(std::uint64_t len, bool is_write) const;

  std::uint64_t bursts_total() const { return bursts_; }
  double energy_total_nj() const { return energy_nj_; }

 private:
  struct Bank {
    std::int64_t open_row = -1;
    SimTime busy_until = 0;
  };

  Config cfg_;
  std::vector<Bank> banks_;
  SimTime bus_free_at_ = 0;
  std::uint64_t bursts_ = 0;
  double energy_nj_ = 0.0;
};

}  // namespace vssd::dram
