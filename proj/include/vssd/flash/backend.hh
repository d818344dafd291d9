#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "vssd/flash/geometry.hh"
#include "vssd/sim/engine.hh"
#include "vssd/sim/time.hh"

namespace vssd::flash {

enum class Op : std::uint8_t { read, program, erase };

enum class Fault : std::uint8_t {
  none,
  address,             // coordinate outside the geometry
  overwrite,           // program to a page the cursor already passed
  out_of_order,        // program skipping ahead of the block cursor
  uninitialized_read,  // read of a never-programmed page
};

const char* fault_name(Fault f);

/// Per-command cell and bus timing. MLC fast/slow pairing follows page
/// parity (even = fast) unless disabled.
struct TimingParams {
  SimTime t_read_fast = from_us(59.975);
  SimTime t_read_slow = from_us(104.956);
  SimTime t_prog_fast = from_us(820.62);
  SimTime t_prog_slow = from_us(2250.0);
  SimTime t_erase = from_us(3000.0);
  std::uint32_t channel_mhz = 333;
  std::uint32_t bus_width_bits = 8;
  bool ddr = true;
  std::uint32_t cmd_cycles = 5;   // command+address phase, per command
  bool prog_pairing = true;       // tPROG fast/slow by page parity
  bool read_pairing = true;       // tR fast/slow by page parity

  SimTime bus_cycle() const { return cycle_ps(channel_mhz); }
};

/// One flash command with its timing lifecycle.
struct Transaction {
  Op op = Op::read;
  Address addr;
  std::uint32_t bytes = 0;  // payload on the channel bus (0 for erase)
  SimTime issued_at = 0;
  SimTime bus_start = 0;   // first bus grant (command phase)
  SimTime cell_start = 0;
  SimTime done_at = 0;
};

struct Counters {
  std::uint64_t reads = 0;
  std::uint64_t programs = 0;
  std::uint64_t erases = 0;
  std::uint64_t read_bytes = 0;
  std::uint64_t program_bytes = 0;
};

/// The storage complex: multi-channel / multi-way flash with per-channel
/// bus contention and per-plane cell exclusivity. Commands queue FIFO per
/// die; the bus is released during cell phases so dies on one channel
/// interleave. Content is tracked when data emulation is on; programmed
/// state (per-block write cursor) is always tracked to enforce the
/// in-order / no-overwrite rules.
class Backend {
 public:
  using Completion = std::function<void(const Transaction&)>;
  using ReadCompletion =
      std::function<void(const Transaction&, std::vector<std::byte>)>;

  Backend(sim::Engine& engine, const Geometry& geometry,
          const TimingParams& timing, bool store_content);

  const Geometry& geometry() const { return geo_; }
  const TimingParams& timing() const { return timing_; }

  /// Cell-phase latency for a command at `addr` (fast/slow pairing applied).
  SimTime cell_latency(Op op, const Address& addr) const;

  /// Channel time for `bytes`, rounded up to whole bus cycles.
  SimTime bus_transfer_time(std::uint64_t bytes) const;

  /// Queue a read. Validation happens now; the completion fires at the
  /// transaction's done time with the page payload (empty when content
  /// emulation is off).
  Fault submit_read(const Address& addr, ReadCompletion on_done);

  /// Queue a program. The payload is captured now (content emulation on);
  /// the write cursor advances now so in-order checks see queued programs.
  Fault submit_program(const Address& addr, std::span<const std::byte> payload,
                       Completion on_done);

  /// Queue a block erase. Resets the write cursor and drops content.
  Fault submit_erase(const Address& block_addr, Completion on_done);

  /// Pages programmed in this block since its last erase (the in-order
  /// write cursor). Also the OCSSD chunk write pointer.
  std::uint32_t write_cursor(const Address& block_addr) const;
  bool is_programmed(const Address& addr) const;
  std::uint32_t erase_count(const Address& block_addr) const;

  const Counters& counters() const { return counters_; }

  /// Optional per-operation log for oracle tests and trace dumps.
  void enable_log(bool on) { log_enabled_ = on; }
  const std::vector<Transaction>& log() const { return log_; }
  void clear_log() { log_.clear(); }

 private:
  struct Pending;

  struct BusRequest {
    SimTime duration;
    std::function<void(SimTime bus_start, SimTime bus_end)> granted;
  };

  struct Channel {
    bool busy = false;
    std::deque<BusRequest> waiting;
  };

  struct Die {
    std::deque<Pending*> queue;
    bool front_active = false;  // a queued command is in its bus phase
  };

  struct Pending {
    Transaction txn;
    Completion on_done;
    ReadCompletion on_read_done;
    std::vector<std::byte> data;
    std::size_t die_index = 0;
  };

  void request_bus(std::uint32_t channel, SimTime duration,
                   std::function<void(SimTime, SimTime)> granted);
  void release_bus(std::uint32_t channel);
  void try_issue(std::size_t die_index);
  void start_command(Pending* p);
  void finish(Pending* p, SimTime done_at);

  std::size_t die_index(const Address& a) const {
    return (static_cast<std::size_t>(a.channel) * geo_.ways + a.way) *
               geo_.dies +
           a.die;
  }

  sim::Engine& engine_;
  Geometry geo_;
  TimingParams timing_;
  bool store_content_;
  bool log_enabled_ = false;

  std::vector<Channel> channels_;
  std::vector<Die> dies_;
  std::vector<SimTime> plane_free_at_;       // indexed by plane_index
  std::vector<std::uint32_t> block_cursor_;  // indexed by block_index
  std::vector<std::uint32_t> erase_counts_;  // indexed by block_index
  std::unordered_map<std::uint64_t, std::vector<std::byte>> content_;
  Counters counters_;
  std::vector<Transaction> log_;
};

}  // namespace vssd::flash
