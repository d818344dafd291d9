#pragma once

#include <cstdint>
#include <functional>
#include <istream>
#include <memory>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "vssd/hil/host_interface.hh"
#include "vssd/sim/time.hh"

namespace vssd {
class Device;
}

namespace vssd::host {

enum class Pattern : std::uint8_t {
  seqread,
  randread,
  seqwrite,
  randwrite,
  mixed,
  trace,
};
enum class Precondition : std::uint8_t { none, fill, stress };
enum class ReplayMode : std::uint8_t { timed, closed_loop };

struct WorkloadSpec {
  Pattern pattern = Pattern::seqread;
  double read_ratio = 0.5;  // mixed only
  std::uint64_t block_bytes = 4096;
  std::uint32_t queue_depth = 1;
  std::uint64_t total_ops = 1000;
  std::uint64_t range_bytes = 0;  // 0 = full logical range
  std::uint64_t seed = 1;
  Precondition precondition = Precondition::none;
  std::uint64_t precondition_block = std::uint64_t{1} << 20;
  std::string trace_path;
  ReplayMode replay_mode = ReplayMode::closed_loop;
  bool verify = false;
};

struct TraceRecord {
  SimTime at = 0;  // offset from run start
  std::uint64_t lba = 0;  // 512-byte sectors
  std::uint32_t bytes = 0;
  bool is_write = false;
};

/// Parse `timestamp_us lba_512 length_bytes R|W` lines. Throws
/// ConfigError naming the offending line.
std::vector<TraceRecord> parse_trace(std::istream& in);

/// Seed-derived payload for one block-sized write.
void fill_payload(std::vector<std::byte>& buf, std::uint64_t seed,
                  std::uint64_t lba, std::uint64_t generation);

/// Host-side device driver: owns rings/slots in host memory and submits
/// one command at a time per free slot.
class Driver {
 public:
  using CompletionCb =
      std::function<void(std::uint16_t status, std::uint64_t data_addr)>;

  virtual ~Driver() = default;

  /// Prepare queues/buffers for commands of at most `max_io_bytes`.
  virtual void setup(std::uint32_t queue_depth, std::uint64_t max_io_bytes) = 0;

  /// Submit; false when no slot/ring space is free right now.
  virtual bool submit(bool is_write, std::uint64_t byte_off,
                      std::uint64_t byte_len,
                      const std::vector<std::byte>* payload,
                      CompletionCb cb) = 0;

  virtual bool flush(CompletionCb cb) = 0;

  /// Largest usable queue depth (h-type storage clamps at 32).
  virtual std::uint32_t depth_limit() const = 0;
};

std::unique_ptr<Driver> make_driver(Device& dev);

/// NVMe driver with explicit multi-queue control, for arbitration and
/// protocol tests.
class NvmeDriver : public Driver {
 public:
  NvmeDriver(Device& dev, std::uint32_t nr_queues,
             std::vector<std::uint32_t> weights = {});
  ~NvmeDriver() override;

  void setup(std::uint32_t queue_depth, std::uint64_t max_io_bytes) override;
  bool submit(bool is_write, std::uint64_t byte_off, std::uint64_t byte_len,
              const std::vector<std::byte>* payload, CompletionCb cb) override;
  bool flush(CompletionCb cb) override;
  std::uint32_t depth_limit() const override { return 0xffffffff; }

  /// Submit on a specific queue (1-based IO queue index).
  bool submit_on(std::uint32_t queue, bool is_write, std::uint64_t byte_off,
                 std::uint64_t byte_len, const std::vector<std::byte>* payload,
                 CompletionCb cb);
  /// Use a single contiguous SGL descriptor instead of a PRP list.
  void use_sgl(bool on) { sgl_ = on; }

  struct Impl;
  Impl* impl() { return impl_.get(); }

 private:
  std::unique_ptr<Impl> impl_;
  bool sgl_ = false;
};

/// SATA / UFS driver over the 32-entry command list.
class HTypeDriver : public Driver {
 public:
  explicit HTypeDriver(Device& dev);
  ~HTypeDriver() override;

  void setup(std::uint32_t queue_depth, std::uint64_t max_io_bytes) override;
  bool submit(bool is_write, std::uint64_t byte_off, std::uint64_t byte_len,
              const std::vector<std::byte>* payload, CompletionCb cb) override;
  bool flush(CompletionCb cb) override;
  std::uint32_t depth_limit() const override { return hil::kHTypeSlots; }

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

/// Open-channel driver: a minimal host FTL (page map, append-only chunks,
/// round-robin striping across channels) issuing vector commands.
class OcssdDriver : public Driver {
 public:
  explicit OcssdDriver(Device& dev);
  ~OcssdDriver() override;

  void setup(std::uint32_t queue_depth, std::uint64_t max_io_bytes) override;
  bool submit(bool is_write, std::uint64_t byte_off, std::uint64_t byte_len,
              const std::vector<std::byte>* payload, CompletionCb cb) override;
  bool flush(CompletionCb cb) override;
  std::uint32_t depth_limit() const override { return 0xffffffff; }

  /// Hand-built vector command (tests and passive-mode experiments).
  bool raw_vector(std::uint8_t opcode, const std::vector<std::uint64_t>& ppas,
                  const std::vector<std::byte>* payload, CompletionCb cb);

  struct Impl;
  Impl* impl() { return impl_.get(); }

 private:
  std::unique_ptr<Impl> impl_;
};

struct RunResult {
  std::uint64_t submitted = 0;
  std::uint64_t completed = 0;
  std::uint64_t errors = 0;
  std::uint64_t verify_mismatches = 0;
  std::uint32_t in_flight_low = 0;   // observed at completions after ramp-up
  std::uint32_t in_flight_high = 0;
};

/// The simulated host: closed-loop synthetic generators, trace replay,
/// and steady-state preconditioning over any Driver.
class Harness {
 public:
  Harness(Device& dev, const WorkloadSpec& spec);

  /// Sequential fill (and the extra random pass in stress mode). Runs
  /// the engine to completion.
  void precondition();

  /// Execute the workload to completion and return counters.
  RunResult run();

  /// Re-read every written block and compare against the seed-derived
  /// payloads. Requires content emulation and collision-free writes.
  std::uint64_t verify_pass();

  /// Issue a flush command and drain the engine.
  void flush_device();

 private:
  struct Op {
    bool is_write = false;
    std::uint64_t off = 0;
    std::uint64_t len = 0;
  };
  bool next_op(Op& op);
  void pump();
  void ensure_setup();
  std::uint64_t range() const;
  bool setup_done_ = false;

  Device& dev_;
  WorkloadSpec spec_;
  std::unique_ptr<Driver> driver_;
  std::mt19937_64 rng_;
  std::vector<TraceRecord> trace_;
  std::uint64_t trace_idx_ = 0;
  std::uint64_t seq_off_ = 0;
  std::uint64_t issued_ = 0;
  std::uint64_t done_ = 0;
  std::uint32_t in_flight_ = 0;
  RunResult result_;
  std::vector<std::byte> payload_buf_;
  std::unordered_map<std::uint64_t, std::uint64_t> generations_;
};

}  // namespace vssd::host
