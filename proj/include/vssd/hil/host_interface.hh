#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "vssd/flash/backend.hh"
#include "vssd/ftl/ftl.hh"
#include "vssd/hil/host_memory.hh"
#include "vssd/hil/protocol.hh"
#include "vssd/icl/icl.hh"
#include "vssd/sim/timeline.hh"
#include "vssd/stats/metrics.hh"

namespace vssd::hil {

enum class Kind : std::uint8_t { nvme, sata, ufs, ocssd };
enum class Arbitration : std::uint8_t { fifo, rr, wrr };

/// Per-stage protocol/firmware latencies. The paper executes firmware on
/// embedded cores; these are the table-driven substitutes.
struct StageLatencies {
  SimTime doorbell = from_ns(100);
  SimTime fetch = from_ns(750);
  SimTime hil = from_ns(500);
  SimTime completion = from_ns(500);
  SimTime msi = from_ns(250);
  SimTime prp_fetch = from_ns(250);   // per pointer-list page
  SimTime dma_overhead = from_ns(200);  // per DMA segment
  SimTime controller = from_ns(400);  // h-type copy, per segment, fixed part
  SimTime isr = from_ns(2000);        // h-type serialized completion service
};

struct InterfaceConfig {
  Kind kind = Kind::nvme;
  std::uint64_t link_bytes_per_sec = 3'200'000'000;  // per direction
  std::uint64_t controller_bytes_per_sec = 4'800'000'000;  // h-type buffer
  Arbitration arbitration = Arbitration::rr;
  std::uint32_t max_queues = 256;
  StageLatencies stages;
  bool content = true;
};

constexpr std::uint32_t kHTypeSlots = 32;  // SATA NCQ / UFS UTRD list depth

/// Device-side protocol engine: queue state machines (NVMe SQ/CQ with
/// doorbells and phase tags, SATA/UFS 32-slot lists, OCSSD vector
/// commands), command fetch arbitration, pointer-list DMA, and the
/// split into super-page-aligned internal requests for the ICL.
class HostInterface {
 public:
  using MsiHandler = std::function<void(std::uint16_t qid)>;
  using SlotHandler = std::function<void(std::uint32_t slot, std::uint16_t status)>;

  HostInterface(sim::Engine& engine, HostMemory& mem, icl::Icl& icl,
                ftl::Ftl& ftl, flash::Backend& backend,
                stats::Collector& metrics, const InterfaceConfig& cfg);

  const InterfaceConfig& config() const { return cfg_; }
  std::uint64_t logical_bytes() const { return ftl_.logical_bytes(); }

  // --- s-type (NVMe / OCSSD) register surface -------------------------
  void set_admin_queues(std::uint64_t sq_addr, std::uint32_t sq_size,
                        std::uint64_t cq_addr, std::uint32_t cq_size);
  void ring_sq_doorbell(std::uint16_t qid, std::uint32_t new_tail);
  void ring_cq_doorbell(std::uint16_t qid, std::uint32_t new_head);
  void set_msi_handler(MsiHandler h) { msi_ = std::move(h); }

  // --- h-type (SATA / UFS) --------------------------------------------
  /// Issue the command record at `header_addr` (encoded SubmissionEntry;
  /// PRDT location in mptr/count). False when the slot is still busy.
  bool issue_slot(std::uint32_t slot, std::uint64_t header_addr);
  void set_slot_handler(SlotHandler h) { slot_handler_ = std::move(h); }
  std::uint32_t busy_slots() const { return busy_slots_; }

  /// Peak number of simultaneously busy h-type slots over the run.
  std::uint32_t max_busy_slots() const { return max_busy_slots_; }

  struct QueueStats {
    std::uint64_t fetched = 0;
  };
  const std::map<std::uint16_t, QueueStats>& queue_stats() const {
    return queue_stats_;
  }

  /// One line per SQ fetch / CQ post, for debugging.
  void set_protocol_trace(std::function<void(const std::string&)> sink) {
    trace_ = std::move(sink);
  }

 private:
  struct Queue {
    bool sq_valid = false;
    bool cq_valid = false;
    std::uint64_t sq_addr = 0;
    std::uint64_t cq_addr = 0;
    std::uint32_t sq_size = 0;
    std::uint32_t cq_size = 0;
    std::uint32_t sq_tail = 0;     // host doorbell
    std::uint32_t sq_head = 0;     // device fetch pointer
    std::uint32_t cq_tail = 0;     // device post pointer
    std::uint32_t cq_head = 0;     // host doorbell
    bool cq_phase = true;
    std::uint32_t weight = 1;
    std::uint32_t unfetched = 0;
    std::deque<CompletionEntry> cq_backlog;
    std::deque<std::uint64_t> metric_ids;  // per published entry, fetch order
  };

  struct Command {
    std::uint16_t qid = 0;
    SubmissionEntry sqe;
    std::uint64_t metric_id = 0;
    std::uint32_t slot = 0;  // h-type
    std::vector<Segment> segments;
    std::vector<std::byte> staging;
    std::uint64_t byte_off = 0;  // device byte offset of staging[0]
    std::uint16_t status = kStatusSuccess;
  };

  bool s_type() const { return cfg_.kind == Kind::nvme || cfg_.kind == Kind::ocssd; }

  void kick_fetch();
  std::optional<std::uint16_t> arbitrate();
  void fetch_from(std::uint16_t qid);
  void execute(std::shared_ptr<Command> cmd);
  void execute_admin(std::shared_ptr<Command> cmd);
  void execute_io(std::shared_ptr<Command> cmd);
  void execute_vector(std::shared_ptr<Command> cmd);
  void dma(std::shared_ptr<Command> cmd, bool to_host,
           std::function<void()> done);
  void run_internal_ops(std::shared_ptr<Command> cmd, bool is_write,
                        std::function<void()> done);
  void complete(std::shared_ptr<Command> cmd);
  void set_op(const Command& cmd, stats::CmdOp op, std::uint64_t bytes);
  void fw_done(const Command& cmd);
  void post_cqe(std::uint16_t qid, CompletionEntry e);
  void drain_cq_backlog(std::uint16_t qid);
  void trace(const std::string& line) {
    if (trace_) {
      trace_(line);
    }
  }

  sim::Engine& engine_;
  HostMemory& mem_;
  icl::Icl& icl_;
  ftl::Ftl& ftl_;
  flash::Backend& backend_;
  stats::Collector& metrics_;
  InterfaceConfig cfg_;

  std::map<std::uint16_t, Queue> queues_;
  std::map<std::uint16_t, QueueStats> queue_stats_;
  std::deque<std::uint16_t> fifo_order_;
  std::uint16_t rr_last_ = 0;
  std::uint16_t wrr_qid_ = 0;
  std::uint32_t wrr_credit_ = 0;
  bool fetch_busy_ = false;

  // h-type state
  std::vector<std::uint8_t> slot_busy_;
  std::vector<std::uint64_t> slot_metric_;
  std::deque<std::pair<std::uint32_t, std::uint64_t>> slot_fifo_;
  std::uint32_t busy_slots_ = 0;
  std::uint32_t max_busy_slots_ = 0;

  sim::Timeline link_h2d_;
  sim::Timeline link_d2h_;
  sim::Timeline controller_;
  sim::Timeline isr_;

  MsiHandler msi_;
  SlotHandler slot_handler_;
  std::function<void(const std::string&)> trace_;
};

}  // namespace vssd::hil
