#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "vssd/flash/backend.hh"
#include "vssd/ftl/layout.hh"
#include "vssd/sim/engine.hh"

namespace vssd::ftl {

enum class GcPolicy : std::uint8_t { greedy, costbenefit };
enum class MappingMode : std::uint8_t { superpage, page, block };

struct Config {
  double op_ratio = 0.20;
  double gc_trigger = 0.05;  // start GC below this free fraction
  double gc_stop = 0.10;     // collect until at least this free fraction
  GcPolicy policy = GcPolicy::greedy;
  MappingMode mapping = MappingMode::superpage;
  Span span = Span::channel;
  bool partial_remap = true;       // per-page exception path on partial writes
  std::uint32_t exception_cap = 0;  // per-super-page; 0 = slots
  double exception_block_fraction = 0.10;  // ceiling on exception blocks
  bool background_gc = false;
  SimTime op_latency = 0;   // firmware cost per translation op
  SimTime fil_latency = 0;  // firmware cost per flash submission batch
};

struct GcReport {
  std::uint64_t migrated_pages = 0;  // physical pages programmed by GC
  std::uint64_t erased_blocks = 0;   // super-blocks reclaimed
  SimTime stall_time = 0;
};

struct GcStats {
  std::uint64_t invocations = 0;
  std::uint64_t migrated_pages = 0;
  std::uint64_t erased_superblocks = 0;
  SimTime stall_total = 0;
};

/// Candidate view handed to the victim-selection policies. valid_pages
/// counts the live page references the block still holds.
struct VictimView {
  std::uint64_t id = 0;
  std::uint64_t valid_pages = 0;
  std::uint64_t capacity_pages = 0;
  std::uint32_t erase_count = 0;
  SimTime last_modified = 0;
};

/// Address translation at super-page granularity with reserved-block
/// allocation, greedy / cost-benefit garbage collection, wear-aware
/// block allocation, and selective per-page remapping of partial
/// super-page writes through per-group exception blocks.
class Ftl {
 public:
  using WriteCb = std::function<void(std::uint64_t sppn)>;
  using ReadCb = std::function<void(std::vector<std::byte> line)>;
  using GcCb = std::function<void(const GcReport&)>;

  struct Translation {
    std::uint64_t sppn = 0;
    // slot -> (exception super-block, page) redirects, slot-ascending.
    std::vector<std::pair<std::uint32_t, std::pair<std::uint64_t, std::uint32_t>>>
        exceptions;
  };

  Ftl(sim::Engine& engine, flash::Backend& backend, const Config& cfg);

  const Layout& layout() const { return layout_; }
  const Config& config() const { return cfg_; }
  std::uint64_t logical_superpages() const { return logical_superpages_; }
  std::uint64_t logical_bytes() const {
    return logical_superpages_ * layout_.superpage_bytes();
  }

  /// Pure lookup; no state change, no timing.
  std::optional<Translation> translate_read(std::uint64_t slpn) const;

  /// Physical location of one slot under a translation.
  flash::Address slot_address(const Translation& t, std::uint32_t slot) const;

  /// Timed read of the slots in `slot_mask`; requires a mapped slpn.
  /// The callback receives a full line buffer (requested slots filled;
  /// empty vector when content emulation is off).
  void read(std::uint64_t slpn, std::uint64_t slot_mask, ReadCb cb);

  /// Full super-page write. Allocates the next row of the round-robin
  /// active block, remaps, invalidates the old location, and programs
  /// every slot. May run GC first when the free pool is low.
  void write(std::uint64_t slpn, std::vector<std::byte> data, WriteCb cb);

  /// Partial super-page write of the slots in `dirty_mask` (data buffer
  /// is a full line with dirty slots filled). Uses the exception path
  /// when enabled and under the cap; otherwise falls back to reading
  /// the clean slots and rewriting the full super-page.
  void write_partial(std::uint64_t slpn, std::uint64_t dirty_mask,
                     std::vector<std::byte> data, WriteCb cb);

  /// TRIM: drop the mapping and its valid bits. No-op when unmapped.
  void invalidate(std::uint64_t slpn);

  /// Collect until the free pool reaches the stop threshold.
  void collect(GcCb cb);

  /// Collect up to `max_victims` regardless of thresholds (background
  /// mode and tests).
  void collect_n(std::size_t max_victims, GcCb cb);

  /// Background-GC hook: reclaims one victim per idle notification.
  void on_idle();

  std::optional<std::uint64_t> select_victim_greedy() const;
  std::optional<std::uint64_t> select_victim_costbenefit() const;

  static std::optional<std::uint64_t> select_greedy(
      std::span<const VictimView> views);
  static std::optional<std::uint64_t> select_costbenefit(
      std::span<const VictimView> views, SimTime now);

  /// Which free block the wear-aware allocator would hand out next for
  /// `group` (least erases, ties by id).
  std::optional<std::uint64_t> next_allocation(std::uint32_t group) const;

  std::uint64_t free_superblocks() const { return free_count_; }
  double free_fraction() const {
    return static_cast<double>(free_count_) /
           static_cast<double>(layout_.superblocks());
  }
  bool gc_active() const { return gc_active_; }
  const GcStats& gc_stats() const { return gc_stats_; }

  std::uint32_t erase_count(std::uint64_t sb) const {
    return meta_[sb].erase_count;
  }
  std::uint64_t host_superpage_writes() const { return host_writes_; }
  std::uint64_t reads_issued() const { return reads_; }

 private:
  enum class Use : std::uint8_t { free, active_data, data, active_ex, ex };

  struct SuperBlockMeta {
    Use use = Use::free;
    std::uint32_t erase_count = 0;
    std::uint64_t valid_pages = 0;
    std::uint32_t live_rows = 0;  // rows with a live owner (data use)
    SimTime last_modified = 0;
    std::uint32_t data_cursor = 0;           // rows programmed (data use)
    std::vector<std::uint64_t> owner;        // row -> slpn (data use)
    std::vector<std::uint32_t> ex_cursor;    // per-slot append point (ex use)
    std::vector<std::uint64_t> ex_owner;     // slot*rows+page -> slpn (ex use)
  };

  struct ActiveRef {
    bool valid = false;
    std::uint64_t sb = 0;
  };

  void check_slpn(std::uint64_t slpn) const;
  std::uint64_t allocate_free_block(std::uint32_t group);
  bool group_has_space(std::uint32_t group) const;
  void unmap(std::uint64_t slpn);
  void maybe_gc(std::function<void()> k);
  std::uint64_t do_write(std::uint64_t slpn, std::vector<std::byte> data,
                         WriteCb cb, bool from_gc);
  void do_write_partial(std::uint64_t slpn, std::uint64_t dirty_mask,
                        std::vector<std::byte> data, WriteCb cb);
  void fallback_rewrite(std::uint64_t slpn, std::uint64_t dirty_mask,
                        std::vector<std::byte> data, WriteCb cb);
  void submit_row_programs(std::uint64_t sb, std::uint32_t row,
                           std::uint64_t slot_mask, std::vector<std::byte> data,
                           std::function<void()> done);
  void collect_impl(std::size_t max_victims, bool use_threshold, GcCb cb);
  void gc_step(std::size_t remaining, bool use_threshold,
               std::function<void()> done);
  void migrate_victim(std::uint64_t sb, std::function<void()> done);
  void migrate_rows(std::uint64_t sb, std::vector<std::uint64_t> slpns,
                    std::size_t idx, std::function<void()> done);
  void erase_superblock(std::uint64_t sb, std::function<void()> done);
  std::vector<VictimView> victim_views() const;

  struct MergeCtx {
    std::uint64_t old_sb = 0;
    std::uint64_t new_sb = 0;
    std::uint32_t rows = 0;
    std::uint32_t new_row = 0;
    std::vector<std::byte> new_data;
    WriteCb cb;
  };
  void merge_block(std::uint64_t lbn, std::uint32_t new_row,
                   std::vector<std::byte> new_data, WriteCb cb);
  void copy_merge_row(std::shared_ptr<MergeCtx> ctx, std::uint32_t row);

  static constexpr std::uint64_t kUnmapped = ~std::uint64_t{0};
  static constexpr std::uint32_t kNoRow = ~std::uint32_t{0};

  sim::Engine& engine_;
  flash::Backend& backend_;
  Config cfg_;
  Layout layout_;
  std::uint64_t logical_superpages_ = 0;

  std::vector<std::uint64_t> map_;  // slpn -> sppn (kUnmapped when absent)
  std::unordered_map<std::uint64_t,
                     std::vector<std::pair<std::uint32_t,
                                           std::pair<std::uint64_t, std::uint32_t>>>>
      exceptions_;  // slpn -> slot redirects

  std::vector<SuperBlockMeta> meta_;
  std::vector<std::vector<std::uint64_t>> free_lists_;  // per group
  std::uint64_t free_count_ = 0;
  std::vector<ActiveRef> active_data_;
  std::vector<ActiveRef> active_ex_;
  std::uint64_t rr_group_ = 0;

  bool gc_active_ = false;
  std::deque<std::function<void()>> gc_waiters_;
  GcStats gc_stats_;
  GcReport gc_current_;
  SimTime gc_started_ = 0;

  std::uint64_t host_writes_ = 0;
  std::uint64_t reads_ = 0;
};

}  // namespace vssd::ftl
