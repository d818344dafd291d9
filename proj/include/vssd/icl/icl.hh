#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <vector>

#include "vssd/dram/dram.hh"
#include "vssd/ftl/ftl.hh"
#include "vssd/sim/engine.hh"

namespace vssd::icl {

enum class CacheMode : std::uint8_t {
  fully_associative,
  set_associative,
  direct_map,
};
enum class Replacement : std::uint8_t { lru, random };

struct Config {
  bool enabled = true;
  CacheMode mode = CacheMode::fully_associative;
  std::uint32_t sets = 1;            // set_associative only
  std::uint32_t ways = 8;            // set_associative only
  std::uint64_t capacity_lines = 0;  // 0 = derive from DRAM budget
  double dram_budget_fraction = 0.75;
  Replacement replacement = Replacement::lru;
  std::uint32_t readahead_threshold = 3;
  std::uint32_t readahead_degree = 0;  // 0 = number of channels
  bool write_through = false;
  std::uint32_t stream_slots = 1;  // sequential detector table entries
  std::uint64_t rng_seed = 1;
  SimTime entry_latency = 0;  // firmware cost per internal request
  bool content = true;        // move real bytes (data emulation)
};

struct Stats {
  std::uint64_t reads = 0;
  std::uint64_t writes = 0;
  std::uint64_t read_hits = 0;
  std::uint64_t read_misses = 0;
  std::uint64_t fills = 0;
  std::uint64_t evictions = 0;
  std::uint64_t prefetch_lines = 0;
  std::uint64_t flushes = 0;
};

/// Internal cache layer over the DRAM model: super-page lines, write-back
/// buffering with LRU/random replacement, eviction through the FTL's full
/// or partial-write paths, and parallelism-aware sequential readahead.
class Icl {
 public:
  using DoneCb = std::function<void()>;
  using ReadCb = std::function<void(std::vector<std::byte>)>;

  Icl(sim::Engine& engine, dram::Dram& dram, ftl::Ftl& ftl, const Config& cfg);

  const Config& config() const { return cfg_; }
  std::uint32_t slots_per_line() const { return ftl_.layout().slots; }
  std::uint64_t line_bytes() const { return ftl_.layout().superpage_bytes(); }
  std::uint64_t logical_pages() const {
    return ftl_.logical_superpages() * slots_per_line();
  }

  /// Read `count` pages starting at `lpn`; the range must not cross a
  /// super-page boundary (the HIL splits on line boundaries).
  void read(std::uint64_t lpn, std::uint32_t count, ReadCb cb);

  /// Stage `count` pages; acknowledged once the DRAM write completes
  /// (write-back). `data` is count*page_bytes (or empty without content
  /// emulation).
  void write(std::uint64_t lpn, std::uint32_t count,
             std::vector<std::byte> data, DoneCb cb);

  /// Evict every dirty line; calls back with the eviction count.
  void flush_all(std::function<void(std::uint64_t)> cb);

  const Stats& stats() const { return stats_; }

  /// Distinct channels covered by each issued prefetch plan (appended
  /// per plan; used by the readahead tests).
  const std::vector<std::uint32_t>& prefetch_plan_channels() const {
    return prefetch_plan_channels_;
  }

 private:
  enum class LineState : std::uint8_t { empty, filling, ready, evicting };

  struct Line {
    LineState state = LineState::empty;
    std::uint64_t slpn = 0;
    std::uint64_t valid_mask = 0;
    std::uint64_t dirty_mask = 0;
    std::uint64_t stamp = 0;
    std::vector<std::byte> data;
    std::vector<DoneCb> fill_waiters;
    std::vector<DoneCb> evict_waiters;
  };

  struct Stream {
    std::uint64_t next_lpn = ~std::uint64_t{0};
    std::uint64_t run = 0;
  };

  std::uint64_t set_of(std::uint64_t slpn) const {
    return sets_count_ == 1 ? 0 : slpn % sets_count_;
  }
  Line* find(std::uint64_t slpn);
  Line* pick_allocatable(std::uint64_t set, bool allow_evict);
  void reset_line(Line& line, std::uint64_t slpn);
  void wake_set(std::uint64_t set);
  void read_attempt(std::uint64_t lpn, std::uint32_t count, ReadCb cb,
                    bool first);
  void write_attempt(std::uint64_t lpn, std::uint32_t count,
                     std::shared_ptr<std::vector<std::byte>> data, DoneCb cb,
                     bool first);
  void fill_line(Line& line, DoneCb on_ready);
  void start_evict(Line& line, DoneCb done);
  void serve_read(Line& line, std::uint64_t lpn, std::uint32_t count,
                  ReadCb cb);
  void read_bypass(std::uint64_t lpn, std::uint32_t count, ReadCb cb);
  void write_bypass(std::uint64_t lpn, std::uint32_t count,
                    std::shared_ptr<std::vector<std::byte>> data, DoneCb cb);
  void touch_stream(std::uint64_t lpn, std::uint32_t count);
  void maybe_prefetch(std::uint64_t slpn);
  std::uint64_t dram_addr_of(const Line& line) const;
  std::uint64_t full_mask() const {
    const std::uint32_t s = slots_per_line();
    return s >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << s) - 1);
  }

  sim::Engine& engine_;
  dram::Dram& dram_;
  ftl::Ftl& ftl_;
  Config cfg_;
  bool content_;

  std::uint64_t sets_count_ = 1;
  std::uint32_t ways_count_ = 1;
  std::vector<Line> lines_;  // sets_count_ * ways_count_, set-major
  std::vector<std::deque<DoneCb>> set_waiters_;
  std::uint64_t stamp_counter_ = 1;
  std::vector<Stream> streams_;
  std::mt19937_64 rng_;
  Stats stats_;
  std::vector<std::uint32_t> prefetch_plan_channels_;
};

}  // namespace vssd::icl
