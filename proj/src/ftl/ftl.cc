#include "vssd/ftl/ftl.hh"

#include <algorithm>
#include <bit>
#include <memory>

#include "vssd/util/fault.hh"

namespace vssd::ftl {

namespace {

std::uint64_t full_mask(std::uint32_t slots) {
  return slots >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << slots) - 1);
}

}  // namespace

Ftl::Ftl(sim::Engine& engine, flash::Backend& backend, const Config& cfg)
    : engine_(engine), backend_(backend), cfg_(cfg) {
  Span span = cfg_.span;
  if (cfg_.mapping == MappingMode::page) {
    span = Span::none;
  }
  layout_ = Layout::make(backend_.geometry(), span);
  sim_check(layout_.slots <= 64, "super-page slots exceed 64 (span too wide)");
  sim_check(cfg_.op_ratio > 0.0 && cfg_.op_ratio < 1.0, "op_ratio out of range");
  // The hysteresis window has to fit inside the reserve, or the stop
  // threshold is unreachable at steady state and collections grind.
  cfg_.gc_stop = std::min(cfg_.gc_stop, cfg_.op_ratio * 0.8);
  cfg_.gc_trigger = std::min(cfg_.gc_trigger, cfg_.gc_stop * 0.5);

  const std::uint64_t total = layout_.superpages();
  logical_superpages_ =
      static_cast<std::uint64_t>(static_cast<double>(total) *
                                 (1.0 - cfg_.op_ratio));
  sim_check(logical_superpages_ >= 1, "geometry too small for op_ratio");

  const std::uint64_t map_entries =
      cfg_.mapping == MappingMode::block
          ? (logical_superpages_ + layout_.rows - 1) / layout_.rows
          : logical_superpages_;
  map_.assign(map_entries, kUnmapped);

  meta_.resize(layout_.superblocks());
  free_lists_.resize(layout_.groups);
  for (std::uint32_t g = 0; g < layout_.groups; ++g) {
    for (std::uint32_t b = 0; b < layout_.blocks; ++b) {
      free_lists_[g].push_back(layout_.sb_of(g, b));
    }
  }
  free_count_ = layout_.superblocks();
  active_data_.resize(layout_.groups);
  active_ex_.resize(layout_.groups);
  if (cfg_.exception_cap == 0) {
    cfg_.exception_cap = layout_.slots;
  }
}

void Ftl::check_slpn(std::uint64_t slpn) const {
  sim_check(slpn < logical_superpages_, "slpn out of logical range: ", slpn);
}

std::optional<Ftl::Translation> Ftl::translate_read(std::uint64_t slpn) const {
  check_slpn(slpn);
  Translation t;
  if (cfg_.mapping == MappingMode::block) {
    const std::uint64_t lbn = slpn / layout_.rows;
    const std::uint32_t row = static_cast<std::uint32_t>(slpn % layout_.rows);
    const std::uint64_t sb = map_[lbn];
    if (sb == kUnmapped || row >= meta_[sb].data_cursor ||
        meta_[sb].owner[row] != slpn) {
      return std::nullopt;
    }
    t.sppn = sb * layout_.rows + row;
    return t;
  }
  if (map_[slpn] == kUnmapped) {
    return std::nullopt;
  }
  t.sppn = map_[slpn];
  auto it = exceptions_.find(slpn);
  if (it != exceptions_.end()) {
    t.exceptions = it->second;
  }
  return t;
}

flash::Address Ftl::slot_address(const Translation& t,
                                 std::uint32_t slot) const {
  for (const auto& [s, loc] : t.exceptions) {
    if (s == slot) {
      return layout_.address_of(loc.first, loc.second, slot);
    }
  }
  return layout_.address_of(t.sppn / layout_.rows,
                            static_cast<std::uint32_t>(t.sppn % layout_.rows),
                            slot);
}

bool Ftl::group_has_space(std::uint32_t group) const {
  const ActiveRef& ad = active_data_[group];
  if (ad.valid && meta_[ad.sb].data_cursor < layout_.rows) {
    return true;
  }
  return !free_lists_[group].empty();
}

std::optional<std::uint64_t> Ftl::next_allocation(std::uint32_t group) const {
  const auto& pool = free_lists_[group];
  if (pool.empty()) {
    return std::nullopt;
  }
  std::uint64_t best = pool[0];
  for (std::uint64_t sb : pool) {
    if (meta_[sb].erase_count < meta_[best].erase_count ||
        (meta_[sb].erase_count == meta_[best].erase_count && sb < best)) {
      best = sb;
    }
  }
  return best;
}

std::uint64_t Ftl::allocate_free_block(std::uint32_t group) {
  auto& pool = free_lists_[group];
  sim_check(!pool.empty(), "free pool exhausted in group ", group);
  std::size_t best = 0;
  for (std::size_t i = 1; i < pool.size(); ++i) {
    const auto& a = meta_[pool[i]];
    const auto& b = meta_[pool[best]];
    if (a.erase_count < b.erase_count ||
        (a.erase_count == b.erase_count && pool[i] < pool[best])) {
      best = i;
    }
  }
  const std::uint64_t sb = pool[best];
  pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best));
  --free_count_;
  return sb;
}

void Ftl::unmap(std::uint64_t slpn) {
  if (cfg_.mapping == MappingMode::block) {
    const std::uint64_t lbn = slpn / layout_.rows;
    const std::uint32_t row = static_cast<std::uint32_t>(slpn % layout_.rows);
    const std::uint64_t sb = map_[lbn];
    if (sb == kUnmapped) {
      return;
    }
    SuperBlockMeta& m = meta_[sb];
    if (row < m.data_cursor && m.owner[row] == slpn) {
      m.owner[row] = kUnmapped;
      --m.live_rows;
      m.valid_pages -= layout_.slots;
    }
    return;
  }
  const std::uint64_t sppn = map_[slpn];
  if (sppn == kUnmapped) {
    return;
  }
  const std::uint64_t sb = sppn / layout_.rows;
  const std::uint32_t row = static_cast<std::uint32_t>(sppn % layout_.rows);
  SuperBlockMeta& m = meta_[sb];
  std::uint32_t excepted = 0;
  if (auto it = exceptions_.find(slpn); it != exceptions_.end()) {
    for (const auto& [slot, loc] : it->second) {
      SuperBlockMeta& em = meta_[loc.first];
      const std::size_t idx =
          std::size_t{slot} * layout_.rows + loc.second;
      if (em.ex_owner[idx] == slpn) {
        em.ex_owner[idx] = kUnmapped;
        --em.valid_pages;
      }
      ++excepted;
    }
    exceptions_.erase(it);
  }
  m.owner[row] = kUnmapped;
  --m.live_rows;
  m.valid_pages -= layout_.slots - excepted;
  map_[slpn] = kUnmapped;
}

void Ftl::maybe_gc(std::function<void()> k) {
  if (gc_active_) {
    gc_waiters_.push_back(std::move(k));
    return;
  }
  if (free_fraction() < cfg_.gc_trigger) {
    collect([k = std::move(k)](const GcReport&) mutable { k(); });
    return;
  }
  k();
}

void Ftl::write(std::uint64_t slpn, std::vector<std::byte> data, WriteCb cb) {
  check_slpn(slpn);
  ++host_writes_;
  engine_.schedule_after(cfg_.op_latency, [this, slpn, data = std::move(data),
                                           cb = std::move(cb)]() mutable {
    maybe_gc([this, slpn, data = std::move(data), cb = std::move(cb)]() mutable {
      do_write(slpn, std::move(data), std::move(cb), false);
    });
  });
}

std::uint64_t Ftl::do_write(std::uint64_t slpn, std::vector<std::byte> data,
                            WriteCb cb, bool from_gc) {
  if (cfg_.mapping == MappingMode::block) {
    // Block-granular mapping: the row offset inside the mapped block is
    // fixed by the logical address, so overwrites and backward writes
    // force a merge into a fresh block.
    const std::uint64_t lbn = slpn / layout_.rows;
    const std::uint32_t row = static_cast<std::uint32_t>(slpn % layout_.rows);
    std::uint64_t sb = map_[lbn];
    if (sb != kUnmapped && row < meta_[sb].data_cursor) {
      merge_block(lbn, row, std::move(data), std::move(cb));
      return 0;
    }
    if (sb == kUnmapped) {
      const std::uint32_t g =
          static_cast<std::uint32_t>(lbn % layout_.groups);
      std::uint32_t pick = g;
      for (std::uint32_t i = 0; i < layout_.groups; ++i) {
        pick = (g + i) % layout_.groups;
        if (!free_lists_[pick].empty()) {
          break;
        }
      }
      sb = allocate_free_block(pick);
      SuperBlockMeta& m = meta_[sb];
      m.use = Use::data;
      m.owner.assign(layout_.rows, kUnmapped);
      m.data_cursor = 0;
      map_[lbn] = sb;
    }
    SuperBlockMeta& m = meta_[sb];
    // Fill any gap rows with zeroes to keep per-block programs in-order.
    auto remaining = std::make_shared<std::uint32_t>(0);
    auto done = [cb = std::move(cb), sppn = sb * layout_.rows + row]() {
      if (cb) {
        cb(sppn);
      }
    };
    auto join = std::make_shared<std::function<void()>>(std::move(done));
    const std::uint64_t mask = full_mask(layout_.slots);
    const bool content = !data.empty();
    while (m.data_cursor < row) {
      ++*remaining;
      std::vector<std::byte> zeros;
      if (content) {
        zeros.assign(layout_.superpage_bytes(), std::byte{0});
      }
      submit_row_programs(sb, m.data_cursor, mask, std::move(zeros),
                          [remaining, join] {
                            if (--*remaining == 0) {
                              (*join)();
                            }
                          });
      ++m.data_cursor;
    }
    ++*remaining;
    m.owner[row] = slpn;
    ++m.live_rows;
    m.valid_pages += layout_.slots;
    m.last_modified = engine_.now();
    m.data_cursor = row + 1;
    submit_row_programs(sb, row, mask, std::move(data), [remaining, join] {
      if (--*remaining == 0) {
        (*join)();
      }
    });
    return sb * layout_.rows + row;
  }

  std::uint32_t g = static_cast<std::uint32_t>(rr_group_ % layout_.groups);
  bool found = false;
  for (std::uint32_t i = 0; i < layout_.groups; ++i) {
    const std::uint32_t cand =
        static_cast<std::uint32_t>((rr_group_ + i) % layout_.groups);
    if (group_has_space(cand)) {
      g = cand;
      found = true;
      break;
    }
  }
  if (!found) {
    std::uint64_t act_rows = 0;
    for (std::uint32_t gi = 0; gi < layout_.groups; ++gi) {
      if (active_data_[gi].valid) {
        act_rows += layout_.rows - meta_[active_data_[gi].sb].data_cursor;
      }
    }
    std::uint64_t n_data = 0, n_ex = 0, n_free = 0, n_act = 0, n_actex = 0;
    std::uint64_t valid_sum = 0;
    const std::uint64_t cap = std::uint64_t{layout_.rows} * layout_.slots;
    std::uint64_t reclaimable = 0;
    for (const auto& m : meta_) {
      switch (m.use) {
        case Use::free: ++n_free; break;
        case Use::data: ++n_data; if (m.valid_pages < cap) ++reclaimable; break;
        case Use::ex: ++n_ex; if (m.valid_pages < cap) ++reclaimable; break;
        case Use::active_data: ++n_act; break;
        case Use::active_ex: ++n_actex; break;
      }
      valid_sum += m.valid_pages;
    }
    sim_fault("no group has a writable block (device full): free=",
              free_count_, " gc_active=", gc_active_ ? 1 : 0,
              " active_rows=", act_rows, " data=", n_data, " ex=", n_ex,
              " act=", n_act, " actex=", n_actex, " reclaimable=", reclaimable,
              " valid_sum=", valid_sum, " cap_total=", cap * meta_.size());
  }
  rr_group_ = g + 1;

  ActiveRef& ad = active_data_[g];
  if (!ad.valid || meta_[ad.sb].data_cursor == layout_.rows) {
    if (ad.valid) {
      meta_[ad.sb].use = Use::data;
    }
    ad.sb = allocate_free_block(g);
    ad.valid = true;
    SuperBlockMeta& m = meta_[ad.sb];
    m.use = Use::active_data;
    m.owner.assign(layout_.rows, kUnmapped);
    m.data_cursor = 0;
    m.valid_pages = 0;
  }

  SuperBlockMeta& m = meta_[ad.sb];
  const std::uint32_t row = m.data_cursor++;
  const std::uint64_t sppn = ad.sb * layout_.rows + row;
  unmap(slpn);
  map_[slpn] = sppn;
  m.owner[row] = slpn;
  ++m.live_rows;
  m.valid_pages += layout_.slots;
  m.last_modified = engine_.now();
  if (from_gc) {
    gc_current_.migrated_pages += layout_.slots;
    gc_stats_.migrated_pages += layout_.slots;
  }
  submit_row_programs(ad.sb, row, full_mask(layout_.slots), std::move(data),
                      [cb = std::move(cb), sppn] {
                        if (cb) {
                          cb(sppn);
                        }
                      });
  return sppn;
}

void Ftl::submit_row_programs(std::uint64_t sb, std::uint32_t row,
                              std::uint64_t slot_mask,
                              std::vector<std::byte> data,
                              std::function<void()> done) {
  engine_.schedule_after(
      cfg_.fil_latency,
      [this, sb, row, slot_mask, data = std::move(data),
       done = std::move(done)]() mutable {
        auto remaining = std::make_shared<std::uint32_t>(
            static_cast<std::uint32_t>(std::popcount(slot_mask)));
        auto shared_done =
            std::make_shared<std::function<void()>>(std::move(done));
        auto buf = std::make_shared<std::vector<std::byte>>(std::move(data));
        const std::uint32_t page = layout_.geo.page_bytes;
        for (std::uint32_t slot = 0; slot < layout_.slots; ++slot) {
          if (!(slot_mask >> slot & 1)) {
            continue;
          }
          std::span<const std::byte> payload;
          if (!buf->empty()) {
            payload = std::span<const std::byte>(*buf).subspan(
                std::size_t{slot} * page, page);
          }
          const flash::Fault f = backend_.submit_program(
              layout_.address_of(sb, row, slot), payload,
              [remaining, shared_done, buf](const flash::Transaction&) {
                if (--*remaining == 0) {
                  (*shared_done)();
                }
              });
          sim_check(f == flash::Fault::none,
                    "internal program fault: ", flash::fault_name(f));
        }
      });
}

void Ftl::read(std::uint64_t slpn, std::uint64_t slot_mask, ReadCb cb) {
  check_slpn(slpn);
  ++reads_;
  engine_.schedule_after(
      cfg_.op_latency + cfg_.fil_latency,
      [this, slpn, slot_mask, cb = std::move(cb)]() mutable {
        auto t = translate_read(slpn);
        if (!t) {
          // Trimmed while this read was queued: zero-fill.
          cb({});
          return;
        }
        const std::uint32_t page = layout_.geo.page_bytes;
        auto line = std::make_shared<std::vector<std::byte>>();
        auto remaining = std::make_shared<std::uint32_t>(
            static_cast<std::uint32_t>(std::popcount(slot_mask)));
        auto shared_cb = std::make_shared<ReadCb>(std::move(cb));
        if (*remaining == 0) {
          (*shared_cb)({});
          return;
        }
        for (std::uint32_t slot = 0; slot < layout_.slots; ++slot) {
          if (!(slot_mask >> slot & 1)) {
            continue;
          }
          const flash::Address addr = slot_address(*t, slot);
          const flash::Fault f = backend_.submit_read(
              addr, [this, slot, page, line, remaining, shared_cb](
                        const flash::Transaction&, std::vector<std::byte> data) {
                if (!data.empty()) {
                  if (line->empty()) {
                    line->assign(layout_.superpage_bytes(), std::byte{0});
                  }
                  std::copy(data.begin(), data.end(),
                            line->begin() + std::size_t{slot} * page);
                }
                if (--*remaining == 0) {
                  (*shared_cb)(std::move(*line));
                }
              });
          sim_check(f == flash::Fault::none,
                    "internal read fault: ", flash::fault_name(f));
        }
      });
}

void Ftl::write_partial(std::uint64_t slpn, std::uint64_t dirty_mask,
                        std::vector<std::byte> data, WriteCb cb) {
  check_slpn(slpn);
  const std::uint64_t all = full_mask(layout_.slots);
  sim_check((dirty_mask & ~all) == 0 && dirty_mask != 0,
            "bad dirty mask for partial write");
  if (dirty_mask == all) {
    write(slpn, std::move(data), std::move(cb));
    return;
  }
  if (cfg_.mapping == MappingMode::block || cfg_.mapping == MappingMode::page) {
    fallback_rewrite(slpn, dirty_mask, std::move(data), std::move(cb));
    return;
  }
  if (map_[slpn] == kUnmapped) {
    // Never-written super-page: clean slots are zero-fill, so a plain
    // full write is both correct and cheapest.
    write(slpn, std::move(data), std::move(cb));
    return;
  }
  ++host_writes_;
  const std::uint32_t dirty_count =
      static_cast<std::uint32_t>(std::popcount(dirty_mask));
  std::uint32_t existing = 0;
  if (auto it = exceptions_.find(slpn); it != exceptions_.end()) {
    std::uint64_t existing_mask = 0;
    for (const auto& [slot, loc] : it->second) {
      existing_mask |= std::uint64_t{1} << slot;
    }
    existing = static_cast<std::uint32_t>(
        std::popcount(existing_mask | dirty_mask));
  } else {
    existing = dirty_count;
  }
  if (!cfg_.partial_remap || existing > cfg_.exception_cap) {
    fallback_rewrite(slpn, dirty_mask, std::move(data), std::move(cb));
    return;
  }
  engine_.schedule_after(cfg_.op_latency,
                         [this, slpn, dirty_mask, data = std::move(data),
                          cb = std::move(cb)]() mutable {
                           maybe_gc([this, slpn, dirty_mask,
                                     data = std::move(data),
                                     cb = std::move(cb)]() mutable {
                             do_write_partial(slpn, dirty_mask,
                                              std::move(data), std::move(cb));
                           });
                         });
}

void Ftl::do_write_partial(std::uint64_t slpn, std::uint64_t dirty_mask,
                           std::vector<std::byte> data, WriteCb cb) {
  if (map_[slpn] == kUnmapped) {
    // Invalidated while queued behind GC.
    do_write(slpn, std::move(data), std::move(cb), false);
    return;
  }
  const std::uint64_t base_sppn = map_[slpn];
  const std::uint32_t g = layout_.group_of_sb(base_sppn / layout_.rows);
  // At most one exception block gets allocated per call; bail out to the
  // read-modify-write fallback when the group's pool cannot supply it,
  // or when exception blocks already hold their capacity budget (a
  // sustained sub-super-page write storm self-cleans through RMW).
  {
    const ActiveRef& ae = active_ex_[g];
    bool need_alloc = !ae.valid;
    if (ae.valid) {
      for (std::uint32_t slot = 0; slot < layout_.slots && !need_alloc;
           ++slot) {
        if ((dirty_mask >> slot & 1) &&
            meta_[ae.sb].ex_cursor[slot] >= layout_.rows) {
          need_alloc = true;
        }
      }
    }
    if (need_alloc) {
      std::uint64_t ex_blocks = 0;
      for (const auto& m : meta_) {
        ex_blocks += m.use == Use::ex || m.use == Use::active_ex;
      }
      const std::uint64_t budget = std::max<std::uint64_t>(
          2, static_cast<std::uint64_t>(
                 static_cast<double>(layout_.superblocks()) *
                 cfg_.exception_block_fraction));
      if (ex_blocks + 1 > budget || free_lists_[g].empty()) {
        fallback_rewrite(slpn, dirty_mask, std::move(data), std::move(cb));
        return;
      }
    }
  }
  auto& exlist = exceptions_[slpn];
  SuperBlockMeta& base = meta_[base_sppn / layout_.rows];

  struct Target {
    std::uint32_t slot;
    std::uint64_t sb;
    std::uint32_t page;
  };
  std::vector<Target> targets;
  for (std::uint32_t slot = 0; slot < layout_.slots; ++slot) {
    if (!(dirty_mask >> slot & 1)) {
      continue;
    }
    ActiveRef& ae = active_ex_[g];
    if (!ae.valid || meta_[ae.sb].ex_cursor[slot] >= layout_.rows) {
      if (ae.valid) {
        meta_[ae.sb].use = Use::ex;
      }
      ae.sb = allocate_free_block(g);
      ae.valid = true;
      SuperBlockMeta& em = meta_[ae.sb];
      em.use = Use::active_ex;
      em.ex_cursor.assign(layout_.slots, 0);
      em.ex_owner.assign(std::size_t{layout_.slots} * layout_.rows, kUnmapped);
      em.valid_pages = 0;
    }
    SuperBlockMeta& em = meta_[ae.sb];
    const std::uint32_t page = em.ex_cursor[slot]++;

    // Retire the slot's previous location: either an older exception or
    // the base page, which goes stale now.
    bool had_exception = false;
    for (auto& [s, loc] : exlist) {
      if (s == slot) {
        SuperBlockMeta& old_em = meta_[loc.first];
        const std::size_t idx = std::size_t{s} * layout_.rows + loc.second;
        if (old_em.ex_owner[idx] == slpn) {
          old_em.ex_owner[idx] = kUnmapped;
          --old_em.valid_pages;
        }
        loc = {ae.sb, page};
        had_exception = true;
        break;
      }
    }
    if (!had_exception) {
      exlist.emplace_back(slot, std::make_pair(ae.sb, page));
      --base.valid_pages;
    }
    em.ex_owner[std::size_t{slot} * layout_.rows + page] = slpn;
    ++em.valid_pages;
    em.last_modified = engine_.now();
    targets.push_back(Target{slot, ae.sb, page});
  }
  std::sort(exlist.begin(), exlist.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  engine_.schedule_after(
      cfg_.fil_latency,
      [this, targets = std::move(targets), data = std::move(data),
       cb = std::move(cb), sppn = base_sppn]() mutable {
        auto remaining =
            std::make_shared<std::uint32_t>(static_cast<std::uint32_t>(targets.size()));
        auto shared_cb = std::make_shared<WriteCb>(std::move(cb));
        auto buf = std::make_shared<std::vector<std::byte>>(std::move(data));
        const std::uint32_t page_bytes = layout_.geo.page_bytes;
        for (const Target& t : targets) {
          std::span<const std::byte> payload;
          if (!buf->empty()) {
            payload = std::span<const std::byte>(*buf).subspan(
                std::size_t{t.slot} * page_bytes, page_bytes);
          }
          const flash::Fault f = backend_.submit_program(
              layout_.address_of(t.sb, t.page, t.slot), payload,
              [remaining, shared_cb, buf, sppn](const flash::Transaction&) {
                if (--*remaining == 0 && *shared_cb) {
                  (*shared_cb)(sppn);
                }
              });
          sim_check(f == flash::Fault::none,
                    "exception program fault: ", flash::fault_name(f));
        }
      });
}

void Ftl::fallback_rewrite(std::uint64_t slpn, std::uint64_t dirty_mask,
                           std::vector<std::byte> data, WriteCb cb) {
  const std::uint64_t all = full_mask(layout_.slots);
  const std::uint64_t clean = all & ~dirty_mask;
  const bool mapped = translate_read(slpn).has_value();
  if (!mapped || clean == 0) {
    write(slpn, std::move(data), std::move(cb));
    return;
  }
  read(slpn, clean,
       [this, slpn, dirty_mask, data = std::move(data), cb = std::move(cb)](
           std::vector<std::byte> line) mutable {
         if (!line.empty() && !data.empty()) {
           const std::uint32_t page = layout_.geo.page_bytes;
           for (std::uint32_t slot = 0; slot < layout_.slots; ++slot) {
             if (dirty_mask >> slot & 1) {
               std::copy(data.begin() + std::size_t{slot} * page,
                         data.begin() + std::size_t{slot + 1} * page,
                         line.begin() + std::size_t{slot} * page);
             }
           }
         } else if (line.empty()) {
           line = std::move(data);
         }
         write(slpn, std::move(line), std::move(cb));
       });
}

void Ftl::invalidate(std::uint64_t slpn) {
  check_slpn(slpn);
  if (cfg_.mapping == MappingMode::block) {
    unmap(slpn);
    return;
  }
  if (map_[slpn] == kUnmapped) {
    return;
  }
  unmap(slpn);
}

std::vector<VictimView> Ftl::victim_views() const {
  std::vector<VictimView> views;
  views.reserve(meta_.size());
  const std::uint64_t capacity = std::uint64_t{layout_.rows} * layout_.slots;
  for (std::uint64_t sb = 0; sb < meta_.size(); ++sb) {
    const SuperBlockMeta& m = meta_[sb];
    if (m.use != Use::data && m.use != Use::ex) {
      continue;
    }
    // Classic greedy bookkeeping: live page references held by this
    // block. A block with zero dead references is pure churn; skip it.
    if (m.valid_pages >= capacity) {
      continue;
    }
    // Folding an exception block rewrites one whole super-page per live
    // entry; past rows-per-block entries that consumes more than the
    // erase frees, so such blocks wait until their entries decay.
    if (m.use == Use::ex && m.valid_pages * layout_.slots >= capacity) {
      continue;
    }
    views.push_back(VictimView{sb, m.valid_pages, capacity, m.erase_count,
                               m.last_modified});
  }
  return views;
}

std::optional<std::uint64_t> Ftl::select_greedy(
    std::span<const VictimView> views) {
  std::optional<std::uint64_t> best;
  const VictimView* bv = nullptr;
  for (const auto& v : views) {
    if (!bv || v.valid_pages < bv->valid_pages ||
        (v.valid_pages == bv->valid_pages &&
         (v.erase_count < bv->erase_count ||
          (v.erase_count == bv->erase_count && v.id < bv->id)))) {
      bv = &v;
      best = v.id;
    }
  }
  return best;
}

std::optional<std::uint64_t> Ftl::select_costbenefit(
    std::span<const VictimView> views, SimTime now) {
  // Kawaguchi cost-benefit: score = age * (1 - u) / (2u); u = 0 blocks
  // are free wins and are taken first.
  std::optional<std::uint64_t> best;
  const VictimView* bv = nullptr;
  double best_score = -1.0;
  auto better_tie = [](const VictimView& a, const VictimView& b) {
    return a.erase_count < b.erase_count ||
           (a.erase_count == b.erase_count && a.id < b.id);
  };
  for (const auto& v : views) {
    if (v.valid_pages == 0) {
      if (!bv || bv->valid_pages != 0 || better_tie(v, *bv)) {
        bv = &v;
        best = v.id;
        best_score = -1.0;
      }
      continue;
    }
    if (bv && bv->valid_pages == 0) {
      continue;
    }
    const double u = static_cast<double>(v.valid_pages) /
                     static_cast<double>(v.capacity_pages);
    const double age = static_cast<double>(now - v.last_modified);
    const double score = age * (1.0 - u) / (2.0 * u);
    if (!bv || score > best_score ||
        (score == best_score && better_tie(v, *bv))) {
      bv = &v;
      best = v.id;
      best_score = score;
    }
  }
  return best;
}

std::optional<std::uint64_t> Ftl::select_victim_greedy() const {
  auto views = victim_views();
  return select_greedy(views);
}

std::optional<std::uint64_t> Ftl::select_victim_costbenefit() const {
  auto views = victim_views();
  return select_costbenefit(views, engine_.now());
}

void Ftl::collect(GcCb cb) {
  collect_impl(~std::size_t{0}, true, std::move(cb));
}

void Ftl::collect_n(std::size_t max_victims, GcCb cb) {
  collect_impl(max_victims, false, std::move(cb));
}

void Ftl::collect_impl(std::size_t max_victims, bool use_threshold, GcCb cb) {
  sim_check(!gc_active_, "nested garbage collection");
  gc_active_ = true;
  gc_started_ = engine_.now();
  gc_current_ = GcReport{};
  ++gc_stats_.invocations;
  gc_step(max_victims, use_threshold, [this, cb = std::move(cb)] {
    gc_current_.stall_time = engine_.now() - gc_started_;
    gc_stats_.stall_total += gc_current_.stall_time;
    gc_active_ = false;
    const GcReport report = gc_current_;
    // Writers queued behind this collection resume in arrival order,
    // re-checking the trigger so a long backlog cannot drain the pool
    // past the reserve.
    while (!gc_waiters_.empty()) {
      auto k = std::move(gc_waiters_.front());
      gc_waiters_.pop_front();
      engine_.schedule_after(0, [this, k = std::move(k)]() mutable {
        maybe_gc(std::move(k));
      });
    }
    if (cb) {
      cb(report);
    }
  });
}

void Ftl::gc_step(std::size_t remaining, bool use_threshold,
                  std::function<void()> done) {
  if (use_threshold && free_fraction() >= cfg_.gc_stop) {
    done();
    return;
  }
  if (remaining == 0) {
    done();
    return;
  }
  auto victim = cfg_.policy == GcPolicy::greedy ? select_victim_greedy()
                                                : select_victim_costbenefit();
  if (!victim) {
    // No net-profitable victim right now. That is only fatal when the
    // pool is exhausted and writers are stuck behind this collection.
    if (free_count_ == 0 && !gc_waiters_.empty()) {
      sim_fault("GC cannot reclaim: valid data exceeds usable capacity");
    }
    done();
    return;
  }
  migrate_victim(*victim, [this, remaining, use_threshold,
                           done = std::move(done)]() mutable {
    gc_step(remaining - 1, use_threshold, std::move(done));
  });
}

void Ftl::migrate_victim(std::uint64_t sb, std::function<void()> done) {
  SuperBlockMeta& m = meta_[sb];
  std::vector<std::uint64_t> slpns;
  if (m.use == Use::data) {
    for (std::uint32_t row = 0; row < m.data_cursor; ++row) {
      if (m.owner[row] != kUnmapped) {
        slpns.push_back(m.owner[row]);
      }
    }
  } else {
    // Exception block: fold each owning super-page flat exactly once.
    for (std::uint32_t slot = 0; slot < layout_.slots; ++slot) {
      for (std::uint32_t pg = 0; pg < layout_.rows; ++pg) {
        const std::uint64_t owner =
            m.ex_owner[std::size_t{slot} * layout_.rows + pg];
        if (owner != kUnmapped &&
            std::find(slpns.begin(), slpns.end(), owner) == slpns.end()) {
          slpns.push_back(owner);
        }
      }
    }
  }
  migrate_rows(sb, std::move(slpns), 0, std::move(done));
}

void Ftl::migrate_rows(std::uint64_t sb, std::vector<std::uint64_t> slpns,
                       std::size_t idx, std::function<void()> done) {
  if (idx == slpns.size()) {
    erase_superblock(sb, std::move(done));
    return;
  }
  const std::uint64_t slpn = slpns[idx];
  // Revalidate: a TRIM or a queued host write may have detached this
  // super-page from the victim since the list was built.
  bool still_here = false;
  if (cfg_.mapping == MappingMode::block) {
    still_here = map_[slpn / layout_.rows] == sb;
  } else if (map_[slpn] != kUnmapped) {
    if (map_[slpn] / layout_.rows == sb) {
      still_here = true;
    } else if (auto it = exceptions_.find(slpn); it != exceptions_.end()) {
      for (const auto& [slot, loc] : it->second) {
        if (loc.first == sb) {
          still_here = true;
          break;
        }
      }
    }
  }
  if (!still_here) {
    migrate_rows(sb, std::move(slpns), idx + 1, std::move(done));
    return;
  }
  if (cfg_.mapping == MappingMode::block) {
    merge_block(slpn / layout_.rows, kNoRow, {},
                [this, sb, slpns = std::move(slpns), idx,
                 done = std::move(done)](std::uint64_t) mutable {
                  migrate_rows(sb, std::move(slpns), idx + 1, std::move(done));
                });
    return;
  }
  read(slpn, full_mask(layout_.slots),
       [this, sb, slpn, slpns = std::move(slpns), idx,
        done = std::move(done)](std::vector<std::byte> line) mutable {
         do_write(slpn, std::move(line),
                  [this, sb, slpns = std::move(slpns), idx,
                   done = std::move(done)](std::uint64_t) mutable {
                    migrate_rows(sb, std::move(slpns), idx + 1,
                                 std::move(done));
                  },
                  true);
       });
}

void Ftl::erase_superblock(std::uint64_t sb, std::function<void()> done) {
  auto remaining = std::make_shared<std::uint32_t>(layout_.slots);
  auto shared_done = std::make_shared<std::function<void()>>(
      [this, sb, done = std::move(done)]() mutable {
        SuperBlockMeta& m = meta_[sb];
        ++m.erase_count;
        m.use = Use::free;
        m.valid_pages = 0;
        m.live_rows = 0;
        m.data_cursor = 0;
        m.owner.clear();
        m.ex_cursor.clear();
        m.ex_owner.clear();
        free_lists_[layout_.group_of_sb(sb)].push_back(sb);
        ++free_count_;
        ++gc_current_.erased_blocks;
        ++gc_stats_.erased_superblocks;
        done();
      });
  for (std::uint32_t slot = 0; slot < layout_.slots; ++slot) {
    const flash::Fault f = backend_.submit_erase(
        layout_.address_of(sb, 0, slot),
        [remaining, shared_done](const flash::Transaction&) {
          if (--*remaining == 0) {
            (*shared_done)();
          }
        });
    sim_check(f == flash::Fault::none, "erase fault: ", flash::fault_name(f));
  }
}

void Ftl::merge_block(std::uint64_t lbn, std::uint32_t new_row,
                      std::vector<std::byte> new_data, WriteCb cb) {
  const std::uint64_t old_sb = map_[lbn];
  sim_check(old_sb != kUnmapped, "merge of unmapped block");
  SuperBlockMeta& old_m = meta_[old_sb];
  // Pin the source block out of victim selection until the copy ends.
  old_m.use = Use::active_data;
  const std::uint32_t rows = old_m.data_cursor;

  const std::uint32_t g0 = static_cast<std::uint32_t>(lbn % layout_.groups);
  std::uint32_t g = g0;
  for (std::uint32_t i = 0; i < layout_.groups; ++i) {
    g = (g0 + i) % layout_.groups;
    if (!free_lists_[g].empty()) {
      break;
    }
  }
  const std::uint64_t new_sb = allocate_free_block(g);
  SuperBlockMeta& new_m = meta_[new_sb];
  new_m.use = Use::data;
  new_m.owner.assign(layout_.rows, kUnmapped);
  new_m.data_cursor = rows;
  new_m.last_modified = engine_.now();
  std::uint64_t moved = 0;
  new_m.live_rows = 0;
  for (std::uint32_t r = 0; r < rows; ++r) {
    new_m.owner[r] = old_m.owner[r];
    if (new_m.owner[r] != kUnmapped) {
      moved += layout_.slots;
      ++new_m.live_rows;
    }
  }
  if (new_row != kNoRow) {
    if (new_m.owner[new_row] == kUnmapped) {
      moved += layout_.slots;
      ++new_m.live_rows;
    }
    new_m.owner[new_row] = lbn * layout_.rows + new_row;
  }
  new_m.valid_pages = moved;
  old_m.valid_pages = 0;
  old_m.live_rows = 0;
  std::fill(old_m.owner.begin(), old_m.owner.end(), kUnmapped);
  map_[lbn] = new_sb;

  // Copy rows in order; live rows are read from the old block, dead or
  // gap rows are programmed as zero-fill to keep the cursor dense.
  auto ctx = std::make_shared<MergeCtx>(MergeCtx{
      old_sb, new_sb, rows, new_row, std::move(new_data), std::move(cb)});
  copy_merge_row(ctx, 0);
}

void Ftl::copy_merge_row(std::shared_ptr<MergeCtx> ctx, std::uint32_t r) {
  if (r == ctx->rows) {
    // Unpin: the drained source block is a pure-garbage victim now.
    meta_[ctx->old_sb].use = Use::data;
    if (ctx->cb) {
      ctx->cb(ctx->new_sb * layout_.rows +
              (ctx->new_row == kNoRow ? 0 : ctx->new_row));
    }
    return;
  }
  const std::uint64_t mask = full_mask(layout_.slots);
  auto next = [this, ctx, r] { copy_merge_row(ctx, r + 1); };
  if (r == ctx->new_row) {
    submit_row_programs(ctx->new_sb, r, mask, std::move(ctx->new_data),
                        std::move(next));
    return;
  }
  const std::uint64_t owner = meta_[ctx->new_sb].owner[r];
  if (owner == kUnmapped) {
    std::vector<std::byte> zeros;
    submit_row_programs(ctx->new_sb, r, mask, std::move(zeros),
                        std::move(next));
    return;
  }
  // Read the old location directly: the map already points at the new
  // block, so resolve against the old one by coordinates.
  const std::uint32_t page = layout_.geo.page_bytes;
  auto line = std::make_shared<std::vector<std::byte>>();
  auto remaining = std::make_shared<std::uint32_t>(layout_.slots);
  auto fin = std::make_shared<std::function<void()>>(
      [this, ctx, r, line, next = std::move(next)]() mutable {
        submit_row_programs(ctx->new_sb, r, full_mask(layout_.slots),
                            std::move(*line), std::move(next));
      });
  for (std::uint32_t slot = 0; slot < layout_.slots; ++slot) {
    const flash::Fault f = backend_.submit_read(
        layout_.address_of(ctx->old_sb, r, slot),
        [this, slot, page, line, remaining, fin](const flash::Transaction&,
                                                 std::vector<std::byte> data) {
          if (!data.empty()) {
            if (line->empty()) {
              line->assign(layout_.superpage_bytes(), std::byte{0});
            }
            std::copy(data.begin(), data.end(),
                      line->begin() + std::size_t{slot} * page);
          }
          if (--*remaining == 0) {
            (*fin)();
          }
        });
    sim_check(f == flash::Fault::none,
              "merge read fault: ", flash::fault_name(f));
  }
}

void Ftl::on_idle() {
  if (!cfg_.background_gc || gc_active_ ||
      free_fraction() >= cfg_.gc_stop) {
    return;
  }
  collect_n(1, nullptr);
}

}  // namespace vssd::ftl
