#include "vssd/icl/icl.hh"

#include <algorithm>
#include <bit>
#include <memory>

#include "vssd/util/fault.hh"

namespace vssd::icl {

Icl::Icl(sim::Engine& engine, dram::Dram& dram, ftl::Ftl& ftl,
         const Config& cfg)
    : engine_(engine),
      dram_(dram),
      ftl_(ftl),
      cfg_(cfg),
      content_(cfg.content),
      rng_(cfg.rng_seed) {
  std::uint64_t capacity = cfg_.capacity_lines;
  if (capacity == 0) {
    capacity = static_cast<std::uint64_t>(
        static_cast<double>(dram_.config().size_bytes) *
        cfg_.dram_budget_fraction / static_cast<double>(line_bytes()));
  }
  sim_check(capacity >= 1, "DRAM too small for a single cache line");
  switch (cfg_.mode) {
    case CacheMode::fully_associative:
      sets_count_ = 1;
      ways_count_ = static_cast<std::uint32_t>(capacity);
      break;
    case CacheMode::direct_map:
      sets_count_ = capacity;
      ways_count_ = 1;
      break;
    case CacheMode::set_associative:
      sets_count_ = cfg_.sets ? cfg_.sets : 1;
      ways_count_ = cfg_.ways ? cfg_.ways : 1;
      sim_check(std::uint64_t{sets_count_} * ways_count_ <= capacity,
                "sets*ways exceeds the cache capacity budget");
      break;
  }
  lines_.resize(sets_count_ * ways_count_);
  set_waiters_.resize(sets_count_);
  streams_.resize(std::max<std::uint32_t>(1, cfg_.stream_slots));
  if (cfg_.readahead_degree == 0) {
    cfg_.readahead_degree = ftl_.layout().geo.channels;
  }
}

std::uint64_t Icl::dram_addr_of(const Line& line) const {
  const std::uint64_t idx = static_cast<std::uint64_t>(&line - lines_.data());
  return idx * line_bytes() % dram_.config().size_bytes;
}

Icl::Line* Icl::find(std::uint64_t slpn) {
  const std::uint64_t set = set_of(slpn);
  Line* base = lines_.data() + set * ways_count_;
  for (std::uint32_t w = 0; w < ways_count_; ++w) {
    Line& l = base[w];
    if (l.state != LineState::empty && l.slpn == slpn) {
      return &l;
    }
  }
  return nullptr;
}

Icl::Line* Icl::pick_allocatable(std::uint64_t set, bool allow_evict) {
  Line* base = lines_.data() + set * ways_count_;
  for (std::uint32_t w = 0; w < ways_count_; ++w) {
    if (base[w].state == LineState::empty) {
      return &base[w];
    }
  }
  // No empty way: pick a clean ready victim (or a dirty one when the
  // caller is willing to start an eviction).
  Line* clean = nullptr;
  Line* any = nullptr;
  if (cfg_.replacement == Replacement::lru) {
    for (std::uint32_t w = 0; w < ways_count_; ++w) {
      Line& l = base[w];
      if (l.state != LineState::ready) {
        continue;
      }
      if (l.dirty_mask == 0 && (!clean || l.stamp < clean->stamp)) {
        clean = &l;
      }
      if (!any || l.stamp < any->stamp) {
        any = &l;
      }
    }
  } else {
    std::vector<Line*> ready;
    for (std::uint32_t w = 0; w < ways_count_; ++w) {
      if (base[w].state == LineState::ready) {
        ready.push_back(&base[w]);
      }
    }
    if (!ready.empty()) {
      any = ready[rng_() % ready.size()];
      std::vector<Line*> clean_ready;
      for (Line* l : ready) {
        if (l->dirty_mask == 0) {
          clean_ready.push_back(l);
        }
      }
      if (!clean_ready.empty()) {
        clean = any->dirty_mask == 0 ? any : clean_ready[0];
      }
    }
  }
  if (clean) {
    return clean;
  }
  return allow_evict ? any : nullptr;
}

void Icl::reset_line(Line& line, std::uint64_t slpn) {
  line.state = LineState::ready;
  line.slpn = slpn;
  line.valid_mask = 0;
  line.dirty_mask = 0;
  line.stamp = stamp_counter_++;
  if (content_) {
    line.data.assign(line_bytes(), std::byte{0});
  }
}

void Icl::wake_set(std::uint64_t set) {
  auto& q = set_waiters_[set];
  while (!q.empty()) {
    auto k = std::move(q.front());
    q.pop_front();
    engine_.schedule_after(0, std::move(k));
  }
}

void Icl::read(std::uint64_t lpn, std::uint32_t count, ReadCb cb) {
  sim_check(count >= 1, "zero-length read");
  sim_check(lpn / slots_per_line() == (lpn + count - 1) / slots_per_line(),
            "icl read crosses a super-page boundary");
  sim_check(lpn + count <= logical_pages(), "read beyond logical capacity");
  ++stats_.reads;
  engine_.schedule_after(cfg_.entry_latency,
                         [this, lpn, count, cb = std::move(cb)]() mutable {
                           read_attempt(lpn, count, std::move(cb), true);
                         });
}

void Icl::read_attempt(std::uint64_t lpn, std::uint32_t count, ReadCb cb,
                       bool first) {
  if (!cfg_.enabled) {
    read_bypass(lpn, count, std::move(cb));
    return;
  }
  const std::uint64_t slpn = lpn / slots_per_line();
  const std::uint32_t start = static_cast<std::uint32_t>(lpn % slots_per_line());
  const std::uint64_t mask =
      (count >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << count) - 1))
      << start;

  if (first) {
    touch_stream(lpn, count);
  }

  Line* line = find(slpn);
  if (line && line->state == LineState::filling) {
    // A fill (demand or prefetch) is already on the way; piggyback.
    if (first) {
      ++stats_.read_hits;
    }
    line->fill_waiters.push_back([this, lpn, count, cb = std::move(cb)]() mutable {
      read_attempt(lpn, count, std::move(cb), false);
    });
    if (first) {
      maybe_prefetch(slpn);
    }
    return;
  }
  if (line && (line->valid_mask & mask) == mask) {
    serve_read(*line, lpn, count, std::move(cb));
    if (first) {
      ++stats_.read_hits;
      maybe_prefetch(slpn);
    }
    return;
  }

  if (first) {
    ++stats_.read_misses;
  }
  if (line && line->state == LineState::ready) {
    // Present but missing slots: fill the gaps.
    fill_line(*line, [this, lpn, count, cb = std::move(cb)]() mutable {
      read_attempt(lpn, count, std::move(cb), false);
    });
    if (first) {
      maybe_prefetch(slpn);
    }
    return;
  }
  if (line && line->state == LineState::evicting) {
    // Content is still valid while the write-out drains, but the mask
    // did not cover the request; wait for the eviction to settle.
    line->evict_waiters.push_back(
        [this, lpn, count, cb = std::move(cb)]() mutable {
          read_attempt(lpn, count, std::move(cb), false);
        });
    return;
  }

  Line* victim = pick_allocatable(set_of(slpn), true);
  if (!victim) {
    set_waiters_[set_of(slpn)].push_back(
        [this, lpn, count, cb = std::move(cb)]() mutable {
          read_attempt(lpn, count, std::move(cb), false);
        });
    return;
  }
  if (victim->dirty_mask != 0) {
    start_evict(*victim, [] {});
    set_waiters_[set_of(slpn)].push_back(
        [this, lpn, count, cb = std::move(cb)]() mutable {
          read_attempt(lpn, count, std::move(cb), false);
        });
    return;
  }
  reset_line(*victim, slpn);
  fill_line(*victim, [this, lpn, count, cb = std::move(cb)]() mutable {
    read_attempt(lpn, count, std::move(cb), false);
  });
  if (first) {
    maybe_prefetch(slpn);
  }
}

void Icl::serve_read(Line& line, std::uint64_t lpn, std::uint32_t count,
                     ReadCb cb) {
  const std::uint32_t start = static_cast<std::uint32_t>(lpn % slots_per_line());
  const std::uint32_t page = ftl_.layout().geo.page_bytes;
  line.stamp = stamp_counter_++;
  const SimTime done = dram_.access(dram_addr_of(line) + std::uint64_t{start} * page,
                                    std::uint64_t{count} * page, false,
                                    engine_.now());
  std::vector<std::byte> out;
  if (content_) {
    out.assign(line.data.begin() + std::size_t{start} * page,
               line.data.begin() + std::size_t{start + count} * page);
  }
  engine_.schedule_at(done, [cb = std::move(cb), out = std::move(out)]() mutable {
    cb(std::move(out));
  });
}

void Icl::fill_line(Line& line, DoneCb on_ready) {
  const std::uint64_t need = full_mask() & ~line.valid_mask;
  const std::uint64_t slpn = line.slpn;
  line.state = LineState::filling;
  line.fill_waiters.push_back(std::move(on_ready));
  ++stats_.fills;
  auto install = [this, &line](std::vector<std::byte> buf,
                               std::uint64_t filled_mask) {
    const std::uint32_t page = ftl_.layout().geo.page_bytes;
    if (content_ && !buf.empty()) {
      for (std::uint32_t slot = 0; slot < slots_per_line(); ++slot) {
        if (filled_mask >> slot & 1) {
          std::copy(buf.begin() + std::size_t{slot} * page,
                    buf.begin() + std::size_t{slot + 1} * page,
                    line.data.begin() + std::size_t{slot} * page);
        }
      }
    }
      line.valid_mask = full_mask();
    const SimTime done = dram_.access(
        dram_addr_of(line),
        static_cast<std::uint64_t>(std::popcount(filled_mask)) *
            ftl_.layout().geo.page_bytes,
        true, engine_.now());
    engine_.schedule_at(done, [this, &line] {
      line.state = LineState::ready;
      line.stamp = stamp_counter_++;
      auto waiters = std::move(line.fill_waiters);
      line.fill_waiters.clear();
      for (auto& w : waiters) {
        engine_.schedule_after(0, std::move(w));
      }
      wake_set(set_of(line.slpn));
    });
  };
  if (ftl_.translate_read(slpn).has_value()) {
    ftl_.read(slpn, need,
              [install, need](std::vector<std::byte> buf) mutable {
                install(std::move(buf), need);
              });
  } else {
    // Never-written super-page: zero-fill without touching flash.
    std::vector<std::byte> zeros;
    install(std::move(zeros), need);
  }
}

void Icl::write(std::uint64_t lpn, std::uint32_t count,
                std::vector<std::byte> data, DoneCb cb) {
  sim_check(count >= 1, "zero-length write");
  sim_check(lpn / slots_per_line() == (lpn + count - 1) / slots_per_line(),
            "icl write crosses a super-page boundary");
  sim_check(lpn + count <= logical_pages(), "write beyond logical capacity");
  ++stats_.writes;
  auto buf = std::make_shared<std::vector<std::byte>>(std::move(data));
  engine_.schedule_after(cfg_.entry_latency,
                         [this, lpn, count, buf, cb = std::move(cb)]() mutable {
                           write_attempt(lpn, count, buf, std::move(cb), true);
                         });
}

void Icl::write_attempt(std::uint64_t lpn, std::uint32_t count,
                        std::shared_ptr<std::vector<std::byte>> data,
                        DoneCb cb, bool /*first*/) {
  if (!cfg_.enabled) {
    write_bypass(lpn, count, std::move(data), std::move(cb));
    return;
  }
  const std::uint64_t slpn = lpn / slots_per_line();
  const std::uint32_t start = static_cast<std::uint32_t>(lpn % slots_per_line());
  const std::uint64_t mask =
      (count >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << count) - 1))
      << start;

  Line* line = find(slpn);
  if (line && line->state == LineState::filling) {
    line->fill_waiters.push_back(
        [this, lpn, count, data, cb = std::move(cb)]() mutable {
          write_attempt(lpn, count, std::move(data), std::move(cb), false);
        });
    return;
  }
  if (line && line->state == LineState::evicting) {
    line->evict_waiters.push_back(
        [this, lpn, count, data, cb = std::move(cb)]() mutable {
          write_attempt(lpn, count, std::move(data), std::move(cb), false);
        });
    return;
  }
  if (!line) {
    Line* victim = pick_allocatable(set_of(slpn), true);
    if (!victim) {
      set_waiters_[set_of(slpn)].push_back(
          [this, lpn, count, data, cb = std::move(cb)]() mutable {
            write_attempt(lpn, count, std::move(data), std::move(cb), false);
          });
      return;
    }
    if (victim->dirty_mask != 0) {
      start_evict(*victim, [] {});
      set_waiters_[set_of(slpn)].push_back(
          [this, lpn, count, data, cb = std::move(cb)]() mutable {
            write_attempt(lpn, count, std::move(data), std::move(cb), false);
          });
      return;
    }
    reset_line(*victim, slpn);
    line = victim;
  }

  const std::uint32_t page = ftl_.layout().geo.page_bytes;
  if (content_ && !data->empty()) {
    std::copy(data->begin(), data->end(),
              line->data.begin() + std::size_t{start} * page);
  }
  line->valid_mask |= mask;
  line->dirty_mask |= mask;
  line->stamp = stamp_counter_++;
  const SimTime done =
      dram_.access(dram_addr_of(*line) + std::uint64_t{start} * page,
                   std::uint64_t{count} * page, true, engine_.now());
  Line* lp = line;
  engine_.schedule_at(done, [this, lp, cb = std::move(cb)]() mutable {
    // Write-back: acknowledged when staged in DRAM.
    cb();
    if (cfg_.write_through && lp->dirty_mask != 0 &&
        lp->state == LineState::ready) {
      start_evict(*lp, [] {});
    }
  });
}

void Icl::start_evict(Line& line, DoneCb done) {
  if (line.state == LineState::evicting) {
    line.evict_waiters.push_back(std::move(done));
    return;
  }
  sim_check(line.state == LineState::ready && line.dirty_mask != 0,
            "evicting a non-dirty line");
  const std::uint64_t snapshot = line.dirty_mask;
  line.state = LineState::evicting;
  line.evict_waiters.push_back(std::move(done));
  ++stats_.evictions;

  std::vector<std::byte> payload;
  if (content_) {
    payload = line.data;
  }
  auto finish = [this, &line, snapshot](std::uint64_t) {
    line.dirty_mask &= ~snapshot;
    line.state = LineState::ready;
    line.stamp = stamp_counter_++;
    auto waiters = std::move(line.evict_waiters);
    line.evict_waiters.clear();
    for (auto& w : waiters) {
      engine_.schedule_after(0, std::move(w));
    }
    wake_set(set_of(line.slpn));
  };
  if (snapshot == full_mask()) {
    ftl_.write(line.slpn, std::move(payload), finish);
  } else {
    ftl_.write_partial(line.slpn, snapshot, std::move(payload), finish);
  }
}

void Icl::flush_all(std::function<void(std::uint64_t)> cb) {
  ++stats_.flushes;
  auto count = std::make_shared<std::uint64_t>(0);
  auto remaining = std::make_shared<std::uint64_t>(1);
  auto fin = std::make_shared<std::function<void()>>(
      [cb = std::move(cb), count] { cb(*count); });
  auto join = [remaining, fin] {
    if (--*remaining == 0) {
      (*fin)();
    }
  };
  for (Line& line : lines_) {
    if (line.state == LineState::ready && line.dirty_mask != 0) {
      ++*count;
      ++*remaining;
      start_evict(line, join);
    } else if (line.state == LineState::evicting) {
      ++*remaining;
      line.evict_waiters.push_back(join);
    }
  }
  join();
}

void Icl::read_bypass(std::uint64_t lpn, std::uint32_t count, ReadCb cb) {
  const std::uint64_t slpn = lpn / slots_per_line();
  const std::uint32_t start = static_cast<std::uint32_t>(lpn % slots_per_line());
  const std::uint32_t page = ftl_.layout().geo.page_bytes;
  const std::uint64_t mask =
      (count >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << count) - 1))
      << start;
  auto deliver = [this, start, count, page,
                  cb = std::move(cb)](std::vector<std::byte> buf) mutable {
    const SimTime done = dram_.access(0, std::uint64_t{count} * page, true,
                                      engine_.now());
    std::vector<std::byte> out;
    if (content_) {
      out.assign(std::size_t{count} * page, std::byte{0});
      if (!buf.empty()) {
        std::copy(buf.begin() + std::size_t{start} * page,
                  buf.begin() + std::size_t{start + count} * page, out.begin());
      }
    }
    engine_.schedule_at(done,
                        [cb = std::move(cb), out = std::move(out)]() mutable {
                          cb(std::move(out));
                        });
  };
  if (ftl_.translate_read(slpn).has_value()) {
    ftl_.read(slpn, mask, std::move(deliver));
  } else {
    deliver({});
  }
}

void Icl::write_bypass(std::uint64_t lpn, std::uint32_t count,
                       std::shared_ptr<std::vector<std::byte>> data,
                       DoneCb cb) {
  const std::uint64_t slpn = lpn / slots_per_line();
  const std::uint32_t start = static_cast<std::uint32_t>(lpn % slots_per_line());
  const std::uint32_t page = ftl_.layout().geo.page_bytes;
  const std::uint64_t mask =
      (count >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << count) - 1))
      << start;
  const SimTime staged = dram_.access(0, std::uint64_t{count} * page, true,
                                      engine_.now());
  std::vector<std::byte> line;
  if (content_ && !data->empty()) {
    line.assign(line_bytes(), std::byte{0});
    std::copy(data->begin(), data->end(),
              line.begin() + std::size_t{start} * page);
  }
  engine_.schedule_at(
      staged, [this, slpn, mask, line = std::move(line),
               cb = std::move(cb)]() mutable {
        auto done = [cb = std::move(cb)](std::uint64_t) { cb(); };
        if (mask == full_mask()) {
          ftl_.write(slpn, std::move(line), std::move(done));
        } else {
          ftl_.write_partial(slpn, mask, std::move(line), std::move(done));
        }
      });
}

void Icl::touch_stream(std::uint64_t lpn, std::uint32_t count) {
  Stream* s = nullptr;
  for (Stream& cand : streams_) {
    // Contiguous continuation, or a sub-page repeat that ends exactly at
    // the stream tail (4KB accesses walking a 16KB page).
    if (cand.next_lpn == lpn || cand.next_lpn == lpn + count) {
      s = &cand;
      break;
    }
  }
  if (!s) {
    // Non-contiguous: recycle the coldest slot and restart its run.
    s = &streams_[0];
    for (Stream& cand : streams_) {
      if (cand.run < s->run) {
        s = &cand;
      }
    }
    s->run = 1;
    s->next_lpn = lpn + count;
    return;
  }
  ++s->run;
  s->next_lpn = std::max(s->next_lpn, lpn + count);
}

void Icl::maybe_prefetch(std::uint64_t slpn) {
  if (!cfg_.enabled || cfg_.readahead_degree == 0) {
    return;
  }

  std::uint64_t run = 0;
  const std::uint64_t slots = slots_per_line();
  for (const Stream& s : streams_) {
    // The stream covering this access ends somewhere inside or right
    // after the current super-page.
    if (s.next_lpn >= slpn * slots && s.next_lpn <= (slpn + 1) * slots) {
      run = std::max(run, s.run);
    }
  }
  if (run < cfg_.readahead_threshold) {
    return;
  }
  Line* current = find(slpn);
  std::vector<std::uint64_t> plan;
  for (std::uint32_t d = 1; d <= cfg_.readahead_degree; ++d) {
    const std::uint64_t target = slpn + d;
    if (target >= ftl_.logical_superpages()) {
      break;
    }
    if (find(target)) {
      continue;  // already cached or in flight
    }
    Line* victim = pick_allocatable(set_of(target), false);
    if (!victim || victim == current) {
      continue;  // best effort: never evict dirty lines or the live line
    }
    reset_line(*victim, target);
    fill_line(*victim, [] {});
    ++stats_.prefetch_lines;
    plan.push_back(target);
  }
  if (plan.empty()) {
    return;
  }
  // Record the channel coverage of this plan for the readahead tests.
  std::vector<std::uint32_t> channels;
  for (std::uint64_t t : plan) {
    for (std::uint32_t slot = 0; slot < slots_per_line(); ++slot) {
      std::uint32_t ch;
      if (auto tr = ftl_.translate_read(t)) {
        ch = ftl_.slot_address(*tr, slot).channel;
      } else {
        ch = ftl_.layout().address_of(0, 0, slot).channel;
      }
      if (std::find(channels.begin(), channels.end(), ch) == channels.end()) {
        channels.push_back(ch);
      }
    }
  }
  prefetch_plan_channels_.push_back(static_cast<std::uint32_t>(channels.size()));
}

}  // namespace vssd::icl
