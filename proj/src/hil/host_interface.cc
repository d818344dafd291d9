#include "vssd/hil/host_interface.hh"

#include <algorithm>
#include <sstream>

#include "vssd/util/fault.hh"

namespace vssd::hil {

namespace {
constexpr std::uint32_t kSectorBytes = 512;
constexpr std::uint64_t kNoMetric = ~std::uint64_t{0};
}

void HostInterface::set_op(const Command& cmd, stats::CmdOp op,
                           std::uint64_t bytes) {
  if (cmd.metric_id != kNoMetric) {
    metrics_.set_op(cmd.metric_id, op, bytes);
  }
}

void HostInterface::fw_done(const Command& cmd) {
  if (cmd.metric_id != kNoMetric) {
    metrics_.on_fw_done(cmd.metric_id, engine_.now());
  }
}

HostInterface::HostInterface(sim::Engine& engine, HostMemory& mem,
                             icl::Icl& icl, ftl::Ftl& ftl,
                             flash::Backend& backend,
                             stats::Collector& metrics,
                             const InterfaceConfig& cfg)
    : engine_(engine),
      mem_(mem),
      icl_(icl),
      ftl_(ftl),
      backend_(backend),
      metrics_(metrics),
      cfg_(cfg),
      link_h2d_(engine),
      link_d2h_(engine),
      controller_(engine),
      isr_(engine) {
  if (!s_type()) {
    slot_busy_.assign(kHTypeSlots, 0);
    slot_metric_.assign(kHTypeSlots, 0);
  }
}

// ----------------------------------------------------------------- s-type

void HostInterface::set_admin_queues(std::uint64_t sq_addr,
                                     std::uint32_t sq_size,
                                     std::uint64_t cq_addr,
                                     std::uint32_t cq_size) {
  sim_check(s_type(), "admin queues only exist on s-type interfaces");
  Queue q;
  q.sq_valid = q.cq_valid = true;
  q.sq_addr = sq_addr;
  q.sq_size = sq_size;
  q.cq_addr = cq_addr;
  q.cq_size = cq_size;
  queues_[0] = q;
}

void HostInterface::ring_sq_doorbell(std::uint16_t qid, std::uint32_t new_tail) {
  auto it = queues_.find(qid);
  sim_check(it != queues_.end() && it->second.sq_valid,
            "doorbell for unknown SQ ", qid);
  Queue& q = it->second;
  sim_check(new_tail < q.sq_size, "doorbell tail out of range");
  const std::uint32_t published =
      (new_tail + q.sq_size - q.sq_tail) % q.sq_size;
  const std::uint32_t pending =
      (q.sq_tail + q.sq_size - q.sq_head) % q.sq_size;
  if (published > q.sq_size - 1 - pending) {
    sim_fault("SQ overflow: tail moved past head on queue ", qid);
  }
  q.sq_tail = new_tail;
  q.unfetched += published;
  for (std::uint32_t i = 0; i < published; ++i) {
    if (cfg_.arbitration == Arbitration::fifo) {
      fifo_order_.push_back(qid);
    }
    // Admin commands stay out of the per-command statistics.
    q.metric_ids.push_back(
        qid == 0 ? kNoMetric
                 : metrics_.begin(stats::CmdOp::other, 0, engine_.now()));
  }
  if (published > 0) {
    engine_.schedule_after(cfg_.stages.doorbell, [this] { kick_fetch(); });
  }
}

void HostInterface::ring_cq_doorbell(std::uint16_t qid, std::uint32_t new_head) {
  auto it = queues_.find(qid);
  sim_check(it != queues_.end() && it->second.cq_valid,
            "CQ doorbell for unknown queue ", qid);
  sim_check(new_head < it->second.cq_size, "CQ head out of range");
  it->second.cq_head = new_head;
  drain_cq_backlog(qid);
}

// ----------------------------------------------------------------- h-type

bool HostInterface::issue_slot(std::uint32_t slot, std::uint64_t header_addr) {
  sim_check(!s_type(), "slots only exist on h-type interfaces");
  sim_check(slot < kHTypeSlots, "slot out of range");
  if (slot_busy_[slot]) {
    return false;
  }
  slot_busy_[slot] = 1;
  ++busy_slots_;
  max_busy_slots_ = std::max(max_busy_slots_, busy_slots_);
  slot_metric_[slot] = metrics_.begin(stats::CmdOp::other, 0, engine_.now());
  slot_fifo_.emplace_back(slot, header_addr);
  engine_.schedule_after(cfg_.stages.doorbell, [this] { kick_fetch(); });
  return true;
}

// ------------------------------------------------------------ arbitration

std::optional<std::uint16_t> HostInterface::arbitrate() {
  switch (cfg_.arbitration) {
    case Arbitration::fifo: {
      while (!fifo_order_.empty()) {
        const std::uint16_t qid = fifo_order_.front();
        auto it = queues_.find(qid);
        if (it == queues_.end() || it->second.unfetched == 0) {
          fifo_order_.pop_front();
          continue;
        }
        fifo_order_.pop_front();
        return qid;
      }
      return std::nullopt;
    }
    case Arbitration::rr: {
      if (queues_.empty()) {
        return std::nullopt;
      }
      auto it = queues_.upper_bound(rr_last_);
      for (std::size_t i = 0; i <= queues_.size(); ++i) {
        if (it == queues_.end()) {
          it = queues_.begin();
        }
        if (it->second.unfetched > 0) {
          rr_last_ = it->first;
          return it->first;
        }
        ++it;
      }
      return std::nullopt;
    }
    case Arbitration::wrr: {
      if (queues_.empty()) {
        return std::nullopt;
      }
      // Serve up to `weight` commands per queue per round.
      for (std::size_t hops = 0; hops <= 2 * queues_.size() + 1; ++hops) {
        auto it = queues_.find(wrr_qid_);
        if (it != queues_.end() && it->second.unfetched > 0 &&
            wrr_credit_ > 0) {
          --wrr_credit_;
          return wrr_qid_;
        }
        it = queues_.upper_bound(wrr_qid_);
        if (it == queues_.end()) {
          it = queues_.begin();
        }
        wrr_qid_ = it->first;
        wrr_credit_ = std::max<std::uint32_t>(1, it->second.weight);
      }
      return std::nullopt;
    }
  }
  return std::nullopt;
}

void HostInterface::kick_fetch() {
  if (fetch_busy_) {
    return;
  }
  if (s_type()) {
    auto qid = arbitrate();
    if (!qid) {
      return;
    }
    fetch_busy_ = true;
    engine_.schedule_after(cfg_.stages.fetch,
                           [this, q = *qid] { fetch_from(q); });
    return;
  }
  if (slot_fifo_.empty()) {
    return;
  }
  fetch_busy_ = true;
  auto [slot, header] = slot_fifo_.front();
  slot_fifo_.pop_front();
  engine_.schedule_after(cfg_.stages.fetch, [this, slot = slot,
                                             header = header] {
    link_h2d_.occupy(
        sim::transfer_time(SubmissionEntry::kBytes, cfg_.link_bytes_per_sec) +
            cfg_.stages.dma_overhead,
        [this, slot, header] {
          std::array<std::byte, SubmissionEntry::kBytes> raw;
          mem_.read(header, raw);
          auto cmd = std::make_shared<Command>();
          cmd->sqe = SubmissionEntry::decode(raw);
          cmd->qid = 0;
          cmd->slot = slot;
          cmd->metric_id = slot_metric_[slot];
          metrics_.on_fetch(cmd->metric_id, engine_.now());
          {
            std::ostringstream os;
            os << "t=" << engine_.now() << " fetch slot=" << slot
               << " op=" << int(cmd->sqe.opcode) << " lba=" << cmd->sqe.slba
               << " len=" << cmd->sqe.length;
            trace(os.str());
          }
          engine_.schedule_after(cfg_.stages.hil, [this, cmd] { execute(cmd); });
          fetch_busy_ = false;
          kick_fetch();
        });
  });
}

void HostInterface::fetch_from(std::uint16_t qid) {
  Queue& q = queues_.at(qid);
  if (q.unfetched == 0) {
    fetch_busy_ = false;
    kick_fetch();
    return;
  }
  --q.unfetched;
  const std::uint32_t head = q.sq_head;
  q.sq_head = (q.sq_head + 1) % q.sq_size;
  const std::uint64_t addr = q.sq_addr + std::uint64_t{head} * SubmissionEntry::kBytes;
  const std::uint64_t metric_id = q.metric_ids.front();
  q.metric_ids.pop_front();
  ++queue_stats_[qid].fetched;
  link_h2d_.occupy(
      sim::transfer_time(SubmissionEntry::kBytes, cfg_.link_bytes_per_sec) +
          cfg_.stages.dma_overhead,
      [this, qid, addr, metric_id] {
        std::array<std::byte, SubmissionEntry::kBytes> raw;
        mem_.read(addr, raw);
        auto cmd = std::make_shared<Command>();
        cmd->sqe = SubmissionEntry::decode(raw);
        cmd->qid = qid;
        cmd->metric_id = metric_id;
        if (metric_id != kNoMetric) {
          metrics_.on_fetch(metric_id, engine_.now());
        }
        {
          std::ostringstream os;
          os << "t=" << engine_.now() << " fetch q=" << qid
             << " cid=" << cmd->sqe.cid << " op=" << int(cmd->sqe.opcode)
             << " lba=" << cmd->sqe.slba << " len=" << cmd->sqe.length;
          trace(os.str());
        }
        engine_.schedule_after(cfg_.stages.hil, [this, cmd] { execute(cmd); });
        fetch_busy_ = false;
        kick_fetch();
      });
}

// -------------------------------------------------------------- execution

void HostInterface::execute(std::shared_ptr<Command> cmd) {
  if (s_type() && cmd->qid == 0) {
    execute_admin(std::move(cmd));
    return;
  }
  switch (cmd->sqe.opcode) {
    case kOpRead:
    case kOpWrite:
    case kOpFlush:
      if (cfg_.kind == Kind::ocssd) {
        cmd->status = kStatusInvalidOpcode;  // passive mode: vector I/O only
        fw_done(*cmd);
        complete(std::move(cmd));
        return;
      }
      execute_io(std::move(cmd));
      return;
    case kOpVectorRead:
    case kOpVectorWrite:
    case kOpVectorErase:
      if (cfg_.kind != Kind::ocssd) {
        cmd->status = kStatusInvalidOpcode;
        fw_done(*cmd);
        complete(std::move(cmd));
        return;
      }
      execute_vector(std::move(cmd));
      return;
    default:
      cmd->status = kStatusInvalidOpcode;
      fw_done(*cmd);
      complete(std::move(cmd));
      return;
  }
}

void HostInterface::execute_admin(std::shared_ptr<Command> cmd) {
  const SubmissionEntry& e = cmd->sqe;
  auto finish = [this, cmd](std::uint16_t status) {
    cmd->status = status;
    if (cmd->metric_id != kNoMetric) {
      fw_done(*cmd);
    }
    complete(cmd);
  };
  switch (e.opcode) {
    case kAdminCreateCq: {
      const std::uint16_t qid = static_cast<std::uint16_t>(e.count & 0xffff);
      if (qid == 0 || qid >= cfg_.max_queues || e.length < 2) {
        finish(kStatusInvalidField);
        return;
      }
      Queue& q = queues_[qid];
      q.cq_valid = true;
      q.cq_addr = e.prp1;
      q.cq_size = e.length;
      q.cq_head = q.cq_tail = 0;
      q.cq_phase = true;
      finish(kStatusSuccess);
      return;
    }
    case kAdminCreateSq: {
      const std::uint16_t qid = static_cast<std::uint16_t>(e.count & 0xffff);
      auto it = queues_.find(qid);
      if (qid == 0 || it == queues_.end() || !it->second.cq_valid ||
          e.length < 2) {
        finish(kStatusInvalidField);
        return;
      }
      Queue& q = it->second;
      q.sq_valid = true;
      q.sq_addr = e.prp1;
      q.sq_size = e.length;
      q.sq_head = q.sq_tail = 0;
      q.weight = std::max<std::uint32_t>(1, e.count >> 16);
      finish(kStatusSuccess);
      return;
    }
    case kAdminDeleteSq:
    case kAdminDeleteCq: {
      const std::uint16_t qid = static_cast<std::uint16_t>(e.count & 0xffff);
      auto it = queues_.find(qid);
      if (qid == 0 || it == queues_.end()) {
        finish(kStatusInvalidField);
        return;
      }
      if (e.opcode == kAdminDeleteSq) {
        it->second.sq_valid = false;
      } else if (!it->second.sq_valid) {
        queues_.erase(it);
      } else {
        it->second.cq_valid = false;
      }
      finish(kStatusSuccess);
      return;
    }
    case kAdminNsAttach:
      finish(kStatusSuccess);
      return;
    case kAdminIdentify: {
      // 4KB identify page: geometry, capacity, super-page shape.
      std::vector<std::byte> page(4096, std::byte{0});
      auto put32 = [&](std::size_t at, std::uint32_t v) {
        for (int i = 0; i < 4; ++i) {
          page[at + i] = std::byte(v >> (8 * i) & 0xff);
        }
      };
      auto put64 = [&](std::size_t at, std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
          page[at + i] = std::byte(v >> (8 * i) & 0xff);
        }
      };
      const flash::Geometry& g = backend_.geometry();
      put32(0, 0x44535356);  // "VSSD"
      put32(4, g.channels);
      put32(8, g.ways);
      put32(12, g.dies);
      put32(16, g.planes);
      put32(20, g.blocks);
      put32(24, g.pages);
      put32(28, g.page_bytes);
      put64(32, ftl_.logical_bytes());
      put32(40, ftl_.layout().slots);
      put32(44, kHTypeSlots);
      link_d2h_.occupy(
          sim::transfer_time(page.size(), cfg_.link_bytes_per_sec) +
              cfg_.stages.dma_overhead,
          [this, cmd, page = std::move(page), finish] {
            if (cfg_.content) {
              mem_.write(cmd->sqe.prp1, page);
            }
            finish(kStatusSuccess);
          });
      return;
    }
    case kAdminChunkInfo: {
      // Per-chunk records: write pointer, erase count, state.
      const flash::Geometry& g = backend_.geometry();
      const std::uint64_t total_chunks = g.planes_total() * g.blocks;
      const std::uint64_t first = e.slba;
      const std::uint64_t n = e.count;
      if (first + n > total_chunks) {
        finish(kStatusInvalidField);
        return;
      }
      std::vector<std::byte> buf(n * 16, std::byte{0});
      for (std::uint64_t i = 0; i < n; ++i) {
        const std::uint64_t chunk = first + i;
        flash::Address a;
        const std::uint64_t plane_idx = chunk / g.blocks;
        a.block = static_cast<std::uint32_t>(chunk % g.blocks);
        a.plane = static_cast<std::uint32_t>(plane_idx % g.planes);
        a.die = static_cast<std::uint32_t>(plane_idx / g.planes % g.dies);
        a.way = static_cast<std::uint32_t>(plane_idx / (std::uint64_t{g.planes} * g.dies) % g.ways);
        a.channel = static_cast<std::uint32_t>(plane_idx / (std::uint64_t{g.planes} * g.dies * g.ways));
        const std::uint32_t wp = backend_.write_cursor(a);
        const std::uint32_t ec = backend_.erase_count(a);
        const std::uint32_t state = wp == 0 ? 0 : (wp >= g.pages ? 2 : 1);
        auto put32 = [&](std::size_t at, std::uint32_t v) {
          for (int j = 0; j < 4; ++j) {
            buf[at + j] = std::byte(v >> (8 * j) & 0xff);
          }
        };
        put32(i * 16 + 0, wp);
        put32(i * 16 + 4, ec);
        put32(i * 16 + 8, state);
      }
      link_d2h_.occupy(
          sim::transfer_time(buf.size(), cfg_.link_bytes_per_sec) +
              cfg_.stages.dma_overhead,
          [this, cmd, buf = std::move(buf), finish] {
            if (cfg_.content) {
              mem_.write(cmd->sqe.prp1, buf);
            }
            finish(kStatusSuccess);
          });
      return;
    }
    default:
      finish(kStatusInvalidOpcode);
      return;
  }
}

void HostInterface::execute_io(std::shared_ptr<Command> cmd) {
  const SubmissionEntry& e = cmd->sqe;
  if (e.opcode == kOpFlush) {
    set_op(*cmd, stats::CmdOp::flush, 0);
    icl_.flush_all([this, cmd](std::uint64_t) {
      fw_done(*cmd);
      complete(cmd);
    });
    return;
  }
  const bool is_write = e.opcode == kOpWrite;
  set_op(*cmd, is_write ? stats::CmdOp::write : stats::CmdOp::read, e.length);
  cmd->byte_off = e.slba * kSectorBytes;
  if (e.length == 0 || e.length % kSectorBytes != 0 ||
      cmd->byte_off + e.length > logical_bytes()) {
    cmd->status = kStatusLbaOutOfRange;
    fw_done(*cmd);
    complete(cmd);
    return;
  }

  PointerList list;
  if (s_type()) {
    if (e.sgl) {
      list = SglContiguous{e.prp1, e.prp2};
    } else {
      list = PrpList{e.prp1, e.prp2};
    }
  } else {
    list = PrdtList{e.mptr, e.count};
  }
  WalkResult walk = traverse_pointer_list(mem_, list, e.length);
  if (walk.error != WalkError::none) {
    cmd->status = kStatusInvalidField;
    fw_done(*cmd);
    complete(cmd);
    return;
  }
  cmd->segments = std::move(walk.segments);
  if (cfg_.content) {
    cmd->staging.assign(e.length, std::byte{0});
  }

  // Charge the pointer-list fetch: chained pages cross the link plus a
  // firmware cost per page.
  const SimTime list_cost =
      walk.list_pages_fetched == 0
          ? 0
          : sim::transfer_time(std::uint64_t{walk.list_pages_fetched} * 4096,
                               cfg_.link_bytes_per_sec) +
                walk.list_pages_fetched * cfg_.stages.prp_fetch;
  auto after_list = [this, cmd, is_write] {
    if (is_write) {
      dma(cmd, false, [this, cmd] {
        run_internal_ops(cmd, true, [this, cmd] {
          fw_done(*cmd);
          metrics_.add_host_write_bytes(cmd->sqe.length);
          complete(cmd);
        });
      });
    } else {
      run_internal_ops(cmd, false, [this, cmd] {
        fw_done(*cmd);
        dma(cmd, true, [this, cmd] {
          metrics_.add_host_read_bytes(cmd->sqe.length);
          complete(cmd);
        });
      });
    }
  };
  if (list_cost == 0) {
    after_list();
  } else {
    link_h2d_.occupy(list_cost, after_list);
  }
}

void HostInterface::dma(std::shared_ptr<Command> cmd, bool to_host,
                        std::function<void()> done) {
  if (cmd->segments.empty()) {
    done();
    return;
  }
  // Segments move one at a time so concurrent commands interleave on the
  // link; h-type storage additionally copies each segment through the
  // host controller's buffer.
  auto step = std::make_shared<std::function<void(std::size_t, std::uint64_t)>>();
  auto done_shared = std::make_shared<std::function<void()>>(std::move(done));
  *step = [this, cmd, to_host, step, done_shared](std::size_t idx,
                                                  std::uint64_t off) {
    if (idx == cmd->segments.size()) {
      (*done_shared)();
      return;
    }
    const Segment seg = cmd->segments[idx];
    sim_check(mem_.backed(seg.addr, seg.len) || !cfg_.content,
              "host-memory fault: DMA to unbacked address ", seg.addr);
    const SimTime link_cost =
        sim::transfer_time(seg.len, cfg_.link_bytes_per_sec) +
        cfg_.stages.dma_overhead;
    const SimTime ctrl_cost =
        s_type() ? 0
                 : cfg_.stages.controller +
                       sim::transfer_time(seg.len, cfg_.controller_bytes_per_sec);
    auto move_bytes = [this, cmd, seg, off, to_host] {
      if (!cfg_.content) {
        return;
      }
      if (to_host) {
        mem_.write(seg.addr,
                   std::span<const std::byte>(cmd->staging).subspan(off, seg.len));
      } else {
        mem_.read(seg.addr,
                  std::span<std::byte>(cmd->staging).subspan(off, seg.len));
      }
    };
    auto next = [step, idx, off, seg, move_bytes] {
      move_bytes();
      (*step)(idx + 1, off + seg.len);
    };
    if (ctrl_cost == 0) {
      (to_host ? link_d2h_ : link_h2d_).occupy(link_cost, next);
    } else if (to_host) {
      link_d2h_.occupy(link_cost, [this, ctrl_cost, next] {
        controller_.occupy(ctrl_cost, next);
      });
    } else {
      controller_.occupy(ctrl_cost, [this, link_cost, next] {
        link_h2d_.occupy(link_cost, next);
      });
    }
  };
  (*step)(0, 0);
}

void HostInterface::run_internal_ops(std::shared_ptr<Command> cmd,
                                     bool is_write,
                                     std::function<void()> done) {
  const std::uint32_t page = backend_.geometry().page_bytes;
  const std::uint32_t slots = icl_.slots_per_line();
  const std::uint64_t off = cmd->byte_off;
  const std::uint64_t len = cmd->sqe.length;
  const std::uint64_t first_page = off / page;
  const std::uint64_t last_page = (off + len - 1) / page;
  const bool content = cfg_.content;

  // Page-aligned working buffer covering [first_page, last_page].
  const std::uint64_t npages = last_page - first_page + 1;
  auto aligned = std::make_shared<std::vector<std::byte>>();
  if (content) {
    aligned->assign(npages * page, std::byte{0});
  }

  struct LineOp {
    std::uint64_t lpn;
    std::uint32_t count;
  };
  std::vector<LineOp> ops;
  std::uint64_t p = first_page;
  while (p <= last_page) {
    const std::uint64_t line_end = (p / slots + 1) * slots - 1;
    const std::uint64_t end = std::min(line_end, last_page);
    ops.push_back(LineOp{p, static_cast<std::uint32_t>(end - p + 1)});
    p = end + 1;
  }

  if (!is_write) {
    auto remaining = std::make_shared<std::size_t>(ops.size());
    auto fin = std::make_shared<std::function<void()>>(
        [cmd, aligned, off, len, page, first_page, content,
         done = std::move(done)] {
          if (content) {
            const std::uint64_t skip = off - first_page * page;
            std::copy(aligned->begin() + static_cast<std::ptrdiff_t>(skip),
                      aligned->begin() + static_cast<std::ptrdiff_t>(skip + len),
                      cmd->staging.begin());
          }
          done();
        });
    for (const LineOp& op : ops) {
      icl_.read(op.lpn, op.count,
                [aligned, op, first_page, page, content, remaining,
                 fin](std::vector<std::byte> data) {
                  if (content && !data.empty()) {
                    std::copy(data.begin(), data.end(),
                              aligned->begin() +
                                  static_cast<std::ptrdiff_t>(
                                      (op.lpn - first_page) * page));
                  }
                  if (--*remaining == 0) {
                    (*fin)();
                  }
                });
    }
    return;
  }

  // Write: merge partial head/tail pages first, then issue line writes.
  const bool head_partial = off % page != 0;
  const bool tail_partial = (off + len) % page != 0;
  auto issue_writes = [this, cmd, aligned, ops, off, len, page, first_page,
                       content, done = std::move(done)]() mutable {
    if (content) {
      const std::uint64_t skip = off - first_page * page;
      std::copy(cmd->staging.begin(), cmd->staging.end(),
                aligned->begin() + static_cast<std::ptrdiff_t>(skip));
    }
    auto remaining = std::make_shared<std::size_t>(ops.size());
    auto fin = std::make_shared<std::function<void()>>(std::move(done));
    for (const LineOp& op : ops) {
      std::vector<std::byte> chunk;
      if (content) {
        const std::uint64_t at = (op.lpn - first_page) * page;
        chunk.assign(aligned->begin() + static_cast<std::ptrdiff_t>(at),
                     aligned->begin() +
                         static_cast<std::ptrdiff_t>(at + std::uint64_t{op.count} * page));
      }
      icl_.write(op.lpn, op.count, std::move(chunk), [remaining, fin] {
        if (--*remaining == 0) {
          (*fin)();
        }
      });
    }
  };

  std::vector<std::uint64_t> boundary;
  if (head_partial) {
    boundary.push_back(first_page);
  }
  if (tail_partial && last_page != first_page) {
    boundary.push_back(last_page);
  } else if (tail_partial && !head_partial) {
    boundary.push_back(last_page);
  }
  if (boundary.empty()) {
    issue_writes();
    return;
  }
  auto remaining = std::make_shared<std::size_t>(boundary.size());
  auto fin = std::make_shared<std::function<void()>>(std::move(issue_writes));
  for (std::uint64_t bp : boundary) {
    icl_.read(bp, 1,
              [aligned, bp, first_page, page, content, remaining,
               fin](std::vector<std::byte> data) {
                if (content && !data.empty()) {
                  std::copy(data.begin(), data.end(),
                            aligned->begin() + static_cast<std::ptrdiff_t>(
                                                   (bp - first_page) * page));
                }
                if (--*remaining == 0) {
                  (*fin)();
                }
              });
  }
}

void HostInterface::execute_vector(std::shared_ptr<Command> cmd) {
  const SubmissionEntry& e = cmd->sqe;
  const flash::Geometry& g = backend_.geometry();
  const std::uint32_t page = g.page_bytes;
  const bool is_write = e.opcode == kOpVectorWrite;
  const bool is_read = e.opcode == kOpVectorRead;
  const bool is_erase = e.opcode == kOpVectorErase;
  if (e.count == 0) {
    cmd->status = kStatusInvalidField;
    fw_done(*cmd);
    complete(cmd);
    return;
  }
  set_op(*cmd,
         is_write ? stats::CmdOp::write
                  : (is_read ? stats::CmdOp::read : stats::CmdOp::other),
         is_erase ? 0 : std::uint64_t{e.count} * page);

  // Resolve the PPA vector (inline for a single entry).
  auto addrs = std::make_shared<std::vector<flash::Address>>();
  if (e.count == 1) {
    addrs->push_back(g.decode_ppa(e.slba));
  } else {
    for (std::uint32_t i = 0; i < e.count; ++i) {
      addrs->push_back(g.decode_ppa(mem_.read_u64(e.mptr + std::uint64_t{i} * 8)));
    }
  }
  for (const auto& a : *addrs) {
    if (!g.contains(a)) {
      cmd->status = kStatusInvalidField;
      fw_done(*cmd);
      complete(cmd);
      return;
    }
  }

  auto submit_phase = [this, cmd, addrs, is_write, is_read, is_erase, page] {
    auto remaining = std::make_shared<std::uint32_t>(0);
    auto fin = std::make_shared<std::function<void()>>([this, cmd, is_read,
                                                        is_write] {
      fw_done(*cmd);
      if (is_read && cmd->status == kStatusSuccess) {
        dma(cmd, true, [this, cmd] {
          metrics_.add_host_read_bytes(std::uint64_t{cmd->sqe.count} *
                                       backend_.geometry().page_bytes);
          complete(cmd);
        });
      } else {
        if (is_write && cmd->status == kStatusSuccess) {
          metrics_.add_host_write_bytes(std::uint64_t{cmd->sqe.count} *
                                        backend_.geometry().page_bytes);
        }
        complete(cmd);
      }
    });
    auto join = [remaining, fin] {
      if (--*remaining == 0) {
        (*fin)();
      }
    };
    for (std::uint32_t i = 0; i < addrs->size(); ++i) {
      const flash::Address& a = (*addrs)[i];
      flash::Fault f = flash::Fault::none;
      if (is_erase) {
        ++*remaining;
        f = backend_.submit_erase(a, [join](const flash::Transaction&) { join(); });
      } else if (is_write) {
        std::span<const std::byte> payload;
        if (cfg_.content) {
          payload = std::span<const std::byte>(cmd->staging)
                        .subspan(std::uint64_t{i} * page, page);
        }
        ++*remaining;
        f = backend_.submit_program(a, payload,
                                    [join](const flash::Transaction&) { join(); });
      } else {
        ++*remaining;
        f = backend_.submit_read(
            a, [this, cmd, i, page, join](const flash::Transaction&,
                                          std::vector<std::byte> data) {
              if (cfg_.content && !data.empty()) {
                std::copy(data.begin(), data.end(),
                          cmd->staging.begin() +
                              static_cast<std::ptrdiff_t>(std::uint64_t{i} * page));
              }
              join();
            });
      }
      if (f != flash::Fault::none) {
        --*remaining;
        cmd->status = f == flash::Fault::uninitialized_read
                          ? kStatusUnrecovered
                          : (f == flash::Fault::address ? kStatusInvalidField
                                                        : kStatusWritePointer);
        break;  // abort the rest of the vector
      }
    }
    ++*remaining;  // account for the issue loop itself
    join();
  };

  // Fetch the PPA list and (for writes) the payload, then hit the flash
  // after the FIL stage; passive mode touches neither ICL nor FTL.
  const std::uint64_t list_bytes = e.count > 1 ? std::uint64_t{e.count} * 8 : 0;
  auto after_list = [this, cmd, submit_phase, is_write, is_read, page,
                     e = cmd->sqe] {
    if (is_write || is_read) {
      PointerList list =
          e.sgl ? PointerList{SglContiguous{e.prp1, e.prp2}}
                : PointerList{PrpList{e.prp1, e.prp2}};
      WalkResult walk =
          traverse_pointer_list(mem_, list, std::uint64_t{e.count} * page);
      if (walk.error != WalkError::none) {
        cmd->status = kStatusInvalidField;
        fw_done(*cmd);
        complete(cmd);
        return;
      }
      cmd->segments = std::move(walk.segments);
      if (cfg_.content) {
        cmd->staging.assign(std::uint64_t{e.count} * page, std::byte{0});
      }
    }
    auto go = [this, submit_phase] {
      engine_.schedule_after(ftl_.config().fil_latency, submit_phase);
    };
    if (is_write) {
      dma(cmd, false, go);
    } else {
      go();
    }
  };
  if (list_bytes == 0) {
    after_list();
  } else {
    link_h2d_.occupy(sim::transfer_time(list_bytes, cfg_.link_bytes_per_sec) +
                         cfg_.stages.dma_overhead,
                     after_list);
  }
}

// -------------------------------------------------------------- completion

void HostInterface::complete(std::shared_ptr<Command> cmd) {
  engine_.schedule_after(cfg_.stages.completion, [this, cmd] {
    if (s_type()) {
      CompletionEntry e;
      e.cid = cmd->sqe.cid;
      e.sq_id = cmd->qid;
      e.sq_head = static_cast<std::uint16_t>(queues_.at(cmd->qid).sq_head);
      e.status = cmd->status;
      e.result = cmd->metric_id == kNoMetric
                     ? 0xffffffffu
                     : static_cast<std::uint32_t>(cmd->metric_id);
      post_cqe(cmd->qid, e);
      return;
    }
    // h-type: response record over the link, then one serialized ISR.
    link_d2h_.occupy(
        sim::transfer_time(CompletionEntry::kBytes, cfg_.link_bytes_per_sec) +
            cfg_.stages.dma_overhead,
        [this, cmd] {
          isr_.occupy(cfg_.stages.isr, [this, cmd] {
            metrics_.on_complete(cmd->metric_id, engine_.now(),
                                 cmd->status == kStatusSuccess);
            slot_busy_[cmd->slot] = 0;
            --busy_slots_;
            {
              std::ostringstream os;
              os << "t=" << engine_.now() << " complete slot=" << cmd->slot
                 << " status=" << cmd->status;
              trace(os.str());
            }
            if (slot_handler_) {
              slot_handler_(cmd->slot, cmd->status);
            }
          });
        });
  });
}

void HostInterface::post_cqe(std::uint16_t qid, CompletionEntry e) {
  Queue& q = queues_.at(qid);
  const std::uint32_t next_tail = (q.cq_tail + 1) % q.cq_size;
  if (next_tail == q.cq_head) {
    q.cq_backlog.push_back(e);  // CQ full; wait for the host head doorbell
    return;
  }
  e.phase = q.cq_phase;
  const std::uint64_t addr = q.cq_addr + std::uint64_t{q.cq_tail} * CompletionEntry::kBytes;
  q.cq_tail = next_tail;
  if (next_tail == 0) {
    q.cq_phase = !q.cq_phase;
  }
  link_d2h_.occupy(
      sim::transfer_time(CompletionEntry::kBytes, cfg_.link_bytes_per_sec) +
          cfg_.stages.dma_overhead,
      [this, qid, addr, e] {
        mem_.write(addr, e.encode());
        if (e.result != 0xffffffffu) {
          metrics_.on_complete(e.result, engine_.now(),
                               e.status == kStatusSuccess);
        }
        {
          std::ostringstream os;
          os << "t=" << engine_.now() << " cqpost q=" << qid << " cid=" << e.cid
             << " status=" << e.status;
          trace(os.str());
        }
        engine_.schedule_after(cfg_.stages.msi, [this, qid] {
          if (msi_) {
            msi_(qid);
          }
        });
      });
}

void HostInterface::drain_cq_backlog(std::uint16_t qid) {
  Queue& q = queues_.at(qid);
  while (!q.cq_backlog.empty() &&
         (q.cq_tail + 1) % q.cq_size != q.cq_head) {
    CompletionEntry e = q.cq_backlog.front();
    q.cq_backlog.pop_front();
    post_cqe(qid, e);
  }
}

}  // namespace vssd::hil
