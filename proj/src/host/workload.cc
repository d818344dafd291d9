#include "vssd/host/workload.hh"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "vssd/device.hh"
#include "vssd/util/fault.hh"

namespace vssd::host {

namespace {

constexpr std::uint64_t kHostPage = hil::HostMemory::kPageBytes;
constexpr std::uint64_t kAdminSqAddr = 0x1000;
constexpr std::uint64_t kAdminCqAddr = 0x3000;
constexpr std::uint32_t kAdminQSize = 64;
constexpr std::uint64_t kIoSqBase = 0x0001'0000;
constexpr std::uint64_t kIoCqBase = 0x0100'0000;
constexpr std::uint64_t kSlotBase = 0x1000'0000;
constexpr std::uint32_t kListPages = 4;  // PRP list pages per slot (<=8MB IO)

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::uint64_t round_up(std::uint64_t v, std::uint64_t to) {
  return (v + to - 1) / to * to;
}

}  // namespace

void fill_payload(std::vector<std::byte>& buf, std::uint64_t seed,
                  std::uint64_t lba, std::uint64_t generation) {
  std::uint64_t state = seed ^ lba * 0x9e3779b97f4a7c15ull ^
                        generation * 0xc2b2ae3d27d4eb4full;
  for (std::size_t i = 0; i + 8 <= buf.size(); i += 8) {
    const std::uint64_t v = splitmix64(state);
    for (int b = 0; b < 8; ++b) {
      buf[i + b] = std::byte(v >> (8 * b) & 0xff);
    }
  }
}

std::vector<TraceRecord> parse_trace(std::istream& in) {
  std::vector<TraceRecord> out;
  std::string line;
  std::size_t lineno = 0;
  SimTime prev = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') {
      continue;
    }
    std::istringstream ls(line);
    double ts_us;
    std::uint64_t lba;
    std::uint64_t bytes;
    std::string op;
    if (!(ls >> ts_us >> lba >> bytes >> op) || (op != "R" && op != "W") ||
        bytes == 0 || bytes % 512 != 0 || ts_us < 0) {
      throw ConfigError("trace parse error at line " + std::to_string(lineno));
    }
    TraceRecord r;
    r.at = from_us(ts_us);
    r.lba = lba;
    r.bytes = static_cast<std::uint32_t>(bytes);
    r.is_write = op == "W";
    if (r.at < prev) {
      throw ConfigError("trace timestamps decrease at line " +
                        std::to_string(lineno));
    }
    prev = r.at;
    out.push_back(r);
  }
  return out;
}

// ------------------------------------------------------------------ NVMe

struct NvmeDriver::Impl {
  Device& dev;
  hil::HostMemory& mem;
  hil::HostInterface& hil;
  bool content;
  std::uint32_t nr_queues;
  std::vector<std::uint32_t> weights;

  struct Slot {
    bool busy = false;
    CompletionCb cb;
    std::uint64_t data_addr = 0;
    std::uint64_t list_addr = 0;
  };
  std::vector<Slot> slots;
  std::vector<std::uint16_t> free_slots;

  struct IoQueue {
    std::uint16_t qid = 0;
    std::uint64_t sq_addr = 0;
    std::uint64_t cq_addr = 0;
    std::uint32_t size = 0;
    std::uint32_t sq_tail = 0;
    std::uint32_t sq_head_seen = 0;  // from CQE sq_head field
    std::uint32_t cq_head = 0;
    bool phase_expect = true;
  };
  std::vector<IoQueue> io;

  // Admin ring state.
  std::uint32_t admin_tail = 0;
  std::uint32_t admin_cq_head = 0;
  bool admin_phase = true;
  std::uint16_t admin_status = 0;
  bool admin_done = false;

  std::uint64_t slot_stride = 0;
  std::uint64_t max_io = 0;

  Impl(Device& d, std::uint32_t nq, std::vector<std::uint32_t> w)
      : dev(d),
        mem(d.host_memory()),
        hil(d.hil()),
        content(d.config().data_emulation),
        nr_queues(nq),
        weights(std::move(w)) {}

  void on_msi(std::uint16_t qid) {
    if (qid == 0) {
      poll_admin();
      return;
    }
    IoQueue& q = io[qid - 1];
    std::vector<std::pair<CompletionCb, std::pair<std::uint16_t, std::uint64_t>>>
        ready;
    while (true) {
      std::array<std::byte, hil::CompletionEntry::kBytes> raw;
      mem.read(q.cq_addr + std::uint64_t{q.cq_head} * hil::CompletionEntry::kBytes,
               raw);
      const hil::CompletionEntry e = hil::CompletionEntry::decode(raw);
      if (e.phase != q.phase_expect) {
        break;
      }
      q.cq_head = (q.cq_head + 1) % q.size;
      if (q.cq_head == 0) {
        q.phase_expect = !q.phase_expect;
      }
      q.sq_head_seen = e.sq_head;
      Slot& s = slots[e.cid];
      ready.emplace_back(std::move(s.cb),
                         std::make_pair(e.status, s.data_addr));
      s.busy = false;
      s.cb = nullptr;
      free_slots.push_back(e.cid);
    }
    if (!ready.empty()) {
      hil.ring_cq_doorbell(qid, q.cq_head);
      for (auto& [cb, st] : ready) {
        if (cb) {
          cb(st.first, st.second);
        }
      }
    }
  }

  void poll_admin() {
    while (true) {
      std::array<std::byte, hil::CompletionEntry::kBytes> raw;
      mem.read(kAdminCqAddr + std::uint64_t{admin_cq_head} *
                                  hil::CompletionEntry::kBytes,
               raw);
      const hil::CompletionEntry e = hil::CompletionEntry::decode(raw);
      if (e.phase != admin_phase) {
        break;
      }
      admin_cq_head = (admin_cq_head + 1) % kAdminQSize;
      if (admin_cq_head == 0) {
        admin_phase = !admin_phase;
      }
      admin_status = e.status;
      admin_done = true;
    }
    hil.ring_cq_doorbell(0, admin_cq_head);
  }

  std::uint16_t admin(hil::SubmissionEntry e) {
    e.cid = static_cast<std::uint16_t>(admin_tail);
    mem.write(kAdminSqAddr + std::uint64_t{admin_tail} *
                                 hil::SubmissionEntry::kBytes,
              e.encode());
    admin_tail = (admin_tail + 1) % kAdminQSize;
    admin_done = false;
    hil.ring_sq_doorbell(0, admin_tail);
    dev.engine().run();
    sim_check(admin_done, "admin command did not complete");
    return admin_status;
  }

  bool ready = false;

  void setup(std::uint32_t depth, std::uint64_t max_io_bytes) {
    if (ready) {
      sim_check(max_io_bytes <= max_io && depth * nr_queues <= slots.size(),
                "driver setup cannot grow after first use");
      return;
    }
    ready = true;
    max_io = max_io_bytes;
    admin_tail = 0;
    admin_cq_head = 0;
    admin_phase = true;
    mem.allocate(kAdminSqAddr, kAdminQSize * hil::SubmissionEntry::kBytes);
    mem.allocate(kAdminCqAddr, kAdminQSize * hil::CompletionEntry::kBytes);
    hil.set_admin_queues(kAdminSqAddr, kAdminQSize, kAdminCqAddr, kAdminQSize);
    hil.set_msi_handler([this](std::uint16_t qid) { on_msi(qid); });

    const std::uint32_t per_queue = std::max<std::uint32_t>(depth + 1, 2);
    const std::uint32_t total_slots =
        std::min<std::uint32_t>(65000, nr_queues * std::max(depth, 1u));
    slot_stride = round_up(max_io, kHostPage) + kListPages * kHostPage;
    slots.clear();
    slots.resize(total_slots);
    free_slots.clear();
    for (std::uint32_t i = 0; i < total_slots; ++i) {
      slots[i].data_addr = kSlotBase + std::uint64_t{i} * slot_stride;
      slots[i].list_addr =
          slots[i].data_addr + round_up(max_io, kHostPage);
      if (content) {
        mem.allocate(slots[i].data_addr, slot_stride);
      } else {
        mem.allocate(slots[i].list_addr, kListPages * kHostPage);
      }
      free_slots.push_back(static_cast<std::uint16_t>(total_slots - 1 - i));
    }

    io.resize(nr_queues);
    for (std::uint32_t qi = 0; qi < nr_queues; ++qi) {
      IoQueue& q = io[qi];
      q.qid = static_cast<std::uint16_t>(qi + 1);
      q.size = per_queue;
      q.sq_addr = kIoSqBase + std::uint64_t{qi} * 0x10000;
      q.cq_addr = kIoCqBase + std::uint64_t{qi} * 0x10000;
      mem.allocate(q.sq_addr, q.size * hil::SubmissionEntry::kBytes);
      mem.allocate(q.cq_addr, q.size * hil::CompletionEntry::kBytes);

      hil::SubmissionEntry ccq;
      ccq.opcode = hil::kAdminCreateCq;
      ccq.prp1 = q.cq_addr;
      ccq.length = q.size;
      ccq.count = q.qid;
      sim_check(admin(ccq) == hil::kStatusSuccess, "create CQ failed");

      hil::SubmissionEntry csq;
      csq.opcode = hil::kAdminCreateSq;
      csq.prp1 = q.sq_addr;
      csq.length = q.size;
      const std::uint32_t weight =
          qi < weights.size() ? weights[qi] : 1;
      csq.count = q.qid | weight << 16;
      sim_check(admin(csq) == hil::kStatusSuccess, "create SQ failed");
    }
  }

  /// PRP list per NVMe rules; returns (prp1, prp2).
  std::pair<std::uint64_t, std::uint64_t> build_prp(const Slot& s,
                                                    std::uint64_t len) {
    const std::uint64_t pages = (len + kHostPage - 1) / kHostPage;
    if (pages <= 1) {
      return {s.data_addr, 0};
    }
    if (pages == 2) {
      return {s.data_addr, s.data_addr + kHostPage};
    }
    std::uint64_t entries = pages - 1;
    std::uint64_t list = s.list_addr;
    std::uint64_t next_data = s.data_addr + kHostPage;
    while (entries > 0) {
      const bool chains = entries > 512;
      const std::uint64_t n = chains ? 511 : entries;
      for (std::uint64_t i = 0; i < n; ++i) {
        mem.write_u64(list + i * 8, next_data);
        next_data += kHostPage;
      }
      if (chains) {
        mem.write_u64(list + 511 * 8, list + kHostPage);
        list += kHostPage;
      }
      entries -= n;
    }
    return {s.data_addr, s.list_addr};
  }

  bool submit_on(std::uint32_t queue, std::uint8_t opcode,
                 std::uint64_t byte_off, std::uint64_t byte_len,
                 const std::vector<std::byte>* payload, bool sgl,
                 CompletionCb cb) {
    IoQueue& q = io.at(queue - 1);
    const std::uint32_t in_ring =
        (q.sq_tail + q.size - q.sq_head_seen) % q.size;
    if (in_ring + 1 >= q.size || free_slots.empty()) {
      return false;
    }
    const std::uint16_t cid = free_slots.back();
    free_slots.pop_back();
    Slot& s = slots[cid];
    s.busy = true;
    s.cb = std::move(cb);

    hil::SubmissionEntry e;
    e.opcode = opcode;
    e.cid = cid;
    e.slba = byte_off / 512;
    e.length = static_cast<std::uint32_t>(byte_len);
    if (opcode == hil::kOpWrite && content && payload) {
      mem.write(s.data_addr, *payload);
    }
    if (opcode != hil::kOpFlush) {
      if (sgl) {
        e.sgl = true;
        e.prp1 = s.data_addr;
        e.prp2 = byte_len;
      } else {
        auto [p1, p2] = build_prp(s, byte_len);
        e.prp1 = p1;
        e.prp2 = p2;
      }
    }
    mem.write(q.sq_addr + std::uint64_t{q.sq_tail} * hil::SubmissionEntry::kBytes,
              e.encode());
    q.sq_tail = (q.sq_tail + 1) % q.size;
    hil.ring_sq_doorbell(q.qid, q.sq_tail);
    return true;
  }
};

NvmeDriver::NvmeDriver(Device& dev, std::uint32_t nr_queues,
                       std::vector<std::uint32_t> weights)
    : impl_(std::make_unique<Impl>(dev, std::max(1u, nr_queues),
                                   std::move(weights))) {}
NvmeDriver::~NvmeDriver() = default;

void NvmeDriver::setup(std::uint32_t queue_depth, std::uint64_t max_io_bytes) {
  impl_->setup(queue_depth, max_io_bytes);
}

bool NvmeDriver::submit(bool is_write, std::uint64_t byte_off,
                        std::uint64_t byte_len,
                        const std::vector<std::byte>* payload,
                        CompletionCb cb) {
  return impl_->submit_on(1, is_write ? hil::kOpWrite : hil::kOpRead, byte_off,
                          byte_len, payload, sgl_, std::move(cb));
}

bool NvmeDriver::submit_on(std::uint32_t queue, bool is_write,
                           std::uint64_t byte_off, std::uint64_t byte_len,
                           const std::vector<std::byte>* payload,
                           CompletionCb cb) {
  return impl_->submit_on(queue, is_write ? hil::kOpWrite : hil::kOpRead,
                          byte_off, byte_len, payload, sgl_, std::move(cb));
}

bool NvmeDriver::flush(CompletionCb cb) {
  return impl_->submit_on(1, hil::kOpFlush, 0, 0, nullptr, false,
                          std::move(cb));
}

// ---------------------------------------------------------------- h-type

struct HTypeDriver::Impl {
  Device& dev;
  hil::HostMemory& mem;
  hil::HostInterface& hil;
  bool content;

  struct Slot {
    bool busy = false;
    CompletionCb cb;
    std::uint64_t header_addr = 0;
    std::uint64_t prdt_addr = 0;
    std::uint64_t data_addr = 0;
  };
  std::vector<Slot> slots;
  std::uint64_t max_io = 0;

  explicit Impl(Device& d)
      : dev(d),
        mem(d.host_memory()),
        hil(d.hil()),
        content(d.config().data_emulation) {}

  bool ready = false;

  void setup(std::uint64_t max_io_bytes) {
    if (ready) {
      sim_check(max_io_bytes <= max_io, "driver setup cannot grow");
      return;
    }
    ready = true;
    max_io = max_io_bytes;
    slots.assign(hil::kHTypeSlots, Slot{});
    const std::uint64_t prdt_entries = (max_io + kHostPage - 1) / kHostPage;
    const std::uint64_t stride = round_up(max_io, kHostPage) +
                                 round_up(prdt_entries * 16, kHostPage) +
                                 kHostPage;
    for (std::uint32_t i = 0; i < slots.size(); ++i) {
      Slot& s = slots[i];
      s.data_addr = kSlotBase + i * stride;
      s.prdt_addr = s.data_addr + round_up(max_io, kHostPage);
      s.header_addr = s.prdt_addr + round_up(prdt_entries * 16, kHostPage);
      mem.allocate(s.prdt_addr, round_up(prdt_entries * 16, kHostPage) + kHostPage);
      if (content) {
        mem.allocate(s.data_addr, stride);
      }
    }
    hil.set_slot_handler([this](std::uint32_t slot, std::uint16_t status) {
      Slot& s = slots[slot];
      auto cb = std::move(s.cb);
      s.busy = false;
      s.cb = nullptr;
      if (cb) {
        cb(status, s.data_addr);
      }
    });
  }

  bool submit(std::uint8_t opcode, std::uint64_t byte_off,
              std::uint64_t byte_len, const std::vector<std::byte>* payload,
              CompletionCb cb) {
    std::int32_t free = -1;
    for (std::uint32_t i = 0; i < slots.size(); ++i) {
      if (!slots[i].busy) {
        free = static_cast<std::int32_t>(i);
        break;
      }
    }
    if (free < 0) {
      return false;  // all 32 command-list entries outstanding
    }
    Slot& s = slots[static_cast<std::uint32_t>(free)];
    s.busy = true;
    s.cb = std::move(cb);
    if (opcode == hil::kOpWrite && content && payload) {
      mem.write(s.data_addr, *payload);
    }
    // One PRDT entry per host page, like a controller walking the list.
    const std::uint32_t entries =
        static_cast<std::uint32_t>((byte_len + kHostPage - 1) / kHostPage);
    for (std::uint32_t i = 0; i < entries; ++i) {
      const std::uint64_t remain = byte_len - std::uint64_t{i} * kHostPage;
      mem.write_u64(s.prdt_addr + std::uint64_t{i} * 16,
                    s.data_addr + std::uint64_t{i} * kHostPage);
      mem.write_u64(s.prdt_addr + std::uint64_t{i} * 16 + 8,
                    std::min<std::uint64_t>(kHostPage, remain));
    }
    hil::SubmissionEntry e;
    e.opcode = opcode;
    e.cid = static_cast<std::uint16_t>(free);
    e.slba = byte_off / 512;
    e.length = static_cast<std::uint32_t>(byte_len);
    e.mptr = s.prdt_addr;
    e.count = entries;
    mem.write(s.header_addr, e.encode());
    const bool ok = hil.issue_slot(static_cast<std::uint32_t>(free), s.header_addr);
    sim_check(ok, "slot accounting out of sync");
    return true;
  }
};

HTypeDriver::HTypeDriver(Device& dev) : impl_(std::make_unique<Impl>(dev)) {}
HTypeDriver::~HTypeDriver() = default;

void HTypeDriver::setup(std::uint32_t, std::uint64_t max_io_bytes) {
  impl_->setup(max_io_bytes);
}

bool HTypeDriver::submit(bool is_write, std::uint64_t byte_off,
                         std::uint64_t byte_len,
                         const std::vector<std::byte>* payload,
                         CompletionCb cb) {
  return impl_->submit(is_write ? hil::kOpWrite : hil::kOpRead, byte_off,
                       byte_len, payload, std::move(cb));
}

bool HTypeDriver::flush(CompletionCb cb) {
  return impl_->submit(hil::kOpFlush, 0, 0, nullptr, std::move(cb));
}

// ----------------------------------------------------------------- OCSSD

struct OcssdDriver::Impl {
  Device& dev;
  hil::HostMemory& mem;
  bool content;
  NvmeDriver::Impl nvme;  // reuse ring management over the same interface

  flash::Geometry geo;
  std::uint32_t slots_per_row = 1;  // super-page width (channels)
  std::uint32_t groups = 1;
  std::uint32_t page_bytes = 4096;

  // Host FTL stub: page map plus per-group append cursors.
  std::unordered_map<std::uint64_t, std::uint64_t> page_map;  // lpn -> ppa
  struct GroupCursor {
    std::uint32_t block = 0;
    std::vector<std::uint32_t> row;  // per slot
  };
  std::vector<GroupCursor> cursors;
  std::uint64_t rr = 0;

  explicit Impl(Device& d)
      : dev(d),
        mem(d.host_memory()),
        content(d.config().data_emulation),
        nvme(d, 1, {}) {}

  bool ready = false;

  void setup(std::uint32_t depth, std::uint64_t max_io_bytes) {
    if (ready) {
      nvme.setup(depth, max_io_bytes);
      return;
    }
    ready = true;
    nvme.setup(depth, max_io_bytes);
    // Identify: learn the chunk geometry and super-page width.
    const std::uint64_t id_addr = kSlotBase - 0x2000;
    mem.allocate(id_addr, 4096);
    hil::SubmissionEntry e;
    e.opcode = hil::kAdminIdentify;
    e.prp1 = id_addr;
    sim_check(nvme.admin(e) == hil::kStatusSuccess, "identify failed");
    if (content) {
      std::array<std::byte, 48> raw;
      mem.read(id_addr, raw);
      auto g32 = [&](std::size_t at) {
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) {
          v = v << 8 | std::to_integer<std::uint32_t>(raw[at + i]);
        }
        return v;
      };
      geo.channels = g32(4);
      geo.ways = g32(8);
      geo.dies = g32(12);
      geo.planes = g32(16);
      geo.blocks = g32(20);
      geo.pages = g32(24);
      geo.page_bytes = g32(28);
      slots_per_row = g32(40);
    } else {
      // Without data emulation the identify payload is not transferred;
      // read the shape straight from the device model.
      geo = dev.backend().geometry();
      slots_per_row = dev.ftl().layout().slots;
    }
    page_bytes = geo.page_bytes;
    ftl::Span span = ftl::Span::none;
    if (slots_per_row == geo.channels && geo.channels > 1) {
      span = ftl::Span::channel;
    } else if (slots_per_row == geo.channels * geo.ways) {
      span = ftl::Span::channel_way;
    } else if (slots_per_row == geo.planes_total()) {
      span = ftl::Span::all;
    } else if (slots_per_row == geo.channels) {
      span = ftl::Span::channel;
    }
    layout = ftl::Layout::make(geo, span);
    groups = static_cast<std::uint32_t>(geo.planes_total() / slots_per_row);
    cursors.assign(groups, GroupCursor{});
    for (auto& c : cursors) {
      c.row.assign(slots_per_row, 0);
    }
  }

  ftl::Layout layout;

  std::uint64_t ppa_of(std::uint32_t group, std::uint32_t block,
                       std::uint32_t row, std::uint32_t slot) const {
    return geo.encode_ppa(
        layout.address_of(layout.sb_of(group, block), row, slot));
  }

  /// Append one page for logical page `lpn`; returns its PPA.
  std::uint64_t alloc_page(std::uint64_t lpn, std::uint32_t group) {
    const std::uint32_t slot =
        static_cast<std::uint32_t>(lpn % slots_per_row);
    GroupCursor& c = cursors[group];
    if (c.row[slot] >= geo.pages) {
      // Slot column exhausted: move the whole group to the next chunk row.
      ++c.block;
      sim_check(c.block < geo.blocks, "host FTL stub out of chunks");
      std::fill(c.row.begin(), c.row.end(), 0);
    }
    const std::uint32_t row = c.row[slot]++;
    return ppa_of(group, c.block, row, slot);
  }

  bool submit(bool is_write, std::uint64_t byte_off, std::uint64_t byte_len,
              const std::vector<std::byte>* payload, CompletionCb cb) {
    sim_check(byte_off % page_bytes == 0 && byte_len % page_bytes == 0,
              "ocssd stub requires page-aligned I/O");
    const std::uint64_t first = byte_off / page_bytes;
    const std::uint32_t n = static_cast<std::uint32_t>(byte_len / page_bytes);

    if (!is_write) {
      // Mapped pages are fetched per contiguous run; never-written pages
      // are zero-filled locally and never reach the device.
      std::vector<std::pair<std::uint32_t, std::vector<std::uint64_t>>> runs;
      for (std::uint32_t i = 0; i < n; ++i) {
        auto it = page_map.find(first + i);
        if (it == page_map.end()) {
          continue;
        }
        if (runs.empty() || runs.back().first + runs.back().second.size() != i) {
          runs.emplace_back(i, std::vector<std::uint64_t>{});
        }
        runs.back().second.push_back(it->second);
      }
      if (runs.empty()) {
        dev.engine().schedule_after(0, [cb = std::move(cb)] {
          if (cb) {
            cb(hil::kStatusSuccess, 0);
          }
        });
        return true;
      }
      if (runs.size() == 1 && runs[0].first == 0) {
        return vector_cmd(hil::kOpVectorRead, runs[0].second, nullptr, 0,
                          std::move(cb));
      }
      // Multiple runs: fan out over separate commands and report the
      // worst status. No single host buffer holds the whole range, so
      // the completion carries no data address.
      auto remaining = std::make_shared<std::uint32_t>(
          static_cast<std::uint32_t>(runs.size()));
      auto worst = std::make_shared<std::uint16_t>(hil::kStatusSuccess);
      auto outer = std::make_shared<CompletionCb>(std::move(cb));
      bool all_ok = true;
      for (auto& [idx, ppas] : runs) {
        const bool ok = vector_cmd(
            hil::kOpVectorRead, ppas, nullptr, 0,
            [remaining, worst, outer](std::uint16_t st, std::uint64_t) {
              if (st != hil::kStatusSuccess) {
                *worst = st;
              }
              if (--*remaining == 0 && *outer) {
                (*outer)(*worst, 0);
              }
            });
        if (!ok) {
          all_ok = false;
        }
      }
      return all_ok;
    }

    std::vector<std::uint64_t> ppas;
    ppas.reserve(n);
    const std::uint32_t group = static_cast<std::uint32_t>(rr++ % groups);
    for (std::uint32_t i = 0; i < n; ++i) {
      const std::uint64_t ppa = alloc_page(first + i, group);
      page_map[first + i] = ppa;
      ppas.push_back(ppa);
    }
    return vector_cmd(hil::kOpVectorWrite, ppas, payload, 0, std::move(cb));
  }

  bool vector_cmd(std::uint8_t opcode, const std::vector<std::uint64_t>& ppas,
                  const std::vector<std::byte>* payload,
                  std::uint64_t buf_offset, CompletionCb cb) {
    auto& q = nvme.io.at(0);
    const std::uint32_t in_ring =
        (q.sq_tail + q.size - q.sq_head_seen) % q.size;
    if (in_ring + 1 >= q.size || nvme.free_slots.empty()) {
      return false;
    }
    const std::uint16_t cid = nvme.free_slots.back();
    nvme.free_slots.pop_back();
    auto& s = nvme.slots[cid];
    s.busy = true;
    s.cb = std::move(cb);

    hil::SubmissionEntry e;
    e.opcode = opcode;
    e.cid = cid;
    e.count = static_cast<std::uint32_t>(ppas.size());
    if (ppas.size() == 1) {
      e.slba = ppas[0];
    } else {
      // PPA vector sits in the slot's list area, after the PRP pages.
      const std::uint64_t list = s.list_addr + 2 * kHostPage;
      mem.allocate(list, ppas.size() * 8);
      for (std::size_t i = 0; i < ppas.size(); ++i) {
        mem.write_u64(list + i * 8, ppas[i]);
      }
      e.mptr = list;
    }
    if (opcode != hil::kOpVectorErase) {
      const std::uint64_t bytes = ppas.size() * std::uint64_t{page_bytes};
      if (opcode == hil::kOpVectorWrite && content && payload) {
        mem.write(s.data_addr, *payload);
      }
      sim_check(buf_offset % kHostPage == 0, "unaligned vector buffer offset");
      NvmeDriver::Impl::Slot view = s;
      view.data_addr += buf_offset;
      auto [p1, p2] = nvme.build_prp(view, bytes);
      e.prp1 = p1;
      e.prp2 = p2;
    }
    mem.write(q.sq_addr + std::uint64_t{q.sq_tail} * hil::SubmissionEntry::kBytes,
              e.encode());
    q.sq_tail = (q.sq_tail + 1) % q.size;
    nvme.hil.ring_sq_doorbell(q.qid, q.sq_tail);
    return true;
  }
};

OcssdDriver::OcssdDriver(Device& dev) : impl_(std::make_unique<Impl>(dev)) {}
OcssdDriver::~OcssdDriver() = default;

void OcssdDriver::setup(std::uint32_t queue_depth, std::uint64_t max_io_bytes) {
  impl_->setup(queue_depth, max_io_bytes);
}

bool OcssdDriver::submit(bool is_write, std::uint64_t byte_off,
                         std::uint64_t byte_len,
                         const std::vector<std::byte>* payload,
                         CompletionCb cb) {
  return impl_->submit(is_write, byte_off, byte_len, payload, std::move(cb));
}

bool OcssdDriver::raw_vector(std::uint8_t opcode,
                             const std::vector<std::uint64_t>& ppas,
                             const std::vector<std::byte>* payload,
                             CompletionCb cb) {
  return impl_->vector_cmd(opcode, ppas, payload, 0, std::move(cb));
}

bool OcssdDriver::flush(CompletionCb cb) {
  impl_->dev.engine().schedule_after(0, [cb = std::move(cb)] {
    if (cb) {
      cb(hil::kStatusSuccess, 0);
    }
  });
  return true;
}

std::unique_ptr<Driver> make_driver(Device& dev) {
  switch (dev.config().interface.kind) {
    case hil::Kind::nvme:
      return std::make_unique<NvmeDriver>(dev, 1);
    case hil::Kind::ocssd:
      return std::make_unique<OcssdDriver>(dev);
    case hil::Kind::sata:
    case hil::Kind::ufs:
      return std::make_unique<HTypeDriver>(dev);
  }
  return nullptr;
}

// --------------------------------------------------------------- harness

Harness::Harness(Device& dev, const WorkloadSpec& spec)
    : dev_(dev), spec_(spec), rng_(spec.seed) {
  driver_ = make_driver(dev_);
  if (spec_.pattern == Pattern::trace) {
    std::ifstream in(spec_.trace_path);
    if (!in) {
      throw ConfigError("cannot open trace: " + spec_.trace_path);
    }
    trace_ = parse_trace(in);
  }
}

std::uint64_t Harness::range() const {
  const std::uint64_t logical = dev_.hil().logical_bytes();
  if (spec_.range_bytes == 0 || spec_.range_bytes > logical) {
    return logical;
  }
  return spec_.range_bytes;
}

void Harness::precondition() {
  if (spec_.precondition == Precondition::none) {
    return;
  }
  ensure_setup();
  // Fill blocks are a whole multiple of the workload block so the
  // read-verify bookkeeping stays block-granular.
  std::uint64_t blk = std::min<std::uint64_t>(spec_.precondition_block, range());
  blk = std::max(blk / spec_.block_bytes, std::uint64_t{1}) * spec_.block_bytes;

  const bool content = dev_.config().data_emulation;
  const std::uint64_t span = range() / spec_.block_bytes * spec_.block_bytes;
  const std::uint64_t nblocks = (span + blk - 1) / blk;
  std::uint64_t next = 0;
  std::uint64_t inflight = 0;
  std::uint64_t done = 0;
  std::vector<std::byte> buf;
  std::function<void()> pump = [&] {
    while (inflight < 16 && next < nblocks) {
      const std::uint64_t off = next * blk;
      const std::uint64_t len = std::min(blk, span - off);
      if (content) {
        buf.assign(len, std::byte{0});
        for (std::uint64_t sub = 0; sub < len; sub += spec_.block_bytes) {
          generations_[off + sub] = 0;
          std::vector<std::byte> unit(spec_.block_bytes);
          fill_payload(unit, spec_.seed, (off + sub) / 512, 0);
          std::copy(unit.begin(), unit.end(),
                    buf.begin() + static_cast<std::ptrdiff_t>(sub));
        }
      }
      const bool ok = driver_->submit(true, off, len, content ? &buf : nullptr,
                                      [&](std::uint16_t, std::uint64_t) {
                                        --inflight;
                                        ++done;
                                        pump();
                                      });
      if (!ok) {
        return;
      }
      ++next;
      ++inflight;
    }
  };
  pump();
  dev_.engine().run();
  sim_check(done == nblocks, "precondition fill incomplete");

  if (spec_.precondition == Precondition::stress) {
    // Random full-range overwrite: written volume doubles.
    const std::uint64_t wblk = spec_.block_bytes;
    const std::uint64_t wblocks = range() / wblk;
    std::vector<std::byte> wbuf;
    if (content) {
      wbuf.assign(wblk, std::byte{0});
    }
    std::uint64_t issued = 0;
    std::uint64_t wdone = 0;
    std::function<void()> pump2 = [&] {
      while (inflight < 16 && issued < wblocks) {
        const std::uint64_t off = (rng_() % wblocks) * wblk;
        if (content) {
          const std::uint64_t gen = ++generations_[off];
          fill_payload(wbuf, spec_.seed, off / 512, gen);
        }
        const bool ok =
            driver_->submit(true, off, wblk, content ? &wbuf : nullptr,
                            [&](std::uint16_t, std::uint64_t) {
                              --inflight;
                              ++wdone;
                              pump2();
                            });
        if (!ok) {
          return;
        }
        ++issued;
        ++inflight;
      }
    };
    pump2();
    dev_.engine().run();
    sim_check(wdone == wblocks, "stress pass incomplete");
  }

  bool flushed = false;
  driver_->flush([&](std::uint16_t, std::uint64_t) { flushed = true; });
  dev_.engine().run();
  sim_check(flushed, "precondition flush incomplete");
}

bool Harness::next_op(Op& op) {
  const std::uint64_t blk = spec_.block_bytes;
  const std::uint64_t nblocks = range() / blk;
  switch (spec_.pattern) {
    case Pattern::seqread:
    case Pattern::seqwrite:
      op.is_write = spec_.pattern == Pattern::seqwrite;
      op.off = seq_off_;
      op.len = blk;
      seq_off_ += blk;
      if (seq_off_ + blk > range()) {
        seq_off_ = 0;
      }
      return true;
    case Pattern::randread:
    case Pattern::randwrite:
      op.is_write = spec_.pattern == Pattern::randwrite;
      op.off = rng_() % nblocks * blk;
      op.len = blk;
      return true;
    case Pattern::mixed: {
      const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
      op.is_write = u >= spec_.read_ratio;
      op.off = rng_() % nblocks * blk;
      op.len = blk;
      return true;
    }
    case Pattern::trace: {
      if (trace_idx_ >= trace_.size()) {
        return false;
      }
      const TraceRecord& r = trace_[trace_idx_++];
      op.is_write = r.is_write;
      op.off = r.lba * 512 % range();
      op.len = r.bytes;
      return true;
    }
  }
  return false;
}

void Harness::pump() {
  const std::uint32_t qd =
      std::min(spec_.queue_depth, driver_->depth_limit());
  const bool content = dev_.config().data_emulation;
  while (in_flight_ < qd && issued_ < result_.submitted) {
    Op op;
    if (!next_op(op)) {
      result_.submitted = issued_;
      break;
    }
    const std::vector<std::byte>* payload = nullptr;
    if (op.is_write && content) {
      payload_buf_.assign(op.len, std::byte{0});
      const std::uint64_t gen = ++generations_[op.off];
      fill_payload(payload_buf_, spec_.seed, op.off / 512, gen);
      payload = &payload_buf_;
    }
    const std::uint64_t expect_off = op.off;
    const std::uint64_t expect_len = op.len;
    const bool is_read = !op.is_write;
    const bool ok = driver_->submit(
        op.is_write, op.off, op.len, payload,
        [this, expect_off, expect_len, is_read, content](
            std::uint16_t status, std::uint64_t data_addr) {
          --in_flight_;
          ++done_;
          if (status != hil::kStatusSuccess) {
            ++result_.errors;
          }
          if (is_read && spec_.verify && content && data_addr != 0) {
            std::vector<std::byte> got(expect_len);
            dev_.host_memory().read(data_addr, got);
            std::vector<std::byte> want(expect_len, std::byte{0});
            auto it = generations_.find(expect_off);
            if (it != generations_.end()) {
              fill_payload(want, spec_.seed, expect_off / 512, it->second);
            }
            if (got != want) {
              ++result_.verify_mismatches;
            }
          }
          if (done_ > std::uint64_t{2} * spec_.queue_depth &&
              done_ + spec_.queue_depth < result_.submitted) {
            const std::uint32_t now_in_flight = in_flight_ + 1;
            result_.in_flight_low =
                result_.in_flight_low == 0
                    ? now_in_flight
                    : std::min(result_.in_flight_low, now_in_flight);
            result_.in_flight_high =
                std::max(result_.in_flight_high, now_in_flight);
          }
          result_.completed = done_;
          pump();
          if (in_flight_ == 0) {
            dev_.ftl().on_idle();
          }
        });
    if (!ok) {
      return;  // retried on the next completion
    }
    ++issued_;
    ++in_flight_;
  }
}

RunResult Harness::run() {
  ensure_setup();
  result_ = RunResult{};
  issued_ = 0;
  done_ = 0;
  in_flight_ = 0;
  seq_off_ = 0;
  trace_idx_ = 0;

  if (spec_.pattern == Pattern::trace &&
      spec_.replay_mode == ReplayMode::timed) {
    // Open loop: arrivals at recorded offsets from now; a saturated
    // device queues arrivals at the driver, it never shifts them.
    result_.submitted = trace_.size();
    const SimTime t0 = dev_.engine().now();
    const bool content = dev_.config().data_emulation;
    auto backlog = std::make_shared<std::deque<TraceRecord>>();
    auto try_send = std::make_shared<std::function<void(const TraceRecord&)>>();
    *try_send = [this, content, backlog, try_send](const TraceRecord& r) {
      const std::uint64_t off = r.lba * 512 % range();
      const std::vector<std::byte>* payload = nullptr;
      if (r.is_write && content) {
        payload_buf_.assign(r.bytes, std::byte{0});
        const std::uint64_t gen = ++generations_[off];
        fill_payload(payload_buf_, spec_.seed, off / 512, gen);
        payload = &payload_buf_;
      }
      const bool ok = driver_->submit(
          r.is_write, off, r.bytes, payload,
          [this, backlog, try_send](std::uint16_t status, std::uint64_t) {
            ++done_;
            if (status != hil::kStatusSuccess) {
              ++result_.errors;
            }
            result_.completed = done_;
            // Drain arrivals held back while the driver was saturated.
            while (!backlog->empty()) {
              TraceRecord head = backlog->front();
              backlog->pop_front();
              (*try_send)(head);
              break;
            }
          });
      if (!ok) {
        backlog->push_back(r);
      } else {
        ++issued_;
      }
    };
    for (const TraceRecord& r : trace_) {
      dev_.engine().schedule_at(t0 + r.at, [try_send, r] { (*try_send)(r); });
    }
    dev_.engine().run();
    return result_;
  }

  result_.submitted = spec_.pattern == Pattern::trace
                          ? trace_.size()
                          : spec_.total_ops;
  pump();
  dev_.engine().run();
  result_.submitted = issued_;
  return result_;
}

void Harness::ensure_setup() {
  if (setup_done_) {
    return;
  }
  setup_done_ = true;
  std::uint64_t max_io = std::max<std::uint64_t>(spec_.block_bytes, 4096);
  if (spec_.precondition != Precondition::none) {
    max_io = std::max(max_io, spec_.precondition_block);
  }
  for (const TraceRecord& r : trace_) {
    max_io = std::max<std::uint64_t>(max_io, r.bytes);
  }
  const std::uint32_t qd = std::max<std::uint32_t>(
      16, std::min(spec_.queue_depth, driver_->depth_limit()));
  driver_->setup(qd, max_io);
}

void Harness::flush_device() {
  ensure_setup();
  bool done = false;
  driver_->flush([&](std::uint16_t, std::uint64_t) { done = true; });
  dev_.engine().run();
  sim_check(done, "flush did not complete");
}

std::uint64_t Harness::verify_pass() {
  sim_check(dev_.config().data_emulation,
            "verify requires content emulation");
  std::uint64_t mismatches = 0;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> items(
      generations_.begin(), generations_.end());
  std::sort(items.begin(), items.end());
  std::size_t next = 0;
  std::uint32_t inflight = 0;
  std::function<void()> pump = [&] {
    while (inflight < 8 && next < items.size()) {
      auto [off, gen] = items[next];
      const std::uint64_t len = spec_.block_bytes;
      const bool ok = driver_->submit(
          false, off, len, nullptr,
          [&, off, gen, len](std::uint16_t, std::uint64_t data_addr) {
            --inflight;
            std::vector<std::byte> got(len);
            dev_.host_memory().read(data_addr, got);
            std::vector<std::byte> want(len, std::byte{0});
            fill_payload(want, spec_.seed, off / 512, gen);
            if (got != want) {
              ++mismatches;
            }
            pump();
          });
      if (!ok) {
        return;
      }
      ++next;
      ++inflight;
    }
  };
  pump();
  dev_.engine().run();
  return mismatches;
}

}  // namespace vssd::host
