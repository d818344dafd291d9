#include "vssd/flash/backend.hh"

#include <algorithm>
#include <utility>

#include "vssd/util/fault.hh"

namespace vssd::flash {

const char* fault_name(Fault f) {
  switch (f) {
    case Fault::none:
      return "none";
    case Fault::address:
      return "address-fault";
    case Fault::overwrite:
      return "overwrite-fault";
    case Fault::out_of_order:
      return "out-of-order-program";
    case Fault::uninitialized_read:
      return "uninitialized-read";
  }
  return "?";
}

Backend::Backend(sim::Engine& engine, const Geometry& geometry,
                 const TimingParams& timing, bool store_content)
    : engine_(engine),
      geo_(geometry),
      timing_(timing),
      store_content_(store_content) {
  channels_.resize(geo_.channels);
  dies_.resize(std::size_t{geo_.channels} * geo_.ways * geo_.dies);
  plane_free_at_.assign(geo_.planes_total(), 0);
  block_cursor_.assign(geo_.planes_total() * geo_.blocks, 0);
  erase_counts_.assign(geo_.planes_total() * geo_.blocks, 0);
}

SimTime Backend::cell_latency(Op op, const Address& addr) const {
  const bool slow = (addr.page % 2) != 0;
  switch (op) {
    case Op::read:
      return (timing_.read_pairing && slow) ? timing_.t_read_slow
                                            : timing_.t_read_fast;
    case Op::program:
      return (timing_.prog_pairing && slow) ? timing_.t_prog_slow
                                            : timing_.t_prog_fast;
    case Op::erase:
      return timing_.t_erase;
  }
  return 0;
}

SimTime Backend::bus_transfer_time(std::uint64_t bytes) const {
  if (bytes == 0) {
    return 0;
  }
  const std::uint64_t bytes_per_cycle =
      std::uint64_t{timing_.bus_width_bits} / 8 * (timing_.ddr ? 2 : 1);
  const std::uint64_t cycles = (bytes + bytes_per_cycle - 1) / bytes_per_cycle;
  return cycles * timing_.bus_cycle();
}

std::uint32_t Backend::write_cursor(const Address& block_addr) const {
  return block_cursor_[geo_.block_index(block_addr)];
}

bool Backend::is_programmed(const Address& addr) const {
  return addr.page < block_cursor_[geo_.block_index(addr)];
}

std::uint32_t Backend::erase_count(const Address& block_addr) const {
  return erase_counts_[geo_.block_index(block_addr)];
}

Fault Backend::submit_read(const Address& addr, ReadCompletion on_done) {
  if (!geo_.contains(addr)) {
    return Fault::address;
  }
  if (!is_programmed(addr)) {
    return Fault::uninitialized_read;
  }
  auto* p = new Pending;
  p->txn.op = Op::read;
  p->txn.addr = addr;
  p->txn.bytes = geo_.page_bytes;
  p->txn.issued_at = engine_.now();
  p->on_read_done = std::move(on_done);
  if (store_content_) {
    // Content is captured at submit so a later-queued erase of the same
    // block cannot clobber an in-flight read.
    auto it = content_.find(geo_.page_index(addr));
    if (it != content_.end()) {
      p->data = it->second;
    }
  }
  ++counters_.reads;
  counters_.read_bytes += geo_.page_bytes;
  p->die_index = die_index(addr);
  dies_[p->die_index].queue.push_back(p);
  try_issue(p->die_index);
  return Fault::none;
}

Fault Backend::submit_program(const Address& addr,
                              std::span<const std::byte> payload,
                              Completion on_done) {
  if (!geo_.contains(addr) || payload.size() > geo_.page_bytes) {
    return Fault::address;
  }
  std::uint32_t& cursor = block_cursor_[geo_.block_index(addr)];
  if (addr.page < cursor) {
    return Fault::overwrite;
  }
  if (addr.page > cursor) {
    return Fault::out_of_order;
  }
  cursor = addr.page + 1;
  auto* p = new Pending;
  p->txn.op = Op::program;
  p->txn.addr = addr;
  p->txn.bytes = geo_.page_bytes;
  p->txn.issued_at = engine_.now();
  p->on_done = std::move(on_done);
  if (store_content_) {
    auto& slot = content_[geo_.page_index(addr)];
    slot.assign(payload.begin(), payload.end());
    slot.resize(geo_.page_bytes);
  }
  ++counters_.programs;
  counters_.program_bytes += geo_.page_bytes;
  p->die_index = die_index(addr);
  dies_[p->die_index].queue.push_back(p);
  try_issue(p->die_index);
  return Fault::none;
}

Fault Backend::submit_erase(const Address& block_addr, Completion on_done) {
  Address a = block_addr;
  a.page = 0;
  if (!geo_.contains(a)) {
    return Fault::address;
  }
  block_cursor_[geo_.block_index(a)] = 0;
  ++erase_counts_[geo_.block_index(a)];
  if (store_content_) {
    const std::uint64_t base = geo_.page_index(a);
    for (std::uint32_t pg = 0; pg < geo_.pages; ++pg) {
      content_.erase(base + pg);
    }
  }
  auto* p = new Pending;
  p->txn.op = Op::erase;
  p->txn.addr = a;
  p->txn.bytes = 0;
  p->txn.issued_at = engine_.now();
  p->on_done = std::move(on_done);
  ++counters_.erases;
  p->die_index = die_index(a);
  dies_[p->die_index].queue.push_back(p);
  try_issue(p->die_index);
  return Fault::none;
}

void Backend::request_bus(std::uint32_t channel, SimTime duration,
                          std::function<void(SimTime, SimTime)> granted) {
  Channel& ch = channels_[channel];
  if (ch.busy) {
    ch.waiting.push_back(BusRequest{duration, std::move(granted)});
    return;
  }
  ch.busy = true;
  const SimTime start = engine_.now();
  const SimTime end = start + duration;
  engine_.schedule_at(end, [this, channel] { release_bus(channel); });
  granted(start, end);
}

void Backend::release_bus(std::uint32_t channel) {
  Channel& ch = channels_[channel];
  if (ch.waiting.empty()) {
    ch.busy = false;
    return;
  }
  BusRequest req = std::move(ch.waiting.front());
  ch.waiting.pop_front();
  const SimTime start = engine_.now();
  const SimTime end = start + req.duration;
  engine_.schedule_at(end, [this, channel] { release_bus(channel); });
  req.granted(start, end);
}

void Backend::try_issue(std::size_t die_index) {
  Die& die = dies_[die_index];
  if (die.front_active || die.queue.empty()) {
    return;
  }
  die.front_active = true;
  start_command(die.queue.front());
}

void Backend::start_command(Pending* p) {
  const SimTime cmd_time = SimTime{timing_.cmd_cycles} * timing_.bus_cycle();
  // Programs move their payload onto the bus together with the command;
  // reads fetch data in a separate bus phase after the cell phase.
  const SimTime bus_phase =
      cmd_time +
      (p->txn.op == Op::program ? bus_transfer_time(p->txn.bytes) : 0);
  request_bus(p->txn.addr.channel, bus_phase, [this, p](SimTime start,
                                                        SimTime end) {
    p->txn.bus_start = start;
    Die& die = dies_[p->die_index];
    die.queue.pop_front();
    die.front_active = false;

    const std::uint64_t plane = geo_.plane_index(p->txn.addr);
    const SimTime cell_start = std::max(end, plane_free_at_[plane]);
    const SimTime cell_end = cell_start + cell_latency(p->txn.op, p->txn.addr);
    p->txn.cell_start = cell_start;
    plane_free_at_[plane] = cell_end;

    engine_.schedule_at(cell_end, [this, p] {
      if (p->txn.op == Op::read) {
        request_bus(p->txn.addr.channel, bus_transfer_time(p->txn.bytes),
                    [this, p](SimTime, SimTime out_end) { finish(p, out_end); });
      } else {
        finish(p, engine_.now());
      }
    });

    // The bus frees at the end of this phase; the next command on this
    // die may start its own bus phase then.
    engine_.schedule_at(end, [this, idx = p->die_index] { try_issue(idx); });
  });
}

void Backend::finish(Pending* p, SimTime done_at) {
  p->txn.done_at = done_at;
  if (log_enabled_) {
    log_.push_back(p->txn);
  }
  if (p->txn.op == Op::read) {
    if (p->on_read_done) {
      p->on_read_done(p->txn, std::move(p->data));
    }
  } else if (p->on_done) {
    p->on_done(p->txn);
  }
  delete p;
}

}  // namespace vssd::flash
