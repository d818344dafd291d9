#include "vssd/dram/dram.hh"

#include <algorithm>

#include "vssd/util/fault.hh"

namespace vssd::dram {

Dram::Dram(const Config& cfg) : cfg_(cfg) {
  banks_.resize(std::size_t{cfg_.banks} * cfg_.ranks * cfg_.channels);
}

SimTime Dram::access(std::uint64_t addr, std::uint64_t len, bool is_write,
                     SimTime now) {
  if (addr + len > cfg_.size_bytes) {
    sim_fault("dram access out of range: addr=", addr, " len=", len);
  }
  if (len == 0) {
    return now;
  }
  const std::uint64_t first = addr / cfg_.burst_bytes;
  const std::uint64_t last = (addr + len - 1) / cfg_.burst_bytes;
  const SimTime burst_time = cfg_.burst_time();
  SimTime done = now;
  for (std::uint64_t b = first; b <= last; ++b) {
    Bank& bank = banks_[b % banks_.size()];
    const std::int64_t row =
        static_cast<std::int64_t>(b * cfg_.burst_bytes / cfg_.row_bytes);
    SimTime prep;
    if (!cfg_.close_page && bank.open_row == row) {
      prep = cfg_.t_cl;  // row hit
    } else {
      prep = cfg_.t_rp + cfg_.t_rcd + cfg_.t_cl;  // row miss: precharge+activate
    }
    bank.open_row = cfg_.close_page ? -1 : row;
    // The bank must be free and its column access complete before the
    // burst can claim the shared data bus.
    const SimTime ready = std::max(now, bank.busy_until) + prep;
    const SimTime start = std::max(ready, bus_free_at_);
    const SimTime end = start + burst_time;
    bus_free_at_ = end;
    bank.busy_until = end;
    done = end;
    ++bursts_;
  }
  energy_nj_ += energy_of_access(len, is_write);
  return done;
}

double Dram::energy_of_access(std::uint64_t len, bool /*is_write*/) const {
  if (len == 0) {
    return 0.0;
  }
  const std::uint64_t bursts =
      (len + cfg_.burst_bytes - 1) / cfg_.burst_bytes;
  return static_cast<double>(bursts) * cfg_.energy_per_burst_nj;
}

}  // namespace vssd::dram
