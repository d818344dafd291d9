#include "vssd/stats/metrics.hh"

#include <algorithm>

#include "vssd/util/fault.hh"

namespace vssd::stats {

std::uint64_t Collector::begin(CmdOp op, std::uint64_t bytes, SimTime submit) {
  CommandRecord r;
  r.id = records_.size();
  r.op = op;
  r.bytes = bytes;
  r.submit = submit;
  records_.push_back(r);
  return r.id;
}

CommandRecord& Collector::rec(std::uint64_t id) {
  sim_check(id < records_.size(), "unknown command record ", id);
  return records_[id];
}

void Collector::set_op(std::uint64_t id, CmdOp op, std::uint64_t bytes) {
  CommandRecord& r = rec(id);
  r.op = op;
  r.bytes = bytes;
}

void Collector::on_fetch(std::uint64_t id, SimTime t) {
  CommandRecord& r = rec(id);
  sim_check(t >= r.submit, "fetch before submit on command ", id);
  r.fetch = t;
}

void Collector::on_fw_done(std::uint64_t id, SimTime t) {
  CommandRecord& r = rec(id);
  sim_check(t >= r.fetch, "fw_done before fetch on command ", id);
  r.fw_done = t;
}

void Collector::on_complete(std::uint64_t id, SimTime t, bool ok) {
  CommandRecord& r = rec(id);
  sim_check(t >= r.fw_done && t >= r.submit,
            "completion timestamp inversion on command ", id);
  r.complete = t;
  r.ok = ok;
  r.done = true;
}

void Collector::clear() {
  records_.clear();
  host_read_bytes_ = 0;
  host_write_bytes_ = 0;
}

Summary Collector::summarize(bool ramp_exclude) const {
  Summary s;
  std::vector<const CommandRecord*> done;
  done.reserve(records_.size());
  for (const auto& r : records_) {
    if (r.done) {
      done.push_back(&r);
    }
  }
  std::size_t skip = 0;
  if (ramp_exclude) {
    skip = std::max<std::size_t>(done.size() / 10, 100);
    if (skip >= done.size()) {
      skip = 0;
    }
  }
  const std::size_t n = done.size() - skip;
  s.host_read_bytes = host_read_bytes_;
  s.host_write_bytes = host_write_bytes_;
  if (n == 0) {
    return s;
  }
  s.empty = false;
  s.commands = n;

  std::vector<double> lat;
  lat.reserve(n);
  SimTime first_submit = ~SimTime{0};
  SimTime last_complete = 0;
  std::uint64_t bytes = 0;
  double queue_sum = 0.0, fw_sum = 0.0, post_sum = 0.0;
  for (std::size_t i = skip; i < done.size(); ++i) {
    const CommandRecord& r = *done[i];
    lat.push_back(to_us(r.complete - r.submit));
    first_submit = std::min(first_submit, r.submit);
    last_complete = std::max(last_complete, r.complete);
    bytes += r.bytes;
    queue_sum += to_us(r.fetch - r.submit);
    fw_sum += to_us(r.fw_done - r.fetch);
    post_sum += to_us(r.complete - r.fw_done);
    if (!r.ok) {
      ++s.errors;
    }
  }
  std::sort(lat.begin(), lat.end());
  auto pct = [&](double p) {
    const std::size_t idx = static_cast<std::size_t>(
        std::max<double>(0.0, std::ceil(p * static_cast<double>(lat.size())) - 1));
    return lat[std::min(idx, lat.size() - 1)];
  };
  double sum = 0.0;
  for (double v : lat) {
    sum += v;
  }
  s.lat_mean_us = sum / static_cast<double>(lat.size());
  s.lat_p50_us = pct(0.50);
  s.lat_p95_us = pct(0.95);
  s.lat_p99_us = pct(0.99);
  s.stage_queue_us = queue_sum / static_cast<double>(n);
  s.stage_fw_us = fw_sum / static_cast<double>(n);
  s.stage_post_us = post_sum / static_cast<double>(n);
  s.span_us = to_us(last_complete - first_submit);
  if (s.span_us > 0.0) {
    s.bandwidth_mbps = static_cast<double>(bytes) / s.span_us;  // B/us == MB/s
    s.iops = static_cast<double>(n) / s.span_us * 1e6;
  }
  return s;
}

}  // namespace vssd::stats
