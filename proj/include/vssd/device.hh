#pragma once

#include <memory>

#include "vssd/dram/dram.hh"
#include "vssd/flash/backend.hh"
#include "vssd/ftl/ftl.hh"
#include "vssd/hil/host_interface.hh"
#include "vssd/hil/host_memory.hh"
#include "vssd/icl/icl.hh"
#include "vssd/sim/engine.hh"
#include "vssd/stats/metrics.hh"

namespace vssd {

struct DeviceConfig {
  flash::Geometry geometry;
  flash::TimingParams flash_timing;
  dram::Config dram;
  icl::Config icl;
  ftl::Config ftl;
  hil::InterfaceConfig interface;
  stats::EnergyTable energy;
  bool data_emulation = true;
  bool transaction_log = false;
};

/// One simulator instance: the event engine plus the full device stack
/// and its virtual host memory, wired from a DeviceConfig.
class Device {
 public:
  explicit Device(const DeviceConfig& cfg);

  const DeviceConfig& config() const { return cfg_; }
  sim::Engine& engine() { return engine_; }
  hil::HostMemory& host_memory() { return mem_; }
  flash::Backend& backend() { return *backend_; }
  dram::Dram& dram() { return *dram_; }
  ftl::Ftl& ftl() { return *ftl_; }
  icl::Icl& icl() { return *icl_; }
  hil::HostInterface& hil() { return *hil_; }
  stats::Collector& metrics() { return metrics_; }

  /// Drop command records and snapshot device counters, so the next
  /// summarize() covers only what follows (used after preconditioning).
  void reset_measurement();

  stats::Summary summarize(bool ramp_exclude = true) const;

 private:
  DeviceConfig cfg_;
  sim::Engine engine_;
  hil::HostMemory mem_;
  std::unique_ptr<flash::Backend> backend_;
  std::unique_ptr<dram::Dram> dram_;
  std::unique_ptr<ftl::Ftl> ftl_;
  std::unique_ptr<icl::Icl> icl_;
  stats::Collector metrics_;
  std::unique_ptr<hil::HostInterface> hil_;

  flash::Counters flash_base_;
  ftl::GcStats gc_base_;
  std::uint64_t dram_bursts_base_ = 0;
  double dram_energy_base_ = 0.0;
  std::uint64_t icl_hits_base_ = 0;
  std::uint64_t icl_reads_base_ = 0;
  SimTime measure_start_ = 0;
};

}  // namespace vssd
