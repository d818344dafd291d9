#include "vssd/device.hh"

#include <algorithm>

namespace vssd {

Device::Device(const DeviceConfig& cfg) : cfg_(cfg) {
  backend_ = std::make_unique<flash::Backend>(engine_, cfg_.geometry,
                                              cfg_.flash_timing,
                                              cfg_.data_emulation);
  backend_->enable_log(cfg_.transaction_log);
  dram_ = std::make_unique<dram::Dram>(cfg_.dram);
  ftl_ = std::make_unique<ftl::Ftl>(engine_, *backend_, cfg_.ftl);
  icl::Config icl_cfg = cfg_.icl;
  icl_cfg.content = cfg_.data_emulation;
  icl_ = std::make_unique<icl::Icl>(engine_, *dram_, *ftl_, icl_cfg);
  hil::InterfaceConfig if_cfg = cfg_.interface;
  if_cfg.content = cfg_.data_emulation;
  hil_ = std::make_unique<hil::HostInterface>(engine_, mem_, *icl_, *ftl_,
                                              *backend_, metrics_, if_cfg);
}

void Device::reset_measurement() {
  metrics_.clear();
  flash_base_ = backend_->counters();
  gc_base_ = ftl_->gc_stats();
  dram_bursts_base_ = dram_->bursts_total();
  dram_energy_base_ = dram_->energy_total_nj();
  icl_hits_base_ = icl_->stats().read_hits;
  icl_reads_base_ = icl_->stats().reads;
  measure_start_ = engine_.now();
}

stats::Summary Device::summarize(bool ramp_exclude) const {
  stats::Summary s = metrics_.summarize(ramp_exclude);

  const flash::Counters& fc = backend_->counters();
  s.flash_reads = fc.reads - flash_base_.reads;
  s.flash_programs = fc.programs - flash_base_.programs;
  s.flash_erases = fc.erases - flash_base_.erases;
  const std::uint64_t prog_bytes = fc.program_bytes - flash_base_.program_bytes;
  if (s.host_write_bytes > 0) {
    s.write_amplification = static_cast<double>(prog_bytes) /
                            static_cast<double>(s.host_write_bytes);
  }

  const ftl::GcStats& gs = ftl_->gc_stats();
  s.gc_invocations = gs.invocations - gc_base_.invocations;
  s.gc_migrated_pages = gs.migrated_pages - gc_base_.migrated_pages;
  s.gc_erased_superblocks = gs.erased_superblocks - gc_base_.erased_superblocks;

  std::uint32_t emin = ~std::uint32_t{0};
  std::uint32_t emax = 0;
  for (std::uint64_t sb = 0; sb < ftl_->layout().superblocks(); ++sb) {
    const std::uint32_t e = ftl_->erase_count(sb);
    emin = std::min(emin, e);
    emax = std::max(emax, e);
  }
  s.erase_min = emin == ~std::uint32_t{0} ? 0 : emin;
  s.erase_max = emax;

  const std::uint64_t reads = icl_->stats().reads - icl_reads_base_;
  const std::uint64_t hits = icl_->stats().read_hits - icl_hits_base_;
  s.cache_hit_ratio =
      reads == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(reads);

  s.dram_bursts = dram_->bursts_total() - dram_bursts_base_;
  const stats::EnergyTable& et = cfg_.energy;
  s.energy_flash_j = (static_cast<double>(s.flash_reads) * et.flash_read_nj +
                      static_cast<double>(s.flash_programs) * et.flash_program_nj +
                      static_cast<double>(s.flash_erases) * et.flash_erase_nj) *
                     1e-9;
  s.energy_dram_j = (dram_->energy_total_nj() - dram_energy_base_) * 1e-9;
  const double span_s =
      static_cast<double>(engine_.now() - measure_start_) / 1e12;
  s.energy_idle_j =
      (et.idle_flash_mw + et.idle_dram_mw + et.idle_controller_mw) * 1e-3 *
      span_s;
  s.energy_total_j = s.energy_flash_j + s.energy_dram_j + s.energy_idle_j;
  return s;
}

}  // namespace vssd
