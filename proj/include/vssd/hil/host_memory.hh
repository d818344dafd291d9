#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "vssd/util/fault.hh"

namespace vssd::hil {

/// Virtual host system memory: a sparse map of 4KB pages. The harness
/// allocates buffers; device-side reads of unbacked addresses fault,
/// mirroring a DMA to nowhere.
class HostMemory {
 public:
  static constexpr std::uint64_t kPageBytes = 4096;

  void allocate(std::uint64_t addr, std::uint64_t len) {
    for (std::uint64_t p = addr / kPageBytes;
         p <= (addr + (len ? len - 1 : 0)) / kPageBytes; ++p) {
      pages_.try_emplace(p);
    }
  }

  bool backed(std::uint64_t addr, std::uint64_t len) const {
    if (len == 0) {
      return true;
    }
    for (std::uint64_t p = addr / kPageBytes; p <= (addr + len - 1) / kPageBytes;
         ++p) {
      if (pages_.find(p) == pages_.end()) {
        return false;
      }
    }
    return true;
  }

  void write(std::uint64_t addr, std::span<const std::byte> data) {
    std::uint64_t off = 0;
    while (off < data.size()) {
      Page& pg = page_for(addr + off, true);
      const std::uint64_t in_page = (addr + off) % kPageBytes;
      const std::uint64_t n =
          std::min<std::uint64_t>(kPageBytes - in_page, data.size() - off);
      std::copy(data.begin() + static_cast<std::ptrdiff_t>(off),
                data.begin() + static_cast<std::ptrdiff_t>(off + n),
                pg.bytes.begin() + static_cast<std::ptrdiff_t>(in_page));
      off += n;
    }
  }

  void read(std::uint64_t addr, std::span<std::byte> out) const {
    std::uint64_t off = 0;
    while (off < out.size()) {
      const Page& pg = const_cast<HostMemory*>(this)->page_for(addr + off, false);
      const std::uint64_t in_page = (addr + off) % kPageBytes;
      const std::uint64_t n =
          std::min<std::uint64_t>(kPageBytes - in_page, out.size() - off);
      std::copy(pg.bytes.begin() + static_cast<std::ptrdiff_t>(in_page),
                pg.bytes.begin() + static_cast<std::ptrdiff_t>(in_page + n),
                out.begin() + static_cast<std::ptrdiff_t>(off));
      off += n;
    }
  }

  std::uint64_t read_u64(std::uint64_t addr) const {
    std::byte raw[8];
    read(addr, raw);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) {
      v = (v << 8) | std::to_integer<std::uint64_t>(raw[i]);
    }
    return v;
  }

  void write_u64(std::uint64_t addr, std::uint64_t v) {
    std::byte raw[8];
    for (int i = 0; i < 8; ++i) {
      raw[i] = std::byte(v >> (8 * i) & 0xff);
    }
    write(addr, raw);
  }

 private:
  struct Page {
    std::vector<std::byte> bytes = std::vector<std::byte>(kPageBytes);
  };

  Page& page_for(std::uint64_t addr, bool create) {
    const std::uint64_t p = addr / kPageBytes;
    auto it = pages_.find(p);
    if (it == pages_.end()) {
      if (!create) {
        sim_fault("host-memory fault: unbacked address ", addr);
      }
      it = pages_.try_emplace(p).first;
    }
    return it->second;
  }

  std::unordered_map<std::uint64_t, Page> pages_;
};

}  // namespace vssd::hil
