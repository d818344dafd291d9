#pragma once

#include <cstdint>

namespace vssd::flash {

/// Physical coordinate into the storage complex. All indices zero-based.
struct Address {
  std::uint32_t channel = 0;
  std::uint32_t way = 0;  // package on the channel
  std::uint32_t die = 0;
  std::uint32_t plane = 0;
  std::uint32_t block = 0;
  std::uint32_t page = 0;

  bool operator==(const Address&) const = default;
};

/// Channel/way/die/plane/block/page topology of the storage complex.
struct Geometry {
  std::uint32_t channels = 1;
  std::uint32_t ways = 1;  // packages per channel
  std::uint32_t dies = 1;  // dies per package
  std::uint32_t planes = 1;
  std::uint32_t blocks = 1;  // blocks per plane
  std::uint32_t pages = 1;   // pages per block
  std::uint32_t page_bytes = 4096;

  std::uint64_t planes_total() const {
    return std::uint64_t{channels} * ways * dies * planes;
  }
  std::uint64_t pages_total() const { return planes_total() * blocks * pages; }
  std::uint64_t raw_bytes() const { return pages_total() * page_bytes; }

  bool contains(const Address& a) const {
    return a.channel < channels && a.way < ways && a.die < dies &&
           a.plane < planes && a.block < blocks && a.page < pages;
  }

  /// Linear index of the plane holding `a` (channel-major).
  std::uint64_t plane_index(const Address& a) const {
    return ((std::uint64_t{a.channel} * ways + a.way) * dies + a.die) * planes +
           a.plane;
  }

  /// Linear index of the block holding `a`.
  std::uint64_t block_index(const Address& a) const {
    return plane_index(a) * blocks + a.block;
  }

  /// Linear index of the physical page at `a`.
  std::uint64_t page_index(const Address& a) const {
    return block_index(a) * pages + a.page;
  }

  /// Packed physical page address, used on the OCSSD wire. Inverse of
  /// page_index() composed with the channel-major field order.
  std::uint64_t encode_ppa(const Address& a) const { return page_index(a); }

  Address decode_ppa(std::uint64_t ppa) const {
    Address a;
    a.page = static_cast<std::uint32_t>(ppa % pages);
    ppa /= pages;
    a.block = static_cast<std::uint32_t>(ppa % blocks);
    ppa /= blocks;
    a.plane = static_cast<std::uint32_t>(ppa % planes);
    ppa /= planes;
    a.die = static_cast<std::uint32_t>(ppa % dies);
    ppa /= dies;
    a.way = static_cast<std::uint32_t>(ppa % ways);
    ppa /= ways;
    a.channel = static_cast<std::uint32_t>(ppa);
    return a;
  }
};

}  // namespace vssd::flash
