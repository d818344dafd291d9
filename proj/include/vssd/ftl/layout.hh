#pragma once

#include <cstdint>

#include "vssd/flash/geometry.hh"

namespace vssd::ftl {

/// Which physical dimensions a super-page spans. Slots stripe channel-
/// fastest so consecutive pages of one super-page land on distinct
/// channels; the remaining dimensions form independent parallelism
/// groups. `none` collapses the super-page to a single page, i.e. pure
/// page-level mapping.
enum class Span : std::uint8_t { none, channel, channel_way, all };

/// Super-page / super-block coordinate system over a flash geometry.
///
///   super-block id  = group * blocks_per_group + block
///   sppn            = super-block id * rows + row
///
/// where `row` is the shared page offset across the group's elements.
struct Layout {
  flash::Geometry geo;
  Span span = Span::channel;
  std::uint32_t slots = 1;   // pages per super-page
  std::uint32_t groups = 1;  // parallelism groups
  std::uint32_t rows = 1;    // super-pages per super-block
  std::uint32_t blocks = 1;  // super-blocks per group

  static Layout make(const flash::Geometry& geo, Span span) {
    Layout l;
    l.geo = geo;
    l.span = span;
    const std::uint64_t all = geo.planes_total();
    switch (span) {
      case Span::none:
        l.slots = 1;
        break;
      case Span::channel:
        l.slots = geo.channels;
        break;
      case Span::channel_way:
        l.slots = geo.channels * geo.ways;
        break;
      case Span::all:
        l.slots = static_cast<std::uint32_t>(all);
        break;
    }
    l.groups = static_cast<std::uint32_t>(all / l.slots);
    l.rows = geo.pages;
    l.blocks = geo.blocks;
    return l;
  }

  std::uint64_t superblocks() const {
    return std::uint64_t{groups} * blocks;
  }
  std::uint64_t superpages() const { return superblocks() * rows; }
  std::uint64_t superpage_bytes() const {
    return std::uint64_t{slots} * geo.page_bytes;
  }

  std::uint32_t group_of_sb(std::uint64_t sb) const {
    return static_cast<std::uint32_t>(sb / blocks);
  }
  std::uint32_t block_of_sb(std::uint64_t sb) const {
    return static_cast<std::uint32_t>(sb % blocks);
  }
  std::uint64_t sb_of(std::uint32_t group, std::uint32_t block) const {
    return std::uint64_t{group} * blocks + block;
  }

  /// Physical address of one slot of one super-page row.
  flash::Address address_of(std::uint64_t sb, std::uint32_t row,
                            std::uint32_t slot) const {
    flash::Address a;
    a.block = block_of_sb(sb);
    a.page = row;
    std::uint32_t g = group_of_sb(sb);
    std::uint32_t s = slot;
    // Slot decodes the spanned prefix of (channel, way, die, plane),
    // channel fastest; the group decodes the remainder, also
    // channel-major order.
    switch (span) {
      case Span::none:
        a.channel = g % geo.channels;
        g /= geo.channels;
        a.way = g % geo.ways;
        g /= geo.ways;
        a.die = g % geo.dies;
        a.plane = g / geo.dies;
        break;
      case Span::channel:
        a.channel = s;
        a.way = g % geo.ways;
        g /= geo.ways;
        a.die = g % geo.dies;
        a.plane = g / geo.dies;
        break;
      case Span::channel_way:
        a.channel = s % geo.channels;
        a.way = s / geo.channels;
        a.die = g % geo.dies;
        a.plane = g / geo.dies;
        break;
      case Span::all:
        a.channel = s % geo.channels;
        s /= geo.channels;
        a.way = s % geo.ways;
        s /= geo.ways;
        a.die = s % geo.dies;
        a.plane = s / geo.dies;
        break;
    }
    return a;
  }
};

}  // namespace vssd::ftl
