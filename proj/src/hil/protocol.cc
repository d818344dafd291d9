#include "vssd/hil/protocol.hh"

#include <algorithm>

namespace vssd::hil {

namespace {

void put_u16(std::span<std::byte> out, std::size_t at, std::uint16_t v) {
  out[at] = std::byte(v & 0xff);
  out[at + 1] = std::byte(v >> 8 & 0xff);
}

void put_u32(std::span<std::byte> out, std::size_t at, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out[at + i] = std::byte(v >> (8 * i) & 0xff);
  }
}

void put_u64(std::span<std::byte> out, std::size_t at, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out[at + i] = std::byte(v >> (8 * i) & 0xff);
  }
}

std::uint16_t get_u16(std::span<const std::byte> in, std::size_t at) {
  return static_cast<std::uint16_t>(std::to_integer<std::uint16_t>(in[at]) |
                                    std::to_integer<std::uint16_t>(in[at + 1])
                                        << 8);
}

std::uint32_t get_u32(std::span<const std::byte> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) {
    v = v << 8 | std::to_integer<std::uint32_t>(in[at + i]);
  }
  return v;
}

std::uint64_t get_u64(std::span<const std::byte> in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) {
    v = v << 8 | std::to_integer<std::uint64_t>(in[at + i]);
  }
  return v;
}

}  // namespace

std::array<std::byte, SubmissionEntry::kBytes> SubmissionEntry::encode() const {
  std::array<std::byte, kBytes> raw{};
  raw[0] = std::byte(opcode);
  raw[1] = std::byte(sgl ? 1 : 0);
  put_u16(raw, 2, cid);
  put_u32(raw, 4, nsid);
  put_u64(raw, 16, mptr);
  put_u64(raw, 24, prp1);
  put_u64(raw, 32, prp2);
  put_u64(raw, 40, slba);
  put_u32(raw, 48, length);
  put_u32(raw, 52, count);
  return raw;
}

SubmissionEntry SubmissionEntry::decode(std::span<const std::byte> raw) {
  SubmissionEntry e;
  e.opcode = std::to_integer<std::uint8_t>(raw[0]);
  e.sgl = (std::to_integer<std::uint8_t>(raw[1]) & 1) != 0;
  e.cid = get_u16(raw, 2);
  e.nsid = get_u32(raw, 4);
  e.mptr = get_u64(raw, 16);
  e.prp1 = get_u64(raw, 24);
  e.prp2 = get_u64(raw, 32);
  e.slba = get_u64(raw, 40);
  e.length = get_u32(raw, 48);
  e.count = get_u32(raw, 52);
  return e;
}

std::array<std::byte, CompletionEntry::kBytes> CompletionEntry::encode() const {
  std::array<std::byte, kBytes> raw{};
  put_u32(raw, 0, result);
  put_u16(raw, 8, sq_head);
  put_u16(raw, 10, sq_id);
  put_u16(raw, 12, cid);
  put_u16(raw, 14,
          static_cast<std::uint16_t>(status << 1 | (phase ? 1 : 0)));
  return raw;
}

CompletionEntry CompletionEntry::decode(std::span<const std::byte> raw) {
  CompletionEntry e;
  e.result = get_u32(raw, 0);
  e.sq_head = get_u16(raw, 8);
  e.sq_id = get_u16(raw, 10);
  e.cid = get_u16(raw, 12);
  const std::uint16_t sp = get_u16(raw, 14);
  e.phase = (sp & 1) != 0;
  e.status = static_cast<std::uint16_t>(sp >> 1);
  return e;
}

namespace {

constexpr std::uint64_t kPage = HostMemory::kPageBytes;
constexpr std::uint32_t kEntriesPerListPage = 512;

WalkResult walk_prp(const HostMemory& mem, const PrpList& prp,
                    std::uint64_t total) {
  WalkResult r;
  if (total == 0) {
    return r;
  }
  if (prp.prp1 == 0) {
    r.error = WalkError::short_list;
    return r;
  }
  const std::uint64_t first_len = std::min(total, kPage - prp.prp1 % kPage);
  r.segments.push_back(
      Segment{prp.prp1, static_cast<std::uint32_t>(first_len)});
  std::uint64_t remaining = total - first_len;
  if (remaining == 0) {
    return r;
  }
  if (remaining <= kPage) {
    if (prp.prp2 == 0) {
      r.error = WalkError::short_list;
      return r;
    }
    if (prp.prp2 % kPage != 0) {
      r.error = WalkError::unaligned;
      return r;
    }
    r.segments.push_back(
        Segment{prp.prp2, static_cast<std::uint32_t>(remaining)});
    return r;
  }
  // prp2 is a chained list of page pointers.
  std::uint64_t list = prp.prp2;
  while (remaining > 0) {
    if (list == 0) {
      r.error = WalkError::short_list;
      return r;
    }
    if (list % kPage != 0) {
      r.error = WalkError::unaligned;
      return r;
    }
    ++r.list_pages_fetched;
    const std::uint64_t needed = (remaining + kPage - 1) / kPage;
    const bool chains = needed > kEntriesPerListPage;
    const std::uint32_t data_entries =
        chains ? kEntriesPerListPage - 1
               : static_cast<std::uint32_t>(needed);
    for (std::uint32_t i = 0; i < data_entries; ++i) {
      const std::uint64_t entry = mem.read_u64(list + std::uint64_t{i} * 8);
      if (entry == 0) {
        r.error = WalkError::short_list;
        return r;
      }
      if (entry % kPage != 0) {
        r.error = WalkError::unaligned;
        return r;
      }
      const std::uint64_t len = std::min(remaining, kPage);
      r.segments.push_back(Segment{entry, static_cast<std::uint32_t>(len)});
      remaining -= len;
    }
    if (chains) {
      list = mem.read_u64(list + (kEntriesPerListPage - 1) * 8);
    } else {
      list = 0;
    }
  }
  return r;
}

WalkResult walk_prdt(const HostMemory& mem, const PrdtList& prdt,
                     std::uint64_t total) {
  WalkResult r;
  r.list_pages_fetched =
      static_cast<std::uint32_t>((std::uint64_t{prdt.entries} * 16 + kPage - 1) /
                                 kPage);
  std::uint64_t remaining = total;
  for (std::uint32_t i = 0; i < prdt.entries && remaining > 0; ++i) {
    const std::uint64_t base = prdt.table_addr + std::uint64_t{i} * 16;
    const std::uint64_t addr = mem.read_u64(base);
    const std::uint64_t len64 = mem.read_u64(base + 8) & 0xffffffffull;
    if (addr == 0 || len64 == 0) {
      r.error = WalkError::short_list;
      return r;
    }
    const std::uint64_t len = std::min(remaining, len64);
    r.segments.push_back(Segment{addr, static_cast<std::uint32_t>(len)});
    remaining -= len;
  }
  if (remaining > 0) {
    r.error = WalkError::short_list;
  }
  return r;
}

}  // namespace

WalkResult traverse_pointer_list(const HostMemory& mem, const PointerList& list,
                                 std::uint64_t total_bytes) {
  if (const auto* prp = std::get_if<PrpList>(&list)) {
    return walk_prp(mem, *prp, total_bytes);
  }
  if (const auto* prdt = std::get_if<PrdtList>(&list)) {
    return walk_prdt(mem, *prdt, total_bytes);
  }
  const auto& sgl = std::get<SglContiguous>(list);
  WalkResult r;
  if (sgl.len < total_bytes) {
    r.error = WalkError::short_list;
    return r;
  }
  std::uint64_t remaining = total_bytes;
  std::uint64_t addr = sgl.addr;
  while (remaining > 0) {
    const std::uint64_t len = std::min<std::uint64_t>(remaining, 1u << 20);
    r.segments.push_back(Segment{addr, static_cast<std::uint32_t>(len)});
    addr += len;
    remaining -= len;
  }
  return r;
}

}  // namespace vssd::hil
