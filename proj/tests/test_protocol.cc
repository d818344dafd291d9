#include <doctest.h>

#include <random>
#include <vector>

#include "vssd/hil/protocol.hh"

using namespace vssd;
using namespace vssd::hil;

TEST_CASE("submission entries encode to exactly 64 bytes and round-trip") {
  SubmissionEntry e;
  e.opcode = kOpWrite;
  e.sgl = true;
  e.cid = 0x1234;
  e.nsid = 7;
  e.mptr = 0xdeadbeef000;
  e.prp1 = 0x1000;
  e.prp2 = 0x2000;
  e.slba = 0x123456789a;
  e.length = 65536;
  e.count = 42;
  const auto raw = e.encode();
  CHECK(raw.size() == 64);
  const SubmissionEntry d = SubmissionEntry::decode(raw);
  CHECK(d.opcode == e.opcode);
  CHECK(d.sgl == e.sgl);
  CHECK(d.cid == e.cid);
  CHECK(d.nsid == e.nsid);
  CHECK(d.mptr == e.mptr);
  CHECK(d.prp1 == e.prp1);
  CHECK(d.prp2 == e.prp2);
  CHECK(d.slba == e.slba);
  CHECK(d.length == e.length);
  CHECK(d.count == e.count);
}

TEST_CASE("completion entries encode to exactly 16 bytes with the phase bit") {
  CompletionEntry e;
  e.result = 99;
  e.sq_head = 12;
  e.sq_id = 3;
  e.cid = 0xbeef;
  e.status = kStatusLbaOutOfRange;
  e.phase = true;
  const auto raw = e.encode();
  CHECK(raw.size() == 16);
  CompletionEntry d = CompletionEntry::decode(raw);
  CHECK(d.phase);
  CHECK(d.status == kStatusLbaOutOfRange);
  CHECK(d.cid == e.cid);
  CHECK(d.sq_head == e.sq_head);
  e.phase = false;
  CHECK(!CompletionEntry::decode(e.encode()).phase);
}

namespace {

constexpr std::uint64_t kPage = HostMemory::kPageBytes;

/// Host-side PRP construction mirroring driver behavior: data pages
/// contiguous from `base`, chained list pages at `list_base`.
PrpList build_prp(HostMemory& mem, std::uint64_t base, std::uint64_t list_base,
                  std::uint64_t total) {
  PrpList prp;
  prp.prp1 = base;
  const std::uint64_t first = std::min(total, kPage - base % kPage);
  std::uint64_t remaining = total - first;
  if (remaining == 0) {
    return prp;
  }
  std::uint64_t next_data = (base / kPage + 1) * kPage;
  if (remaining <= kPage) {
    prp.prp2 = next_data;
    return prp;
  }
  prp.prp2 = list_base;
  std::uint64_t entries = (remaining + kPage - 1) / kPage;
  std::uint64_t list = list_base;
  mem.allocate(list, kPage);
  while (entries > 0) {
    const bool chains = entries > 512;
    const std::uint64_t n = chains ? 511 : entries;
    for (std::uint64_t i = 0; i < n; ++i) {
      mem.write_u64(list + i * 8, next_data);
      next_data += kPage;
    }
    if (chains) {
      mem.allocate(list + kPage, kPage);
      mem.write_u64(list + 511 * 8, list + kPage);
      list += kPage;
    }
    entries -= n;
  }
  return prp;
}

/// Brute-force page walker: expected segments from first principles.
std::vector<Segment> expected_segments(std::uint64_t base, std::uint64_t total) {
  std::vector<Segment> out;
  std::uint64_t addr = base;
  std::uint64_t left = total;
  while (left > 0) {
    const std::uint64_t len = std::min(left, kPage - addr % kPage);
    out.push_back(Segment{addr, static_cast<std::uint32_t>(len)});
    left -= len;
    addr = (addr / kPage + 1) * kPage;
  }
  return out;
}

}  // namespace

TEST_CASE("PRP traversal: aligned single page") {
  HostMemory mem;
  const auto r = traverse_pointer_list(mem, PrpList{0x10000, 0}, 4096);
  CHECK(r.error == WalkError::none);
  REQUIRE(r.segments.size() == 1);
  CHECK(r.segments[0].addr == 0x10000);
  CHECK(r.segments[0].len == 4096);
  CHECK(r.list_pages_fetched == 0);
}

TEST_CASE("PRP traversal: 16KB uses a 3-entry list") {
  HostMemory mem;
  const auto prp = build_prp(mem, 0x10000, 0x90000, 16384);
  const auto r = traverse_pointer_list(mem, prp, 16384);
  CHECK(r.error == WalkError::none);
  CHECK(r.segments.size() == 4);
  CHECK(r.list_pages_fetched == 1);
  CHECK(r.segments == expected_segments(0x10000, 16384));
}

TEST_CASE("PRP traversal: 3MB chains one extra list page") {
  HostMemory mem;
  const std::uint64_t total = std::uint64_t{3} << 20;
  const auto prp = build_prp(mem, 0x100000, 0x4000000, total);
  const auto r = traverse_pointer_list(mem, prp, total);
  CHECK(r.error == WalkError::none);
  CHECK(r.segments.size() == 768);
  CHECK(r.list_pages_fetched == 2);
  CHECK(r.segments == expected_segments(0x100000, total));
}

TEST_CASE("PRP traversal: randomized lengths against the page walker") {
  HostMemory mem;
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const std::uint64_t total = 512 + rng() % (std::uint64_t{4} << 20);
    const std::uint64_t offset = (rng() % 8) * 512;  // sector-aligned prp1
    const std::uint64_t base = 0x10000 + offset;
    const auto prp = build_prp(mem, base, 0x10000000, total);
    const auto r = traverse_pointer_list(mem, prp, total);
    REQUIRE(r.error == WalkError::none);
    const auto want = expected_segments(base, total);
    REQUIRE(r.segments.size() == want.size());
    CHECK(r.segments == want);
    // Disjoint, ordered, exact partition.
    std::uint64_t sum = 0;
    for (std::size_t i = 0; i < r.segments.size(); ++i) {
      sum += r.segments[i].len;
      if (i > 0) {
        CHECK(r.segments[i - 1].addr + r.segments[i - 1].len <=
              r.segments[i].addr);
      }
    }
    CHECK(sum == total);
  }
}

TEST_CASE("PRP faults: short list and unaligned entries") {
  HostMemory mem;
  CHECK(traverse_pointer_list(mem, PrpList{0, 0}, 4096).error ==
        WalkError::short_list);
  // 8KB needs prp2; zero prp2 is short.
  CHECK(traverse_pointer_list(mem, PrpList{0x10000, 0}, 8192).error ==
        WalkError::short_list);
  // Unaligned direct prp2.
  CHECK(traverse_pointer_list(mem, PrpList{0x10000, 0x20004}, 8192).error ==
        WalkError::unaligned);
  // Unaligned list pointer.
  CHECK(traverse_pointer_list(mem, PrpList{0x10000, 0x20008}, 40960).error ==
        WalkError::unaligned);
  // List with an unaligned entry.
  mem.allocate(0x30000, kPage);
  mem.write_u64(0x30000, 0x40004);
  CHECK(traverse_pointer_list(mem, PrpList{0x10000, 0x30000}, 40960).error ==
        WalkError::unaligned);
  // List with a null entry reads as short.
  mem.allocate(0x50000, kPage);
  mem.write_u64(0x50000, 0x60000);
  mem.write_u64(0x50008, 0);
  CHECK(traverse_pointer_list(mem, PrpList{0x10000, 0x50000}, 40960).error ==
        WalkError::short_list);
}

TEST_CASE("PRDT traversal") {
  HostMemory mem;
  const std::uint64_t table = 0x80000;
  mem.allocate(table, kPage);
  for (int i = 0; i < 4; ++i) {
    mem.write_u64(table + std::uint64_t(i) * 16, 0x100000 + std::uint64_t(i) * kPage);
    mem.write_u64(table + std::uint64_t(i) * 16 + 8, kPage);
  }
  const auto r = traverse_pointer_list(mem, PrdtList{table, 4}, 3 * kPage + 512);
  CHECK(r.error == WalkError::none);
  REQUIRE(r.segments.size() == 4);
  CHECK(r.segments[3].len == 512);
  // Short table.
  const auto bad = traverse_pointer_list(mem, PrdtList{table, 2}, 3 * kPage);
  CHECK(bad.error == WalkError::short_list);
}

TEST_CASE("single contiguous SGL descriptor") {
  HostMemory mem;
  const auto r = traverse_pointer_list(mem, SglContiguous{0x7000, 1 << 20},
                                       std::uint64_t{1} << 20);
  CHECK(r.error == WalkError::none);
  std::uint64_t sum = 0;
  for (const auto& s : r.segments) {
    sum += s.len;
  }
  CHECK(sum == std::uint64_t{1} << 20);
  CHECK(traverse_pointer_list(mem, SglContiguous{0x7000, 4096}, 8192).error ==
        WalkError::short_list);
}

TEST_CASE("host memory faults on unbacked reads") {
  HostMemory mem;
  std::byte buf[8];
  CHECK_THROWS_AS(mem.read(0x123456, buf), SimFault);
  mem.allocate(0x123000, 4096);
  mem.read(0x123456, buf);  // now backed
  mem.write(0x42, std::span<const std::byte>(buf, 8));  // host writes auto-back
  CHECK(mem.backed(0x40, 16));
}
