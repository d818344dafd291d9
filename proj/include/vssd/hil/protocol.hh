#pragma once

#include <array>
#include <cstdint>
#include <variant>
#include <vector>

#include "vssd/hil/host_memory.hh"

namespace vssd::hil {

// NVMe I/O opcodes (subset), plus device-defined vector opcodes carried
// over the same queue protocol for open-channel mode.
enum Opcode : std::uint8_t {
  kOpFlush = 0x00,
  kOpWrite = 0x01,
  kOpRead = 0x02,
  kOpVectorErase = 0x90,
  kOpVectorWrite = 0x91,
  kOpVectorRead = 0x92,
};

enum AdminOpcode : std::uint8_t {
  kAdminDeleteSq = 0x00,
  kAdminCreateSq = 0x01,
  kAdminDeleteCq = 0x04,
  kAdminCreateCq = 0x05,
  kAdminIdentify = 0x06,
  kAdminNsAttach = 0x15,
  kAdminChunkInfo = 0xe2,
};

enum Status : std::uint16_t {
  kStatusSuccess = 0x0000,
  kStatusInvalidOpcode = 0x0001,
  kStatusInvalidField = 0x0002,
  kStatusLbaOutOfRange = 0x0080,
  kStatusWritePointer = 0x00f0,  // out-of-order chunk write
  kStatusUnrecovered = 0x00f1,   // read of unwritten chunk page
};

/// 64-byte submission queue entry.
struct SubmissionEntry {
  std::uint8_t opcode = 0;
  bool sgl = false;  // data pointer is a single contiguous SGL descriptor
  std::uint16_t cid = 0;
  std::uint32_t nsid = 1;
  std::uint64_t mptr = 0;  // vector commands: PPA list pointer; PRDT addr
  std::uint64_t prp1 = 0;
  std::uint64_t prp2 = 0;
  std::uint64_t slba = 0;      // 512-byte sectors; inline PPA for vectors
  std::uint32_t length = 0;    // transfer bytes
  std::uint32_t count = 0;     // vector PPAs / PRDT entries / queue params

  static constexpr std::size_t kBytes = 64;
  std::array<std::byte, kBytes> encode() const;
  static SubmissionEntry decode(std::span<const std::byte> raw);
};

/// 16-byte completion queue entry; bit 0 of the status word is the
/// phase tag.
struct CompletionEntry {
  std::uint32_t result = 0;
  std::uint16_t sq_head = 0;
  std::uint16_t sq_id = 0;
  std::uint16_t cid = 0;
  std::uint16_t status = 0;  // status[15:1], phase in bit 0
  bool phase = false;

  static constexpr std::size_t kBytes = 16;
  std::array<std::byte, kBytes> encode() const;
  static CompletionEntry decode(std::span<const std::byte> raw);
};

/// One contiguous piece of host memory in a data transfer.
struct Segment {
  std::uint64_t addr = 0;
  std::uint32_t len = 0;

  bool operator==(const Segment&) const = default;
};

struct PrpList {
  std::uint64_t prp1 = 0;
  std::uint64_t prp2 = 0;
};

struct PrdtList {
  std::uint64_t table_addr = 0;  // packed (addr u64, len u32, rsvd u32)
  std::uint32_t entries = 0;
};

struct SglContiguous {
  std::uint64_t addr = 0;
  std::uint64_t len = 0;
};

using PointerList = std::variant<PrpList, PrdtList, SglContiguous>;

enum class WalkError : std::uint8_t {
  none,
  short_list,   // list does not cover the transfer length
  unaligned,    // list entry breaks the 4KB alignment rule
};

struct WalkResult {
  std::vector<Segment> segments;
  std::uint32_t list_pages_fetched = 0;  // chained PRP list pages, PRDT reads
  WalkError error = WalkError::none;
};

/// Resolve a pointer list into ordered host segments totalling
/// `total_bytes`. PRP rules: prp1 may carry an offset; two pages or
/// fewer use prp2 directly; otherwise prp2 points at a chained list of
/// 4KB-aligned page pointers, 512 entries per page with the last entry
/// chaining when the list overflows.
WalkResult traverse_pointer_list(const HostMemory& mem, const PointerList& list,
                                 std::uint64_t total_bytes);

}  // namespace vssd::hil
