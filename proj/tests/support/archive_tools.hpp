#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gbatc/archive.hpp"
#include "gbatc/bytes.hpp"

namespace gbatc::archive_tools {

// A well-formed archive (valid table and checksums) with one section removed.
inline std::vector<std::uint8_t> without_section(std::span<const std::uint8_t> bytes, SectionTag drop) {
  const auto entries = read_section_table(bytes);
  std::vector<SectionEntry> kept;
  for (const auto& e : entries) {
    if (e.tag != drop) kept.push_back(e);
  }
  ByteWriter w;
  for (char c : kArchiveMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u16(kArchiveVersion);
  w.u16(static_cast<std::uint16_t>(kept.size()));
  std::uint64_t offset = table_size(kept.size());
  for (const auto& e : kept) {
    w.u32(static_cast<std::uint32_t>(e.tag));
    w.u64(offset);
    w.u64(e.length);
    w.u32(e.crc);
    offset += e.length;
  }
  w.u32(crc32(w.data()));
  for (const auto& e : kept) w.bytes(bytes.subspan(static_cast<std::size_t>(e.offset), static_cast<std::size_t>(e.length)));
  return w.take();
}

}  // namespace gbatc::archive_tools
