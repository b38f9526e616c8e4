#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "gbatc/field.hpp"

namespace gbatc {

// Raw field files are flat little-endian float32 in FieldDataset order, with a
// text sidecar at "<path>.hdr":
//
//   gbatc-field 1
//   species <S>
//   timesteps <T>
//   height <H>
//   width <W>
//   names <name_0> ... <name_{S-1}>
//   remainder_filled <0|1>
std::filesystem::path sidecar_path(const std::filesystem::path& data_path);

FieldDataset read_field(const std::filesystem::path& data_path);
void write_field(const std::filesystem::path& data_path, const FieldDataset& dataset);

// Rounds every value through float32, the on-disk precision.
FieldDataset round_to_storage(const FieldDataset& dataset);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
// Writes to a sibling temporary and renames over the target, so a failure
// never leaves a partial file behind.
void write_bytes_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace gbatc
