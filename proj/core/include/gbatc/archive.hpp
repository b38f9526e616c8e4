#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gbatc/codec.hpp"
#include "gbatc/field.hpp"
#include "gbatc/guarantee.hpp"
#include "gbatc/linalg.hpp"
#include "gbatc/predictors.hpp"

namespace gbatc {

inline constexpr std::array<char, 4> kArchiveMagic{'G', 'B', 'A', 'T'};
inline constexpr std::uint16_t kArchiveVersion = 1;

// Everything needed to interpret the remaining sections, stored as JSON.
struct ArchiveHeader {
  FieldDims dims;
  std::vector<std::string> species_names;
  BlockGeometry geometry;
  PredictorKind predictor = PredictorKind::kZero;
  std::string predictor_spec;  // as given on the command line, e.g. "pca:2"
  BoundMode bound_mode = BoundMode::kNrmse;
  double bound_value = 0.0;
  std::vector<double> tau;               // per species
  std::vector<double> coefficient_bin;   // per species
  double latent_bin = 1.0;
  int latent_bins = 4096;
  Schedule schedule = Schedule::kStepwise;
  bool truncated_bases = false;
  std::uint64_t seed = 0;
  std::uint64_t block_count = 0;
  // Free-form run configuration (JSON text) for reproduction.
  std::string config;

  friend bool operator==(const ArchiveHeader&, const ArchiveHeader&) = default;
};

// Quantized latents, Huffman coded with their own codebook.
struct LatentSection {
  std::uint64_t count = 0;
  std::uint32_t length = 0;
  Codebook codebook;
  BitStream stream;

  friend bool operator==(const LatentSection&, const LatentSection&) = default;
};

// One residual basis as stored: float32 columns, optionally only those some
// record selects (`present` marks them; empty means all D).
struct BasisSection {
  std::size_t dimension = 0;
  std::vector<std::uint8_t> present;
  Matrix vectors;  // D x D; absent columns are zero

  friend bool operator==(const BasisSection&, const BasisSection&) = default;
};

// Records for every (block, species) pair, block-major: index bitmaps in one
// stream, Huffman-coded coefficients in another.
struct RecordSection {
  Codebook codebook;
  BitStream indices;
  BitStream coefficients;

  friend bool operator==(const RecordSection&, const RecordSection&) = default;
};

struct ArchiveContents {
  ArchiveHeader header;
  std::vector<std::uint8_t> predictor;
  LatentSection latents;
  std::vector<BasisSection> bases;
  RecordSection records;

  friend bool operator==(const ArchiveContents&, const ArchiveContents&) = default;
};

enum class SectionTag : std::uint32_t {
  kHeader = 0x44414548,     // "HEAD"
  kPredictor = 0x44455250,  // "PRED"
  kLatents = 0x4E54414C,    // "LATN"
  kBases = 0x45534142,      // "BASE"
  kRecords = 0x53434552,    // "RECS"
};

std::string to_string(SectionTag tag);

struct SectionEntry {
  SectionTag tag;
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
  std::uint32_t crc = 0;
};

struct SizeReport {
  std::uint64_t raw_bytes = 0;  // S*T*H*W float32 values
  std::uint64_t table_bytes = 0;  // magic, version, section table and its CRC
  std::vector<std::pair<std::string, std::uint64_t>> sections;

  std::uint64_t compressed_bytes() const;
};

// raw / compressed. Zero compressed size -> kInvalidInput.
double compression_ratio(const SizeReport& report);

std::size_t table_size(std::size_t section_count);

std::vector<std::uint8_t> write_archive(const ArchiveContents& contents);
// Checks magic, version, table CRC, section bounds, every section CRC, and
// that all required sections are present (kValidation otherwise).
ArchiveContents read_archive(std::span<const std::uint8_t> bytes);
// Parses only the table (checksummed) without decoding sections.
std::vector<SectionEntry> read_section_table(std::span<const std::uint8_t> bytes);

SizeReport size_report(std::span<const std::uint8_t> archive, const FieldDims& dims);

// Basis section helpers.
BasisSection store_basis(const ResidualBasis& basis, std::span<const std::uint8_t> present = {});
ResidualBasis load_basis(const BasisSection& section, int species);

}  // namespace gbatc
