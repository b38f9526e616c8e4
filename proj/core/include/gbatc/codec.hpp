#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "gbatc/bytes.hpp"

namespace gbatc {

// ---------------------------------------------------------------------------
// Uniform scalar quantizer. Bin index = round-half-to-even(v / d); the
// reconstruction index * d is the centre of [index*d - d/2, index*d + d/2),
// so the dequantization error never exceeds d/2.

std::int64_t quantize(double value, double bin);
inline double dequantize(std::int64_t index, double bin) { return static_cast<double>(index) * bin; }

std::vector<std::int64_t> quantize(std::span<const double> values, double bin);
std::vector<double> dequantize(std::span<const std::int64_t> indices, double bin);

// ---------------------------------------------------------------------------
// Bit-level I/O, MSB-first within each byte.

struct BitStream {
  std::vector<std::uint8_t> bytes;
  std::uint64_t bit_length = 0;

  // Number of zero bits appended to fill the final byte.
  std::uint8_t padding() const {
    return static_cast<std::uint8_t>(bytes.size() * 8 - bit_length);
  }

  // u64 bit_length | u8 padding | ceil(bit_length / 8) bytes.
  void serialize(ByteWriter& out) const;
  static BitStream deserialize(ByteReader& in);

  friend bool operator==(const BitStream&, const BitStream&) = default;
};

class BitWriter {
 public:
  void put_bit(bool bit);
  // Writes the low `count` bits of `value`, most significant first.
  void put_bits(std::uint64_t value, int count);
  std::uint64_t bit_length() const { return stream_.bit_length; }
  BitStream finish() { return std::move(stream_); }

 private:
  BitStream stream_;
};

class BitReader {
 public:
  explicit BitReader(const BitStream& stream) : stream_(stream) {}

  // Throws ErrorKind::kDecoding when reading past bit_length.
  bool get_bit();
  std::uint64_t get_bits(int count);
  std::uint64_t position() const { return pos_; }
  std::uint64_t remaining() const { return stream_.bit_length - pos_; }

 private:
  const BitStream& stream_;
  std::uint64_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Canonical Huffman code over int64 symbols.

struct CodeEntry {
  std::int64_t symbol = 0;
  std::uint8_t length = 0;
  std::uint64_t code = 0;
};

class Codebook {
 public:
  Codebook() = default;
  // Builds canonical codes from (symbol, length) pairs. Lengths must satisfy
  // the Kraft inequality; otherwise throws ErrorKind::kCorruption.
  static Codebook from_lengths(std::vector<std::pair<std::int64_t, std::uint8_t>> lengths);

  // Entries in canonical order: by length, then by symbol.
  const std::vector<CodeEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const CodeEntry* find(std::int64_t symbol) const;
  std::uint8_t length_of(std::int64_t symbol) const;

  // Kraft sum of the code lengths; <= 1 for any valid codebook.
  double kraft_sum() const;

  // Length table only: varint count, then per symbol (ascending) a zigzag
  // varint delta from the previous symbol and a u8 length.
  void serialize(ByteWriter& out) const;
  static Codebook deserialize(ByteReader& in);

  // Decodes one symbol from the reader.
  std::int64_t decode_one(BitReader& reader) const;

  friend bool operator==(const Codebook& a, const Codebook& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
      if (a.entries_[i].symbol != b.entries_[i].symbol ||
          a.entries_[i].length != b.entries_[i].length) {
        return false;
      }
    }
    return true;
  }

 private:
  void build_tables();

  std::vector<CodeEntry> entries_;
  std::map<std::int64_t, std::size_t> by_symbol_;
  // Canonical decoding tables indexed by code length.
  std::vector<std::uint64_t> first_code_;
  std::vector<std::size_t> first_index_;
  std::vector<std::size_t> count_;
};

using FrequencyTable = std::map<std::int64_t, std::uint64_t>;

FrequencyTable count_frequencies(std::span<const std::int64_t> symbols);

// Optimal prefix code lengths for the given positive counts. A single-symbol
// alphabet gets a 1-bit code. Empty table -> ErrorKind::kInvalidInput.
Codebook huffman_build(const FrequencyTable& frequencies);

// Unknown symbol -> ErrorKind::kEncoding.
void encode_symbols(BitWriter& out, std::span<const std::int64_t> symbols, const Codebook& book);
BitStream encode_stream(std::span<const std::int64_t> symbols, const Codebook& book);
// Truncated stream -> ErrorKind::kDecoding.
std::vector<std::int64_t> decode_stream(const BitStream& bits, const Codebook& book,
                                        std::size_t count);

// ---------------------------------------------------------------------------
// Basis index sets as the shortest bitmap prefix that still contains every
// selected index, preceded by its length.

struct IndexPrefix {
  std::uint32_t length = 0;        // max(I) + 1, or 0 for the empty set
  std::vector<std::uint8_t> bits;  // `length` entries of 0/1
};

// Indices must be < dimension; otherwise ErrorKind::kValidation.
IndexPrefix shortest_prefix(std::span<const std::uint32_t> indices, std::size_t dimension);

// Width of the length field for a basis of `dimension` vectors.
int index_length_bits(std::size_t dimension);

void encode_indices(BitWriter& out, std::span<const std::uint32_t> indices, std::size_t dimension);
// Returns indices in ascending order. A length field > dimension is
// ErrorKind::kCorruption.
std::vector<std::uint32_t> decode_indices(BitReader& in, std::size_t dimension);

}  // namespace gbatc
