#include "gbatc/codec.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <queue>

#include "gbatc/error.hpp"

namespace gbatc {
namespace {

constexpr const char* kModule = "codec";
constexpr int kMaxCodeLength = 63;

}  // namespace

std::int64_t quantize(double value, double bin) {
  if (!(bin > 0.0) || !std::isfinite(bin)) {
    throw Error(ErrorKind::kInvalidSpec, kModule, "bin size must be positive and finite");
  }
  if (!std::isfinite(value)) {
    throw Error(ErrorKind::kInvalidInput, kModule, "cannot quantize a non-finite value");
  }
  const double scaled = value / bin;
  if (std::fabs(scaled) >= 0x1.0p62) {
    throw Error(ErrorKind::kInvalidInput, kModule, "value too large for bin size");
  }
  // Default floating-point environment rounds to nearest, ties to even.
  return std::llrint(scaled);
}

std::vector<std::int64_t> quantize(std::span<const double> values, double bin) {
  std::vector<std::int64_t> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = quantize(values[i], bin);
  return out;
}

std::vector<double> dequantize(std::span<const std::int64_t> indices, double bin) {
  std::vector<double> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) out[i] = dequantize(indices[i], bin);
  return out;
}

// -- bits -------------------------------------------------------------------

void BitStream::serialize(ByteWriter& out) const {
  out.u64(bit_length);
  out.u8(padding());
  out.bytes(bytes);
}

BitStream BitStream::deserialize(ByteReader& in) {
  BitStream s;
  s.bit_length = in.u64();
  const std::uint8_t pad = in.u8();
  const std::uint64_t nbytes = (s.bit_length + 7) / 8;
  if (pad != nbytes * 8 - s.bit_length) {
    throw Error(ErrorKind::kCorruption, kModule, "bitstream padding count inconsistent with length");
  }
  if (nbytes > in.remaining()) {
    throw Error(ErrorKind::kTruncation, kModule, "bitstream shorter than its declared length");
  }
  auto b = in.bytes(static_cast<std::size_t>(nbytes));
  s.bytes.assign(b.begin(), b.end());
  return s;
}

void BitWriter::put_bit(bool bit) {
  const std::uint64_t pos = stream_.bit_length++;
  if (pos % 8 == 0) stream_.bytes.push_back(0);
  if (bit) stream_.bytes.back() |= static_cast<std::uint8_t>(0x80u >> (pos % 8));
}

void BitWriter::put_bits(std::uint64_t value, int count) {
  for (int i = count - 1; i >= 0; --i) put_bit(((value >> i) & 1u) != 0);
}

bool BitReader::get_bit() {
  if (pos_ >= stream_.bit_length) {
    throw Error(ErrorKind::kDecoding, kModule, "read past end of bitstream");
  }
  const std::uint64_t p = pos_++;
  return (stream_.bytes[static_cast<std::size_t>(p / 8)] & (0x80u >> (p % 8))) != 0;
}

std::uint64_t BitReader::get_bits(int count) {
  std::uint64_t v = 0;
  for (int i = 0; i < count; ++i) v = (v << 1) | (get_bit() ? 1u : 0u);
  return v;
}

// -- codebook ---------------------------------------------------------------

Codebook Codebook::from_lengths(std::vector<std::pair<std::int64_t, std::uint8_t>> lengths) {
  Codebook book;
  std::sort(lengths.begin(), lengths.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second < b.second : a.first < b.first;
  });
  book.entries_.reserve(lengths.size());
  for (const auto& [symbol, length] : lengths) {
    if (length == 0 || length > kMaxCodeLength) {
      throw Error(ErrorKind::kCorruption, kModule, "code length out of range");
    }
    book.entries_.push_back({symbol, length, 0});
  }
  book.build_tables();
  return book;
}

void Codebook::build_tables() {
  by_symbol_.clear();
  first_code_.assign(kMaxCodeLength + 2, 0);
  first_index_.assign(kMaxCodeLength + 2, 0);
  count_.assign(kMaxCodeLength + 2, 0);

  std::uint64_t code = 0;
  int prev_len = 0;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    CodeEntry& e = entries_[i];
    if (i > 0) ++code;
    code <<= (e.length - prev_len);
    prev_len = e.length;
    // Kraft violation: the code space at this length is exhausted.
    if (e.length < 64 && code >= (std::uint64_t{1} << e.length)) {
      throw Error(ErrorKind::kCorruption, kModule, "code lengths violate the Kraft inequality");
    }
    e.code = code;
    if (count_[e.length] == 0) {
      first_code_[e.length] = code;
      first_index_[e.length] = i;
    }
    ++count_[e.length];
    if (!by_symbol_.emplace(e.symbol, i).second) {
      throw Error(ErrorKind::kCorruption, kModule, "duplicate symbol in codebook");
    }
  }
}

const CodeEntry* Codebook::find(std::int64_t symbol) const {
  auto it = by_symbol_.find(symbol);
  return it == by_symbol_.end() ? nullptr : &entries_[it->second];
}

std::uint8_t Codebook::length_of(std::int64_t symbol) const {
  const CodeEntry* e = find(symbol);
  return e == nullptr ? 0 : e->length;
}

double Codebook::kraft_sum() const {
  double sum = 0.0;
  for (const CodeEntry& e : entries_) sum += std::ldexp(1.0, -e.length);
  return sum;
}

void Codebook::serialize(ByteWriter& out) const {
  out.varint(entries_.size());
  std::int64_t prev = 0;
  for (const auto& [symbol, idx] : by_symbol_) {
    out.svarint(symbol - prev);
    out.u8(entries_[idx].length);
    prev = symbol;
  }
}

Codebook Codebook::deserialize(ByteReader& in) {
  const std::uint64_t n = in.varint();
  // Each entry takes at least two bytes.
  if (n > in.remaining() / 2) {
    throw Error(ErrorKind::kCorruption, kModule, "codebook entry count exceeds section size");
  }
  std::vector<std::pair<std::int64_t, std::uint8_t>> lengths;
  lengths.reserve(static_cast<std::size_t>(n));
  std::int64_t symbol = 0;
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::int64_t delta = in.svarint();
    if (i > 0 && delta <= 0) {
      throw Error(ErrorKind::kCorruption, kModule, "codebook symbols not strictly ascending");
    }
    symbol += delta;
    lengths.emplace_back(symbol, in.u8());
  }
  return from_lengths(std::move(lengths));
}

std::int64_t Codebook::decode_one(BitReader& reader) const {
  std::uint64_t code = 0;
  for (int len = 1; len <= kMaxCodeLength; ++len) {
    code = (code << 1) | (reader.get_bit() ? 1u : 0u);
    if (count_[len] != 0 && code >= first_code_[len] && code - first_code_[len] < count_[len]) {
      return entries_[first_index_[len] + static_cast<std::size_t>(code - first_code_[len])].symbol;
    }
  }
  throw Error(ErrorKind::kDecoding, kModule, "invalid codeword");
}

FrequencyTable count_frequencies(std::span<const std::int64_t> symbols) {
  FrequencyTable freq;
  for (std::int64_t s : symbols) ++freq[s];
  return freq;
}

Codebook huffman_build(const FrequencyTable& frequencies) {
  std::vector<std::pair<std::int64_t, std::uint64_t>> leaves;
  for (const auto& [symbol, count] : frequencies) {
    if (count > 0) leaves.emplace_back(symbol, count);
  }
  if (leaves.empty()) {
    throw Error(ErrorKind::kInvalidInput, kModule, "frequency table has no positive counts");
  }
  if (leaves.size() == 1) return Codebook::from_lengths({{leaves[0].first, 1}});

  // Node ids: leaves 0..n-1 in ascending symbol order, internal nodes after.
  // Ties in weight are broken by id so the tree is deterministic.
  struct Item {
    std::uint64_t weight;
    std::size_t id;
    bool operator>(const Item& o) const {
      return weight != o.weight ? weight > o.weight : id > o.id;
    }
  };
  const std::size_t n = leaves.size();
  std::vector<std::size_t> parent(2 * n - 1, 0);
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  for (std::size_t i = 0; i < n; ++i) heap.push({leaves[i].second, i});
  std::size_t next = n;
  while (heap.size() > 1) {
    const Item a = heap.top();
    heap.pop();
    const Item b = heap.top();
    heap.pop();
    parent[a.id] = next;
    parent[b.id] = next;
    heap.push({a.weight + b.weight, next});
    ++next;
  }
  const std::size_t root = next - 1;
  std::vector<int> depth(2 * n - 1, 0);
  // Parents always have larger ids than children, so walk ids downward.
  for (std::size_t id = root; id-- > 0;) depth[id] = depth[parent[id]] + 1;

  std::vector<std::pair<std::int64_t, std::uint8_t>> lengths;
  lengths.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (depth[i] > kMaxCodeLength) {
      throw Error(ErrorKind::kEncoding, kModule, "Huffman code length exceeds 63 bits");
    }
    lengths.emplace_back(leaves[i].first, static_cast<std::uint8_t>(depth[i]));
  }
  return Codebook::from_lengths(std::move(lengths));
}

void encode_symbols(BitWriter& out, std::span<const std::int64_t> symbols, const Codebook& book) {
  for (std::int64_t s : symbols) {
    const CodeEntry* e = book.find(s);
    if (e == nullptr) {
      throw Error(ErrorKind::kEncoding, kModule, "symbol " + std::to_string(s) + " not in codebook");
    }
    out.put_bits(e->code, e->length);
  }
}

BitStream encode_stream(std::span<const std::int64_t> symbols, const Codebook& book) {
  BitWriter w;
  encode_symbols(w, symbols, book);
  return w.finish();
}

std::vector<std::int64_t> decode_stream(const BitStream& bits, const Codebook& book,
                                        std::size_t count) {
  std::vector<std::int64_t> out;
  out.reserve(count);
  BitReader r(bits);
  for (std::size_t i = 0; i < count; ++i) out.push_back(book.decode_one(r));
  return out;
}

// -- index prefix -------------------------------------------------------------

IndexPrefix shortest_prefix(std::span<const std::uint32_t> indices, std::size_t dimension) {
  IndexPrefix p;
  for (std::uint32_t i : indices) {
    if (i >= dimension) {
      throw Error(ErrorKind::kValidation, kModule,
                  "basis index " + std::to_string(i) + " >= dimension " + std::to_string(dimension));
    }
    p.length = std::max(p.length, i + 1);
  }
  p.bits.assign(p.length, 0);
  for (std::uint32_t i : indices) p.bits[i] = 1;
  return p;
}

int index_length_bits(std::size_t dimension) {
  return static_cast<int>(std::bit_width(static_cast<std::uint64_t>(dimension)));
}

void encode_indices(BitWriter& out, std::span<const std::uint32_t> indices, std::size_t dimension) {
  const IndexPrefix p = shortest_prefix(indices, dimension);
  out.put_bits(p.length, index_length_bits(dimension));
  for (std::uint8_t b : p.bits) out.put_bit(b != 0);
}

std::vector<std::uint32_t> decode_indices(BitReader& in, std::size_t dimension) {
  const std::uint64_t length = in.get_bits(index_length_bits(dimension));
  if (length > dimension) {
    throw Error(ErrorKind::kCorruption, kModule,
                "index prefix length " + std::to_string(length) + " exceeds dimension");
  }
  std::vector<std::uint32_t> out;
  for (std::uint64_t i = 0; i < length; ++i) {
    if (in.get_bit()) out.push_back(static_cast<std::uint32_t>(i));
  }
  if (length > 0 && (out.empty() || out.back() != length - 1)) {
    throw Error(ErrorKind::kCorruption, kModule, "index prefix does not end in a set bit");
  }
  return out;
}

}  // namespace gbatc
