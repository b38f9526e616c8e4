#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gbatc {

// Little-endian byte serialization used by every on-disk structure.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { put_le(v, 2); }
  void u32(std::uint32_t v) { put_le(v, 4); }
  void u64(std::uint64_t v) { put_le(v, 8); }
  void f32(float v);
  void f64(double v);
  // LEB128 unsigned.
  void varint(std::uint64_t v);
  // Zigzag-mapped LEB128.
  void svarint(std::int64_t v);
  void bytes(std::span<const std::uint8_t> data) { buf_.insert(buf_.end(), data.begin(), data.end()); }
  void string(std::string_view s);

  std::size_t size() const { return buf_.size(); }
  const std::vector<std::uint8_t>& data() const { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  void put_le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> buf_;
};

// Bounds-checked reader; running past the end throws ErrorKind::kTruncation
// attributed to `module`.
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> data, std::string module)
      : data_(data), module_(std::move(module)) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get_le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get_le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get_le(4)); }
  std::uint64_t u64() { return get_le(8); }
  float f32();
  double f64();
  std::uint64_t varint();
  std::int64_t svarint();
  std::span<const std::uint8_t> bytes(std::size_t n);
  std::string string();

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }
  // Throws kCorruption if unread bytes remain.
  void expect_done() const;

 private:
  std::uint64_t get_le(int n);
  void need(std::size_t n) const;

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  std::string module_;
};

std::uint32_t crc32(std::span<const std::uint8_t> data);

}  // namespace gbatc
