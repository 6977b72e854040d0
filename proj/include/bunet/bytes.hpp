#pragma once

#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bunet/common.hpp"

namespace bunet {

// Little-endian append-only encoder.
class ByteWriter {
 public:
  void u8v(u8 x) { buf_.push_back(x); }
  void u16v(std::uint16_t x) { put(x, 2); }
  void u32v(u32 x) { put(x, 4); }
  void u64v(u64 x) { put(x, 8); }
  void i64v(i64 x) { put(static_cast<u64>(x), 8); }
  void bytes(std::span<const u8> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void tag(std::string_view magic) { buf_.insert(buf_.end(), magic.begin(), magic.end()); }
  void words(std::span<const u64> w) {
    for (u64 x : w) u64v(x);
  }

  std::vector<u8>& data() { return buf_; }
  std::vector<u8> take() { return std::move(buf_); }

 private:
  void put(u64 x, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<u8>(x >> (8 * i)));
  }
  std::vector<u8> buf_;
};

// Bounds-checked little-endian decoder; throws FormatError on truncation.
class ByteReader {
 public:
  explicit ByteReader(std::span<const u8> data) : data_(data) {}

  u8 u8v() { return static_cast<u8>(get(1)); }
  std::uint16_t u16v() { return static_cast<std::uint16_t>(get(2)); }
  u32 u32v() { return static_cast<u32>(get(4)); }
  u64 u64v() { return get(8); }
  i64 i64v() { return static_cast<i64>(get(8)); }
  std::span<const u8> bytes(std::size_t n) {
    need(n);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  void expect_tag(std::string_view magic) {
    auto b = bytes(magic.size());
    if (std::memcmp(b.data(), magic.data(), magic.size()) != 0)
      throw FormatError("bad magic, expected \"" + std::string(magic) + "\"");
  }
  std::vector<u64> words(std::size_t n) {
    need(n * 8);
    std::vector<u64> out(n);
    for (auto& x : out) x = get(8);
    return out;
  }

  std::size_t remaining() const { return data_.size() - pos_; }
  void expect_end() const {
    if (remaining() != 0) throw FormatError("trailing bytes after record");
  }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw FormatError("truncated record");
  }
  u64 get(int n) {
    need(static_cast<std::size_t>(n));
    u64 x = 0;
    for (int i = 0; i < n; ++i) x |= static_cast<u64>(data_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return x;
  }

  std::span<const u8> data_;
  std::size_t pos_ = 0;
};

}  // namespace bunet
