#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dgd/error.hpp"

namespace dgd {

/// Little-endian byte sink.
class ByteWriter {
 public:
  void tag(std::string_view four_cc) { bytes_.insert(bytes_.end(), four_cc.begin(), four_cc.end()); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { put(std::bit_cast<std::uint32_t>(v), 4); }
  void raw(std::span<const std::uint8_t> b) { bytes_.insert(bytes_.end(), b.begin(), b.end()); }
  void str(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

  std::vector<std::uint8_t>& bytes() { return bytes_; }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked little-endian reader. Every read names its field so a
/// truncated file reports where it ran out.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes, std::size_t offset = 0)
      : bytes_(bytes), pos_(offset) {}

  void expect_tag(std::string_view four_cc, const char* field) {
    need(4, field);
    if (std::memcmp(bytes_.data() + pos_, four_cc.data(), 4) != 0)
      throw FormatError(std::string("bad magic in field '") + field + "': expected \"" + std::string(four_cc) + "\"");
    pos_ += 4;
  }
  bool peek_tag(std::string_view four_cc) const {
    return remaining() >= 4 && std::memcmp(bytes_.data() + pos_, four_cc.data(), 4) == 0;
  }
  std::string tag(const char* field) {
    need(4, field);
    std::string out(reinterpret_cast<const char*>(bytes_.data() + pos_), 4);
    pos_ += 4;
    return out;
  }
  std::uint16_t u16(const char* field) { return static_cast<std::uint16_t>(get(2, field)); }
  std::uint32_t u32(const char* field) { return static_cast<std::uint32_t>(get(4, field)); }
  std::uint64_t u64(const char* field) { return get(8, field); }
  float f32(const char* field) { return std::bit_cast<float>(static_cast<std::uint32_t>(get(4, field))); }
  std::string str(std::size_t n, const char* field) {
    need(n, field);
    std::string out(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return out;
  }
  void skip(std::size_t n, const char* field) {
    need(n, field);
    pos_ += n;
  }
  void need(std::size_t n, const char* field) const {
    if (remaining() < n) throw FormatError(std::string("truncated payload while reading '") + field + "'");
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  std::uint64_t get(int n, const char* field) {
    need(static_cast<std::size_t>(n), field);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += n;
    return v;
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_;
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
/// Writes via a temporary file and rename so readers never see a partial file.
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace dgd
