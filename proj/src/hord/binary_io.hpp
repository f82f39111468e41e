#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "hord/error.hpp"

// Little-endian byte encoding shared by the checkpoint and dataset containers.
namespace hord::io {

class ByteWriter {
 public:
  void magic(std::string_view tag) { bytes_.insert(bytes_.end(), tag.begin(), tag.end()); }

  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  void text(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t>& bytes, std::string what)
      : bytes_(bytes), what_(std::move(what)) {}

  void expect_magic(std::string_view tag) {
    need(tag.size());
    if (std::memcmp(bytes_.data() + pos_, tag.data(), tag.size()) != 0) {
      throw FormatError(what_ + ": bad magic, expected \"" + std::string(tag) + "\"");
    }
    pos_ += tag.size();
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }

  std::string text(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void expect_end() const {
    if (!at_end()) {
      throw FormatError(what_ + ": " + std::to_string(remaining()) + " trailing bytes");
    }
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError(what_ + ": truncated");
  }

  const std::vector<std::uint8_t>& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace hord::io
