#pragma once

// Little-endian byte encoding shared by the bundle and archive formats.

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "protosure/errors.hpp"

namespace protosure::detail {

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

class ByteWriter {
 public:
  void raw(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    u32(bits);
  }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s);
  }
  void finish_with_crc() { u32(crc32(out_)); }
  std::vector<std::uint8_t>& bytes() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

// Bounds-checked cursor. Every overrun throws `overrun_code` so callers choose
// whether a short read means ShapeMismatch or CorruptPayload.
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, ErrorCode overrun_code)
      : bytes_(bytes), overrun_(overrun_code) {}

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw Error(overrun_, std::string("declared ") + what + " exceeds the file length");
    }
  }
  std::string_view raw(std::size_t n, const char* what) {
    need(n, what);
    std::string_view s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32(const char* what) {
    const std::uint32_t bits = u32(what);
    float v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::string_view str(const char* what) {
    const std::uint32_t len = u32(what);
    return raw(len, what);
  }
  void skip(std::size_t n, const char* what) {
    need(n, what);
    pos_ += n;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  ErrorCode overrun_;
  std::size_t pos_ = 0;
};

// Verifies the trailing CRC32 over everything before it.
void check_crc(std::span<const std::uint8_t> bytes);

}  // namespace protosure::detail
