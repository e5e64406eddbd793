#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

#include "comute/errors.hpp"

namespace comute::binio {

template <typename Word>
inline void put_le(std::string& out, Word w) {
  for (std::size_t i = 0; i < sizeof(Word); ++i) {
    out.push_back(static_cast<char>((w >> (8 * i)) & 0xff));
  }
}

inline void put_f32(std::string& out, float v) { put_le(out, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::string& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

/// Sequential little-endian reader over a byte buffer.
class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::size_t remaining() const { return bytes_.size() - pos_; }

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }

  float f32() { return std::bit_cast<float>(word<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(word<std::uint64_t>()); }

 private:
  template <typename Word>
  Word word() {
    need(sizeof(Word));
    Word w = 0;
    for (std::size_t i = 0; i < sizeof(Word); ++i) {
      w |= static_cast<Word>(static_cast<std::uint8_t>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(Word);
    return w;
  }

  void need(std::size_t n) const {
    if (remaining() < n) throw FormatError("unexpected end of binary data");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace comute::binio
