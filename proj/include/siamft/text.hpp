#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace siamft::text {

// Decodes the UTF-8 code point starting at s[pos]. Returns the code point and
// stores its byte length in `len`. Malformed sequences decode as a single
// byte with code point 0xFFFD.
inline char32_t decode_utf8(std::string_view s, std::size_t pos, std::size_t& len) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  auto cont = [&](std::size_t k) -> int {
    if (pos + k >= s.size()) return -1;
    const auto b = static_cast<unsigned char>(s[pos + k]);
    return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
  };
  if (b0 < 0x80) {
    len = 1;
    return b0;
  }
  std::size_t n = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    n = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    n = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    n = 4;
    cp = b0 & 0x07;
  } else {
    len = 1;
    return 0xFFFD;
  }
  for (std::size_t k = 1; k < n; ++k) {
    const int c = cont(k);
    if (c < 0) {
      len = 1;
      return 0xFFFD;
    }
    cp = (cp << 6) | static_cast<char32_t>(c);
  }
  len = n;
  return cp;
}

// White_Space property code points.
inline bool is_unicode_space(char32_t cp) {
  switch (cp) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

// Byte length of the whitespace code point at s[pos], or 0 if none.
inline std::size_t space_length_at(std::string_view s, std::size_t pos) {
  std::size_t len = 0;
  return is_unicode_space(decode_utf8(s, pos, len)) ? len : 0;
}

inline std::string_view trim(std::string_view s) {
  std::size_t begin = 0;
  while (begin < s.size()) {
    const std::size_t n = space_length_at(s, begin);
    if (n == 0) break;
    begin += n;
  }
  // scan forward to find the last non-space code point
  std::size_t end = begin;
  for (std::size_t pos = begin; pos < s.size();) {
    std::size_t len = 0;
    const char32_t cp = decode_utf8(s, pos, len);
    pos += len;
    if (!is_unicode_space(cp)) end = pos;
  }
  return s.substr(begin, end - begin);
}

}  // namespace siamft::text
