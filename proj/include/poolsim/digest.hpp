#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace poolsim {

// 32-byte content digest. Used for block ids, message ids, request digests
// and trace fingerprints. Comparisons are lexicographic over the raw bytes,
// which matches the sort order of the lowercase-hex form.
struct digest {
   std::array<std::uint8_t, 32> bytes{};

   auto operator<=>(const digest&) const = default;

   std::string hex() const;
   static digest from_hex(std::string_view hex);
   bool is_zero() const;
};

// SHA-256 over `data`.
digest sha256(const std::vector<std::uint8_t>& data);

// HMAC-SHA256 with `key` over `data`.
digest hmac_sha256(const std::vector<std::uint8_t>& key,
                   const std::vector<std::uint8_t>& data);

// Canonical byte-string builder for everything that gets digested or fed to
// the PRF. Encoding rules (frozen, documented in docs/prf-encoding.md):
//   - tag(s):   raw ASCII bytes of a domain separation tag
//   - u8/u64:   big-endian fixed width
//   - bytes(b): u32 big-endian length prefix, then the raw bytes
//   - str(s):   same as bytes over the UTF-8 contents
//   - dig(d):   the 32 raw digest bytes, no length prefix
struct byte_writer {
   std::vector<std::uint8_t> out;

   byte_writer& tag(std::string_view s);
   byte_writer& u8(std::uint8_t v);
   byte_writer& u32(std::uint32_t v);
   byte_writer& u64(std::uint64_t v);
   byte_writer& f64(double v); // IEEE-754 bit pattern, big-endian
   byte_writer& bytes(const std::vector<std::uint8_t>& b);
   byte_writer& str(std::string_view s);
   byte_writer& dig(const digest& d);
};

std::string to_hex(const std::vector<std::uint8_t>& data);
std::vector<std::uint8_t> from_hex_bytes(std::string_view hex);

} // namespace poolsim

template <>
struct std::hash<poolsim::digest> {
   std::size_t operator()(const poolsim::digest& d) const noexcept {
      // First 8 bytes of a SHA-256 output are already well mixed.
      std::size_t h = 0;
      for (int i = 0; i < 8; ++i) h = (h << 8) | d.bytes[static_cast<std::size_t>(i)];
      return h;
   }
};
