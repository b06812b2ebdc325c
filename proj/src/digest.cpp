#include <poolsim/digest.hpp>
#include <poolsim/errors.hpp>

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <cstring>

namespace poolsim {

static constexpr char hex_chars[] = "0123456789abcdef";

std::string digest::hex() const {
   std::string s;
   s.reserve(64);
   for (auto b : bytes) {
      s.push_back(hex_chars[b >> 4]);
      s.push_back(hex_chars[b & 0xf]);
   }
   return s;
}

static int hex_nibble(char c) {
   if (c >= '0' && c <= '9') return c - '0';
   if (c >= 'a' && c <= 'f') return c - 'a' + 10;
   if (c >= 'A' && c <= 'F') return c - 'A' + 10;
   return -1;
}

digest digest::from_hex(std::string_view hex) {
   if (hex.size() != 64)
      throw error("digest hex must be 64 characters, got " + std::to_string(hex.size()));
   digest d;
   for (std::size_t i = 0; i < 32; ++i) {
      int hi = hex_nibble(hex[2 * i]);
      int lo = hex_nibble(hex[2 * i + 1]);
      if (hi < 0 || lo < 0)
         throw error("digest hex contains a non-hex character");
      d.bytes[i] = static_cast<std::uint8_t>((hi << 4) | lo);
   }
   return d;
}

bool digest::is_zero() const {
   for (auto b : bytes)
      if (b != 0) return false;
   return true;
}

// One fetched algorithm and one reused context per thread; the one-shot
// helpers re-fetch on every call, which dominates small-input hashing.
static const EVP_MD* sha256_md() {
   static const EVP_MD* md = EVP_MD_fetch(nullptr, "SHA256", nullptr);
   return md;
}

namespace {
struct md_ctx_holder {
   EVP_MD_CTX* ctx = EVP_MD_CTX_new();
   ~md_ctx_holder() { EVP_MD_CTX_free(ctx); }
};
} // namespace

static digest sha256_spans(const std::uint8_t* a, std::size_t a_len,
                           const std::uint8_t* b, std::size_t b_len) {
   thread_local md_ctx_holder tl;
   digest d;
   unsigned int len = 0;
   EVP_DigestInit_ex(tl.ctx, sha256_md(), nullptr);
   if (a_len > 0) EVP_DigestUpdate(tl.ctx, a, a_len);
   if (b_len > 0) EVP_DigestUpdate(tl.ctx, b, b_len);
   EVP_DigestFinal_ex(tl.ctx, d.bytes.data(), &len);
   return d;
}

digest sha256(const std::vector<std::uint8_t>& data) {
   return sha256_spans(data.data(), data.size(), nullptr, 0);
}

digest hmac_sha256(const std::vector<std::uint8_t>& key,
                   const std::vector<std::uint8_t>& data) {
   // RFC 2104 over the block size of SHA-256 (64 bytes).
   std::array<std::uint8_t, 64> k{};
   if (key.size() > k.size()) {
      const digest kd = sha256(key);
      std::memcpy(k.data(), kd.bytes.data(), kd.bytes.size());
   } else {
      std::memcpy(k.data(), key.data(), key.size());
   }
   std::array<std::uint8_t, 64> ipad;
   std::array<std::uint8_t, 64> opad;
   for (std::size_t i = 0; i < k.size(); ++i) {
      ipad[i] = static_cast<std::uint8_t>(k[i] ^ 0x36);
      opad[i] = static_cast<std::uint8_t>(k[i] ^ 0x5c);
   }
   const digest inner = sha256_spans(ipad.data(), ipad.size(), data.data(), data.size());
   return sha256_spans(opad.data(), opad.size(), inner.bytes.data(), inner.bytes.size());
}

byte_writer& byte_writer::tag(std::string_view s) {
   out.insert(out.end(), s.begin(), s.end());
   return *this;
}

byte_writer& byte_writer::u8(std::uint8_t v) {
   out.push_back(v);
   return *this;
}

byte_writer& byte_writer::u32(std::uint32_t v) {
   for (int i = 3; i >= 0; --i)
      out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
   return *this;
}

byte_writer& byte_writer::u64(std::uint64_t v) {
   for (int i = 7; i >= 0; --i)
      out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
   return *this;
}

byte_writer& byte_writer::f64(double v) {
   return u64(std::bit_cast<std::uint64_t>(v));
}

byte_writer& byte_writer::bytes(const std::vector<std::uint8_t>& b) {
   u32(static_cast<std::uint32_t>(b.size()));
   out.insert(out.end(), b.begin(), b.end());
   return *this;
}

byte_writer& byte_writer::str(std::string_view s) {
   u32(static_cast<std::uint32_t>(s.size()));
   out.insert(out.end(), s.begin(), s.end());
   return *this;
}

byte_writer& byte_writer::dig(const digest& d) {
   out.insert(out.end(), d.bytes.begin(), d.bytes.end());
   return *this;
}

std::string to_hex(const std::vector<std::uint8_t>& data) {
   std::string s;
   s.reserve(data.size() * 2);
   for (auto b : data) {
      s.push_back(hex_chars[b >> 4]);
      s.push_back(hex_chars[b & 0xf]);
   }
   return s;
}

std::vector<std::uint8_t> from_hex_bytes(std::string_view hex) {
   if (hex.size() % 2 != 0)
      throw error("hex string has odd length");
   std::vector<std::uint8_t> out;
   out.reserve(hex.size() / 2);
   for (std::size_t i = 0; i < hex.size(); i += 2) {
      int hi = hex_nibble(hex[i]);
      int lo = hex_nibble(hex[i + 1]);
      if (hi < 0 || lo < 0)
         throw error("hex string contains a non-hex character");
      out.push_back(static_cast<std::uint8_t>((hi << 4) | lo));
   }
   return out;
}

} // namespace poolsim
