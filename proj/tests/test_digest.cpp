#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <poolsim/digest.hpp>
#include <poolsim/errors.hpp>

#include <string>
#include <vector>

using namespace poolsim;

static std::vector<std::uint8_t> bytes_of(const std::string& s) {
   return {s.begin(), s.end()};
}

TEST_CASE("sha256 matches the published test vectors") {
   // FIPS 180-2 appendix vectors.
   CHECK(sha256({}).hex() ==
         "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
   CHECK(sha256(bytes_of("abc")).hex() ==
         "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
   CHECK(sha256(bytes_of("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq")).hex() ==
         "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST_CASE("hmac-sha256 matches RFC 4231 test case 2") {
   CHECK(hmac_sha256(bytes_of("Jefe"), bytes_of("what do ya want for nothing?")).hex() ==
         "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843");
}

TEST_CASE("hex round trip") {
   digest d = sha256(bytes_of("round trip"));
   CHECK(digest::from_hex(d.hex()) == d);
   CHECK(d.hex().size() == 64);
   CHECK_THROWS_AS(digest::from_hex("abc"), error);
   CHECK_THROWS_AS(
      digest::from_hex(std::string(63, 'a') + "g"), error);

   std::vector<std::uint8_t> raw{0x00, 0xff, 0x10, 0xab};
   CHECK(to_hex(raw) == "00ff10ab");
   CHECK(from_hex_bytes("00ff10ab") == raw);
   CHECK_THROWS_AS(from_hex_bytes("abc"), error);
}

TEST_CASE("byte_writer encodings are the frozen canonical forms") {
   byte_writer w;
   w.tag("ab").u8(0x01).u32(0x02030405).u64(0x0607080910111213ull);
   std::vector<std::uint8_t> expect{
      'a', 'b', 0x01, 0x02, 0x03, 0x04, 0x05,
      0x06, 0x07, 0x08, 0x09, 0x10, 0x11, 0x12, 0x13};
   CHECK(w.out == expect);

   byte_writer w2;
   w2.bytes({0xaa, 0xbb});
   CHECK(w2.out == std::vector<std::uint8_t>{0x00, 0x00, 0x00, 0x02, 0xaa, 0xbb});

   byte_writer w3;
   w3.str("hi");
   CHECK(w3.out == std::vector<std::uint8_t>{0x00, 0x00, 0x00, 0x02, 'h', 'i'});

   // str carries a length prefix, so concatenation cannot be forged by
   // shifting bytes between adjacent fields.
   byte_writer a, b;
   a.str("ab").str("c");
   b.str("a").str("bc");
   CHECK(a.out != b.out);

   byte_writer wf;
   wf.f64(1.0);
   CHECK(to_hex(wf.out) == "3ff0000000000000");

   digest d = sha256(bytes_of("x"));
   byte_writer wd;
   wd.dig(d);
   CHECK(wd.out.size() == 32);
   CHECK(to_hex(wd.out) == d.hex());
}

TEST_CASE("digest ordering matches hex ordering") {
   digest a = sha256(bytes_of("a"));
   digest b = sha256(bytes_of("b"));
   CHECK((a < b) == (a.hex() < b.hex()));
   CHECK(a == a);
   CHECK(a != b);
}
