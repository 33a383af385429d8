#include "catch_amalgamated.hpp"

#include <random>

#include "chanlab/crypto.hpp"

using namespace chanlab;
using namespace chanlab::crypto;

namespace {
Bytes b(std::string_view s) { return Bytes(s.begin(), s.end()); }
}  // namespace

TEST_CASE("hash is deterministic and tag separated", "[crypto]") {
  CHECK(hash("SC", b("abc")) == hash("SC", b("abc")));
  CHECK(hash("PM", b("abc")) != hash("SC", b("abc")));
  // Tag boundaries are length-prefixed: ("A", "Bc") must differ from ("AB", "c").
  CHECK(hash("A", b("Bc")) != hash("AB", b("c")));
}

TEST_CASE("hash matches an independent SHA-256 evaluation", "[crypto]") {
  // sha256(le64(2) || "PM" || "abc") computed with Python hashlib.
  CHECK(hash("PM", b("abc")).hex() == "ac3ab01d631281fd7e5dd9e4d9c6232a767fe76c84f24e0a66d86e4b2733a60c");
}

TEST_CASE("sampled preimages differ and have lambda bits", "[crypto]") {
  std::mt19937_64 rng(1);
  auto x = sample_preimage(rng);
  auto y = sample_preimage(rng);
  CHECK(x.bytes.size() == 32);
  CHECK(x != y);
  CHECK(hash_preimage(x) != hash_preimage(y));
  CHECK(sample_preimage(rng, 128).bytes.size() == 16);
  CHECK_THROWS(sample_preimage(rng, 7));
}

TEMPLATE_TEST_CASE_SIG("sign and verify round trip", "[crypto]", ((Backend B), B), Backend::TestDouble,
                       Backend::Ed25519) {
  KeyRegistry keys(B, 3);
  keys.register_party(party(1));
  keys.register_party(party(2));
  const Bytes m = b("round 4");
  const Signature s = keys.sign(party(1), "SC", m);
  CHECK(keys.verify(party(1), "SC", m, s));
  CHECK_FALSE(keys.verify(party(2), "SC", m, s));
  CHECK_FALSE(keys.verify(party(1), "SC", b("round 5"), s));
  CHECK_FALSE(keys.verify(party(1), "PM", m, s));
  Signature forged = s;
  forged.token[0] ^= 1;
  CHECK_FALSE(keys.verify(party(1), "SC", m, forged));
  CHECK_THROWS_AS(keys.sign(party(9), "SC", m), std::out_of_range);
  CHECK(keys.audit_violations() == 0);
}

TEST_CASE("registries with different seeds do not accept each other's tokens", "[crypto]") {
  KeyRegistry a(Backend::TestDouble, 1), c(Backend::TestDouble, 2);
  a.register_party(party(1));
  c.register_party(party(1));
  const Bytes m = b("x");
  CHECK_FALSE(c.verify(party(1), "SC", m, a.sign(party(1), "SC", m)));
}

TEST_CASE("audit log flags an accepted signature an honest party never issued", "[crypto]") {
  // Two registries sharing a seed derive the same keys. A signature made in
  // one is valid in the other, but the second never saw the sign() call.
  KeyRegistry real(Backend::TestDouble, 5), shadow(Backend::TestDouble, 5);
  real.register_party(party(1));
  shadow.register_party(party(1));
  const Bytes m = b("m");
  CHECK(real.verify(party(1), "SC", m, shadow.sign(party(1), "SC", m)));
  CHECK(real.audit_violations() == 1);

  real.set_honest(party(1), false);
  CHECK(real.verify(party(1), "SC", m, shadow.sign(party(1), "SC", m)));
  CHECK(real.audit_violations() == 1);
}
