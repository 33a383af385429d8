#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "chanlab/common.hpp"

namespace chanlab::crypto {

struct Hash {
  std::array<std::uint8_t, 32> digest{};

  friend auto operator<=>(const Hash&, const Hash&) = default;
  std::string hex() const;
  Bytes bytes() const { return Bytes(digest.begin(), digest.end()); }
  static std::optional<Hash> from_bytes(const Bytes& b);
};

// SHA-256 over (tag length, tag, data). Distinct tags never collide on the
// same data.
Hash hash(std::string_view context, const Bytes& data);
inline Hash hash(std::string_view context, std::string_view data) {
  return hash(context, Bytes(data.begin(), data.end()));
}

struct Preimage {
  Bytes bytes;
  friend auto operator<=>(const Preimage&, const Preimage&) = default;
};

inline constexpr std::string_view kPreimageContext = "PM";

Preimage sample_preimage(std::mt19937_64& rng, int lambda_bits = 256);
inline Hash hash_preimage(const Preimage& x) { return hash(kPreimageContext, x.bytes); }

struct Signature {
  PartyId signer{};
  Hash message_digest;
  Bytes token;

  friend bool operator==(const Signature&, const Signature&) = default;
};

enum class Backend { TestDouble, Ed25519 };

// Per-run key registry. The test double signs with a keyed SHA-256 MAC whose
// keys never leave the registry; the Ed25519 backend uses libsodium.
class KeyRegistry {
 public:
  explicit KeyRegistry(Backend backend = Backend::TestDouble, std::uint64_t seed = 0);

  Backend backend() const { return backend_; }

  void register_party(PartyId p, bool honest = true);
  bool registered(PartyId p) const { return keys_.contains(index_of(p)); }
  void set_honest(PartyId p, bool honest);
  bool honest(PartyId p) const { return keys(p).honest; }

  // Both throw std::out_of_range for an unregistered party.
  Signature sign(PartyId p, std::string_view context, const Bytes& message);
  bool verify(PartyId p, std::string_view context, const Bytes& message, const Signature& sig) const;

  // Number of successful verifications of an honest party's signature over a
  // digest that party never signed. Must stay zero.
  std::uint64_t audit_violations() const { return audit_violations_; }
  std::uint64_t signatures_issued() const { return issued_; }
  bool was_signed_by(PartyId p, const Hash& digest) const;

 private:
  struct Keys {
    std::array<std::uint8_t, 32> secret{};
    std::array<std::uint8_t, 64> sign_sk{};
    std::array<std::uint8_t, 32> sign_pk{};
    bool honest = true;
  };

  const Keys& keys(PartyId p) const;

  Backend backend_;
  std::uint64_t seed_;
  std::map<std::uint32_t, Keys> keys_;
  std::set<std::pair<std::uint32_t, Hash>> signed_;
  mutable std::uint64_t audit_violations_ = 0;
  std::uint64_t issued_ = 0;
};

}  // namespace chanlab::crypto
