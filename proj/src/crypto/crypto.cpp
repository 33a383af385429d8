#include "chanlab/crypto.hpp"

#include <sodium.h>

#include <cstring>
#include <stdexcept>

namespace chanlab::crypto {

namespace {

void ensure_sodium() {
  static const bool ready = [] {
    if (sodium_init() < 0) throw std::runtime_error("libsodium initialisation failed");
    return true;
  }();
  (void)ready;
}

Hash sha256_parts(std::initializer_list<std::pair<const void*, std::size_t>> parts) {
  crypto_hash_sha256_state st;
  crypto_hash_sha256_init(&st);
  for (auto [p, n] : parts) crypto_hash_sha256_update(&st, static_cast<const unsigned char*>(p), n);
  Hash h;
  crypto_hash_sha256_final(&st, h.digest.data());
  return h;
}

}  // namespace

std::string Hash::hex() const { return to_hex(bytes()); }

std::optional<Hash> Hash::from_bytes(const Bytes& b) {
  if (b.size() != 32) return std::nullopt;
  Hash h;
  std::memcpy(h.digest.data(), b.data(), 32);
  return h;
}

Hash hash(std::string_view context, const Bytes& data) {
  ensure_sodium();
  const auto len = static_cast<std::uint64_t>(context.size());
  return sha256_parts({{&len, sizeof len}, {context.data(), context.size()}, {data.data(), data.size()}});
}

Preimage sample_preimage(std::mt19937_64& rng, int lambda_bits) {
  if (lambda_bits <= 0 || lambda_bits % 8 != 0) throw std::invalid_argument("lambda must be a positive multiple of 8");
  Preimage x;
  x.bytes.resize(static_cast<std::size_t>(lambda_bits / 8));
  for (auto& b : x.bytes) b = static_cast<std::uint8_t>(rng() & 0xff);
  return x;
}

KeyRegistry::KeyRegistry(Backend backend, std::uint64_t seed) : backend_(backend), seed_(seed) { ensure_sodium(); }

void KeyRegistry::register_party(PartyId p, bool honest) {
  const auto id = index_of(p);
  Keys k;
  k.honest = honest;
  const std::uint64_t material[2] = {seed_, id};
  Hash seed = sha256_parts({{"keygen", 6}, {material, sizeof material}});
  std::memcpy(k.secret.data(), seed.digest.data(), 32);
  if (backend_ == Backend::Ed25519) crypto_sign_seed_keypair(k.sign_pk.data(), k.sign_sk.data(), seed.digest.data());
  keys_[id] = k;
}

void KeyRegistry::set_honest(PartyId p, bool honest) { keys_.at(index_of(p)).honest = honest; }

const KeyRegistry::Keys& KeyRegistry::keys(PartyId p) const {
  auto it = keys_.find(index_of(p));
  if (it == keys_.end()) throw std::out_of_range("no key registered for party " + std::to_string(index_of(p)));
  return it->second;
}

Signature KeyRegistry::sign(PartyId p, std::string_view context, const Bytes& message) {
  const Keys& k = keys(p);
  Signature s;
  s.signer = p;
  s.message_digest = hash(context, message);
  if (backend_ == Backend::TestDouble) {
    const std::uint32_t id = index_of(p);
    Hash mac = sha256_parts({{k.secret.data(), k.secret.size()}, {&id, sizeof id}, {s.message_digest.digest.data(), 32}});
    s.token = mac.bytes();
  } else {
    s.token.resize(crypto_sign_BYTES);
    crypto_sign_detached(s.token.data(), nullptr, s.message_digest.digest.data(), 32, k.sign_sk.data());
  }
  signed_.emplace(index_of(p), s.message_digest);
  ++issued_;
  return s;
}

bool KeyRegistry::verify(PartyId p, std::string_view context, const Bytes& message, const Signature& sig) const {
  const Keys& k = keys(p);
  if (sig.signer != p) return false;
  const Hash digest = hash(context, message);
  if (digest != sig.message_digest) return false;
  bool ok = false;
  if (backend_ == Backend::TestDouble) {
    const std::uint32_t id = index_of(p);
    Hash mac = sha256_parts({{k.secret.data(), k.secret.size()}, {&id, sizeof id}, {digest.digest.data(), 32}});
    ok = sig.token == mac.bytes();
  } else {
    ok = sig.token.size() == crypto_sign_BYTES &&
         crypto_sign_verify_detached(sig.token.data(), digest.digest.data(), 32, k.sign_pk.data()) == 0;
  }
  if (ok && k.honest && !signed_.contains({index_of(p), digest})) ++audit_violations_;
  return ok;
}

bool KeyRegistry::was_signed_by(PartyId p, const Hash& digest) const {
  return signed_.contains({index_of(p), digest});
}

}  // namespace chanlab::crypto
