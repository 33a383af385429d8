#include "chanlab/codec.hpp"

#include <cstdio>

namespace chanlab {

std::string to_string(Money m) {
  const std::int64_t u = m.units();
  const std::int64_t a = u < 0 ? -u : u;
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s%lld.%02lld", u < 0 ? "-" : "", static_cast<long long>(a / 100),
                static_cast<long long>(a % 100));
  return buf;
}

std::string to_hex(const Bytes& b) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  s.reserve(b.size() * 2);
  for (auto c : b) {
    s.push_back(kDigits[c >> 4]);
    s.push_back(kDigits[c & 15]);
  }
  return s;
}

}  // namespace chanlab

namespace chanlab::codec {

Writer& Writer::u8(std::uint8_t v) {
  out_.push_back(v);
  return *this;
}

Writer& Writer::i64(std::int64_t v) {
  auto u = static_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
  return *this;
}

Writer& Writer::bytes(const Bytes& b) {
  i64(static_cast<std::int64_t>(b.size()));
  out_.insert(out_.end(), b.begin(), b.end());
  return *this;
}

Writer& Writer::str(std::string_view s) {
  i64(static_cast<std::int64_t>(s.size()));
  out_.insert(out_.end(), s.begin(), s.end());
  return *this;
}

Writer& Writer::opt_bytes(const std::optional<Bytes>& b) {
  if (!b) return u8(0);
  u8(1);
  return bytes(*b);
}

bool Reader::need(std::size_t n) {
  if (!ok_ || in_.size() - pos_ < n) {
    ok_ = false;
    return false;
  }
  return true;
}

std::optional<std::uint8_t> Reader::u8() {
  if (!need(1)) return std::nullopt;
  return in_[pos_++];
}

std::optional<std::int64_t> Reader::i64() {
  if (!need(8)) return std::nullopt;
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
  pos_ += 8;
  return static_cast<std::int64_t>(u);
}

std::optional<Money> Reader::money() {
  auto v = i64();
  if (!v) return std::nullopt;
  return Money(*v);
}

std::optional<Bytes> Reader::bytes() {
  auto n = i64();
  if (!n || *n < 0 || !need(static_cast<std::size_t>(*n))) {
    ok_ = false;
    return std::nullopt;
  }
  Bytes b(in_.begin() + static_cast<std::ptrdiff_t>(pos_),
          in_.begin() + static_cast<std::ptrdiff_t>(pos_ + static_cast<std::size_t>(*n)));
  pos_ += static_cast<std::size_t>(*n);
  return b;
}

std::optional<std::optional<Bytes>> Reader::opt_bytes() {
  auto tag = u8();
  if (!tag) return std::nullopt;
  if (*tag == 0) return std::optional<Bytes>{};
  if (*tag != 1) {
    ok_ = false;
    return std::nullopt;
  }
  auto b = bytes();
  if (!b) return std::nullopt;
  return std::optional<Bytes>{std::move(*b)};
}

}  // namespace chanlab::codec
