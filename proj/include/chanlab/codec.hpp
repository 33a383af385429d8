#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "chanlab/common.hpp"

namespace chanlab::codec {

// Little-endian, length-prefixed binary encoding used for channel states,
// inputs and signed payloads.
class Writer {
 public:
  Writer& u8(std::uint8_t v);
  Writer& i64(std::int64_t v);
  Writer& money(Money m) { return i64(m.units()); }
  Writer& bytes(const Bytes& b);
  Writer& str(std::string_view s);
  Writer& opt_bytes(const std::optional<Bytes>& b);

  const Bytes& data() const { return out_; }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

// Every accessor returns nullopt once the input is exhausted or malformed;
// after the first failure the reader stays failed.
class Reader {
 public:
  explicit Reader(const Bytes& in) : in_(in) {}

  std::optional<std::uint8_t> u8();
  std::optional<std::int64_t> i64();
  std::optional<Money> money();
  std::optional<Bytes> bytes();
  std::optional<std::optional<Bytes>> opt_bytes();

  bool ok() const { return ok_; }
  bool at_end() const { return ok_ && pos_ == in_.size(); }

 private:
  bool need(std::size_t n);

  const Bytes& in_;
  std::size_t pos_ = 0;
  bool ok_ = true;
};

}  // namespace chanlab::codec
