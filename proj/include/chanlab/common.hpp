#pragma once

#include <compare>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace chanlab {

using Tick = std::int64_t;
inline constexpr Tick kNever = std::numeric_limits<Tick>::max() / 4;

enum class PartyId : std::uint32_t {};

constexpr std::uint32_t index_of(PartyId p) { return static_cast<std::uint32_t>(p); }
constexpr PartyId party(std::uint32_t i) { return static_cast<PartyId>(i); }

using Bytes = std::vector<std::uint8_t>;

// Integer minor-unit amount. Arithmetic is exact; there is no implicit
// conversion from floating point.
class Money {
 public:
  constexpr Money() = default;
  constexpr explicit Money(std::int64_t units) : units_(units) {}

  constexpr std::int64_t units() const { return units_; }

  friend constexpr auto operator<=>(Money, Money) = default;

  constexpr Money& operator+=(Money o) {
    units_ += o.units_;
    return *this;
  }
  constexpr Money& operator-=(Money o) {
    units_ -= o.units_;
    return *this;
  }
  friend constexpr Money operator+(Money a, Money b) { return Money(a.units_ + b.units_); }
  friend constexpr Money operator-(Money a, Money b) { return Money(a.units_ - b.units_); }
  constexpr Money operator-() const { return Money(-units_); }
  friend constexpr Money operator*(Money a, std::int64_t k) { return Money(a.units_ * k); }

 private:
  std::int64_t units_ = 0;
};

// Minor units are cents.
constexpr Money dollars(std::int64_t d) { return Money(d * 100); }
constexpr Money cents(std::int64_t c) { return Money(c); }

std::string to_string(Money m);
std::string to_hex(const Bytes& b);

}  // namespace chanlab
