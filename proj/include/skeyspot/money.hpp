#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "skeyspot/registry.hpp"

namespace skeyspot {

/// Currency-agnostic amount in hundredths.
class Money {
 public:
  constexpr Money() = default;
  static constexpr Money from_cents(std::int64_t cents) { return Money(cents); }
  /// Decimal text such as "12.5", "-3", "0.125"; more than two fractional
  /// digits round half up (away from zero on the magnitude). Throws
  /// InvalidArgument.
  static Money parse(std::string_view text);
  /// Uses the shortest decimal that round-trips the double, then parse().
  static Money from_double(double value);

  constexpr std::int64_t cents() const noexcept { return cents_; }
  /// Always two fractional digits: "37.50", "-0.05".
  std::string to_string() const;

  Money operator+(Money o) const;
  Money& operator+=(Money o) { return *this = *this + o; }
  /// Throws InvalidArgument on overflow.
  Money times(std::int64_t count) const;

  friend constexpr auto operator<=>(Money, Money) = default;

 private:
  constexpr explicit Money(std::int64_t cents) : cents_(cents) {}
  std::int64_t cents_ = 0;
};

/// Per-piece prices by class id. Classes without an entry are unpriced.
class RateCard {
 public:
  RateCard() = default;
  /// Throws NegativeRate.
  explicit RateCard(std::map<int, Money> rates);

  const std::map<int, Money>& rates() const noexcept { return rates_; }
  std::optional<Money> rate(int class_id) const;
  bool empty() const noexcept { return rates_.empty(); }

 private:
  std::map<int, Money> rates_;
};

/// JSON object mapping a class id ("6"), display name or slug to a number or
/// decimal string. null and "" leave the class unpriced. Throws NegativeRate,
/// UnknownClass, OutOfRangeClass, InvalidArgument.
RateCard parse_rate_card(std::string_view json_text, const ClassRegistry& registry);
std::string write_rate_card(const RateCard& rates);

}  // namespace skeyspot
