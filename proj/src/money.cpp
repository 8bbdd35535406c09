#include "skeyspot/money.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>

#include "skeyspot/error.hpp"
#include "skeyspot/io.hpp"

namespace skeyspot {

namespace {

constexpr std::int64_t kMax = std::numeric_limits<std::int64_t>::max() / 100;

[[noreturn]] void bad_amount(std::string_view text) {
  throw Error(ErrorCode::InvalidArgument, "not a decimal amount: '" + std::string(text) + "'");
}

}  // namespace

Money Money::parse(std::string_view text) {
  std::string_view s = text;
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  bool negative = false;
  if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
    negative = s.front() == '-';
    s.remove_prefix(1);
  }
  std::int64_t exponent = 0;
  if (const auto e = s.find_first_of("eE"); e != std::string_view::npos) {
    const auto exp_text = s.substr(e + 1);
    const auto* first = exp_text.data();
    if (!exp_text.empty() && exp_text.front() == '+') ++first;
    const auto [p, ec] = std::from_chars(first, exp_text.data() + exp_text.size(), exponent);
    if (ec != std::errc() || p != exp_text.data() + exp_text.size() || std::abs(exponent) > 40) bad_amount(text);
    s = s.substr(0, e);
  }
  std::string digits;
  std::int64_t point = -1;
  for (char c : s) {
    if (c == '.' && point < 0) {
      point = static_cast<std::int64_t>(digits.size());
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      digits.push_back(c);
    } else {
      bad_amount(text);
    }
  }
  if (digits.empty()) bad_amount(text);
  if (point < 0) point = static_cast<std::int64_t>(digits.size());
  point += exponent;  // digits[0..point) is the integer part

  // Value = digits * 10^(point - len). Keep two fractional digits plus one for rounding.
  std::int64_t cents = 0;
  const auto len = static_cast<std::int64_t>(digits.size());
  for (std::int64_t i = 0; i < point + 2; ++i) {
    const int d = (i >= 0 && i < len) ? digits[static_cast<std::size_t>(i)] - '0' : 0;
    if (cents > (kMax * 100 - d) / 10) throw Error(ErrorCode::InvalidArgument, "amount too large");
    cents = cents * 10 + d;
  }
  const std::int64_t round_pos = point + 2;
  if (round_pos >= 0 && round_pos < len && digits[static_cast<std::size_t>(round_pos)] >= '5') ++cents;
  return Money(negative ? -cents : cents);
}

Money Money::from_double(double value) {
  if (!std::isfinite(value)) throw Error(ErrorCode::InvalidArgument, "amount must be finite");
  return parse(format_number(value));
}

std::string Money::to_string() const {
  const bool negative = cents_ < 0;
  const std::uint64_t mag = negative ? 0 - static_cast<std::uint64_t>(cents_) : static_cast<std::uint64_t>(cents_);
  std::string frac = std::to_string(mag % 100);
  if (frac.size() < 2) frac.insert(0, "0");
  return (negative ? "-" : "") + std::to_string(mag / 100) + "." + frac;
}

Money Money::operator+(Money o) const {
  std::int64_t r = 0;
  if (__builtin_add_overflow(cents_, o.cents_, &r)) throw Error(ErrorCode::InvalidArgument, "amount overflow");
  return Money(r);
}

Money Money::times(std::int64_t count) const {
  std::int64_t r = 0;
  if (__builtin_mul_overflow(cents_, count, &r)) throw Error(ErrorCode::InvalidArgument, "amount overflow");
  return Money(r);
}

RateCard::RateCard(std::map<int, Money> rates) : rates_(std::move(rates)) {
  for (const auto& [id, rate] : rates_) {
    if (rate.cents() < 0) {
      throw Error(ErrorCode::NegativeRate, "rate for class " + std::to_string(id) + " is negative: " + rate.to_string());
    }
  }
}

std::optional<Money> RateCard::rate(int class_id) const {
  const auto it = rates_.find(class_id);
  if (it == rates_.end()) return std::nullopt;
  return it->second;
}

RateCard parse_rate_card(std::string_view json_text, const ClassRegistry& registry) {
  using json = nlohmann::json;
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("rate card JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::InvalidArgument, "rate card must be a JSON object");
  std::map<int, Money> rates;
  for (const auto& [key, value] : doc.items()) {
    int id = -1;
    const auto [p, ec] = std::from_chars(key.data(), key.data() + key.size(), id);
    if (ec == std::errc() && p == key.data() + key.size()) {
      registry.at(id);
    } else if (const auto found = registry.find(key)) {
      id = *found;
    } else {
      throw Error(ErrorCode::UnknownClass, "rate card names unknown class '" + key + "'");
    }
    if (value.is_null() || (value.is_string() && value.get<std::string>().empty())) continue;
    Money m;
    if (value.is_string()) {
      m = Money::parse(value.get<std::string>());
    } else if (value.is_number_integer()) {
      m = Money::parse(value.dump());
    } else if (value.is_number()) {
      m = Money::from_double(value.get<double>());
    } else {
      throw Error(ErrorCode::InvalidArgument, "rate for '" + key + "' must be a number or decimal string");
    }
    if (m.cents() < 0) throw Error(ErrorCode::NegativeRate, "rate for '" + key + "' is negative");
    rates[id] = m;
  }
  return RateCard(std::move(rates));
}

std::string write_rate_card(const RateCard& rates) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::object();
  for (const auto& [id, m] : rates.rates()) doc[std::to_string(id)] = m.to_string();
  return doc.dump(2) + "\n";
}

}  // namespace skeyspot
