#pragma once

#include <cstdint>
#include <cstdlib>
#include <string>

#include "microflow/error.hpp"

namespace microflow {

using OrderId = std::uint64_t;
using PriceTicks = std::int64_t;
using Quantity = std::int64_t;
using TimeMs = std::int64_t;

// Transaction prices carry four decimal places: 100.375 ticks -> 1003750.
using FixedPrice = std::int64_t;
inline constexpr std::int64_t kFixedScale = 10000;

enum class Side : std::uint8_t { Buy, Sell };
enum class OrderKind : std::uint8_t { Add, Cancel };

inline constexpr Side opposite(Side s) noexcept {
  return s == Side::Buy ? Side::Sell : Side::Buy;
}

inline std::string to_string(Side s) { return s == Side::Buy ? "buy" : "sell"; }

// Signed size convention: size > 0 is a sell, size < 0 is a buy.
struct Order {
  OrderId id = 0;
  PriceTicks price = 0;
  Quantity size = 0;
  TimeMs time = 0;
  OrderKind kind = OrderKind::Add;

  Side side() const noexcept { return size > 0 ? Side::Sell : Side::Buy; }
  Quantity quantity() const noexcept { return size < 0 ? -size : size; }

  static Order add(OrderId id, PriceTicks price, Quantity size, TimeMs time) {
    return Order{id, price, size, time, OrderKind::Add};
  }
  static Order cancel(OrderId id, TimeMs time) {
    return Order{id, 0, 0, time, OrderKind::Cancel};
  }

  bool operator==(const Order&) const = default;
};

// size > 0: active sell (the aggressor hit the bid); size < 0: active buy.
struct Transaction {
  FixedPrice price = 0;
  Quantity size = 0;
  TimeMs time = 0;

  double price_ticks() const noexcept {
    return static_cast<double>(price) / static_cast<double>(kFixedScale);
  }
  Side aggressor() const noexcept { return size > 0 ? Side::Sell : Side::Buy; }
  Quantity quantity() const noexcept { return size < 0 ? -size : size; }

  bool operator==(const Transaction&) const = default;
};

// num / den rounded to nearest, ties to even. den must be positive.
inline std::int64_t div_round_half_even(std::int64_t num, std::int64_t den) {
  if (den <= 0) throw InvariantError("div_round_half_even: non-positive denominator");
  std::int64_t q = num / den;
  std::int64_t r = num % den;
  if (r < 0) {
    r += den;
    q -= 1;
  }
  const std::int64_t twice = 2 * r;
  if (twice > den || (twice == den && (q & 1) != 0)) ++q;
  return q;
}

}  // namespace microflow
