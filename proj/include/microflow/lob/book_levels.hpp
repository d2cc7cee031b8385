#pragma once

#include <functional>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "microflow/lob/types.hpp"

namespace microflow {

// Aggregate price ladder: volume per price on each side, no queue detail.
// Used for snapshots, accumulated side books and the diagnostic book sum.
// Empty levels are never stored.
struct BookLevels {
  std::map<PriceTicks, Quantity, std::greater<>> bids;  // best (highest) first
  std::map<PriceTicks, Quantity> asks;                  // best (lowest) first

  bool empty() const noexcept { return bids.empty() && asks.empty(); }

  std::optional<PriceTicks> best_bid() const {
    if (bids.empty()) return std::nullopt;
    return bids.begin()->first;
  }
  std::optional<PriceTicks> best_ask() const {
    if (asks.empty()) return std::nullopt;
    return asks.begin()->first;
  }

  Quantity volume_at(Side side, PriceTicks price) const {
    if (side == Side::Buy) {
      auto it = bids.find(price);
      return it == bids.end() ? 0 : it->second;
    }
    auto it = asks.find(price);
    return it == asks.end() ? 0 : it->second;
  }

  // Adds (or, for negative delta, removes) volume at a level; drops the level
  // when it reaches zero.
  void adjust(Side side, PriceTicks price, Quantity delta) {
    auto apply = [&](auto& ladder) {
      auto [it, inserted] = ladder.try_emplace(price, 0);
      it->second += delta;
      if (it->second < 0) throw InvariantError("negative level volume at price " + std::to_string(price));
      if (it->second == 0) ladder.erase(it);
    };
    if (side == Side::Buy) apply(bids); else apply(asks);
  }

  bool crossed() const {
    return !bids.empty() && !asks.empty() && bids.begin()->first >= asks.begin()->first;
  }

  Quantity total(Side side) const {
    Quantity t = 0;
    if (side == Side::Buy) {
      for (const auto& [p, v] : bids) t += v;
    } else {
      for (const auto& [p, v] : asks) t += v;
    }
    return t;
  }

  // Level k from the top (0 = best) as (price, volume), if present.
  std::optional<std::pair<PriceTicks, Quantity>> level(Side side, std::size_t k) const {
    auto pick = [k](const auto& ladder) -> std::optional<std::pair<PriceTicks, Quantity>> {
      if (k >= ladder.size()) return std::nullopt;
      auto it = ladder.begin();
      std::advance(it, static_cast<std::ptrdiff_t>(k));
      return std::pair<PriceTicks, Quantity>{it->first, it->second};
    };
    return side == Side::Buy ? pick(bids) : pick(asks);
  }

  bool operator==(const BookLevels&) const = default;
};

// Per-side, per-price volume sum of two ladders. No matching is performed, so
// the result may be crossed.
inline BookLevels merge_books(const BookLevels& a, const BookLevels& b) {
  BookLevels out = a;
  for (const auto& [p, v] : b.bids) out.adjust(Side::Buy, p, v);
  for (const auto& [p, v] : b.asks) out.adjust(Side::Sell, p, v);
  return out;
}

}  // namespace microflow
