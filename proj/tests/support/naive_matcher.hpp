#pragma once

// Brute-force reference matcher used as an oracle for the incremental engine.
// Resting orders live in one flat vector; every match scans it linearly for
// the best (price, arrival) counterparty. Intentionally shares no code with
// microflow::OrderBook beyond the plain data types.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "microflow/lob/book_levels.hpp"
#include "microflow/lob/types.hpp"

namespace microflow::test_support {

class NaiveMatcher {
public:
  void process(const Order& o, std::vector<Transaction>& out) {
    if (o.kind == OrderKind::Cancel) {
      for (auto& r : resting_) {
        if (r.id == o.id) r.qty = 0;
      }
      return;
    }
    const bool is_buy = o.size < 0;
    std::int64_t want = is_buy ? -o.size : o.size;
    std::int64_t filled = 0;
    // Rational numerator kept as an integer sum of price * qty.
    std::int64_t notional = 0;
    while (want > 0) {
      Entry* best = nullptr;
      for (auto& r : resting_) {
        if (r.qty == 0 || r.is_buy == is_buy) continue;
        const bool crosses = is_buy ? r.price <= o.price : r.price >= o.price;
        if (!crosses) continue;
        if (best == nullptr) {
          best = &r;
          continue;
        }
        const bool better_price = is_buy ? r.price < best->price : r.price > best->price;
        if (better_price || (r.price == best->price && r.seq < best->seq)) best = &r;
      }
      if (best == nullptr) break;
      const std::int64_t take = want < best->qty ? want : best->qty;
      best->qty -= take;
      want -= take;
      filled += take;
      notional += best->price * take;
    }
    if (filled > 0) {
      // Round-half-even via long division on the scaled numerator.
      const std::int64_t scaled = notional * 10000;
      std::int64_t q = scaled / filled;
      const std::int64_t rem = scaled - q * filled;
      if (2 * rem > filled || (2 * rem == filled && q % 2 != 0)) ++q;
      out.push_back(Transaction{q, is_buy ? -filled : filled, o.time});
    }
    if (want > 0) resting_.push_back(Entry{o.id, o.price, want, is_buy, seq_++});
  }

  BookLevels levels() const {
    BookLevels b;
    for (const auto& r : resting_) {
      if (r.qty == 0) continue;
      if (r.is_buy) b.bids[r.price] += r.qty; else b.asks[r.price] += r.qty;
    }
    return b;
  }

  // FIFO queue at a level as a list of (id, qty), earliest first.
  std::vector<std::pair<OrderId, std::int64_t>> queue(bool is_buy, PriceTicks price) const {
    std::vector<std::pair<OrderId, std::int64_t>> q;
    for (const auto& r : resting_) {
      if (r.qty > 0 && r.is_buy == is_buy && r.price == price) q.emplace_back(r.id, r.qty);
    }
    return q;
  }

private:
  struct Entry {
    OrderId id;
    PriceTicks price;
    std::int64_t qty;
    bool is_buy;
    std::uint64_t seq;
  };
  std::vector<Entry> resting_;
  std::uint64_t seq_ = 0;
};

}  // namespace microflow::test_support
