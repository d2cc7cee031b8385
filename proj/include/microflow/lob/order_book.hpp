#pragma once

#include <algorithm>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "microflow/error.hpp"
#include "microflow/lob/book_levels.hpp"
#include "microflow/lob/types.hpp"

namespace microflow {

struct RestingOrder {
  OrderId id = 0;
  Quantity remaining = 0;

  bool operator==(const RestingOrder&) const = default;
};

struct PriceLevel {
  Quantity volume = 0;
  std::deque<RestingOrder> queue;  // FIFO, earliest first

  bool operator==(const PriceLevel&) const = default;
};

enum class CancelStatus : std::uint8_t {
  Removed,        // unfilled remainder taken off the book
  AlreadyFilled,  // nothing left to cancel; book untouched
};

struct CancelResult {
  CancelStatus status = CancelStatus::Removed;
  Quantity removed = 0;

  bool warning() const noexcept { return status == CancelStatus::AlreadyFilled; }
};

// Price-time priority limit order book.
//
// A marketable add consumes the opposing side best price first, FIFO within a
// level, and produces a single transaction whose price is the volume-weighted
// average of the consumed levels. Any unmatched remainder rests at the limit
// price. Cancels remove only the unfilled remainder of an order; quantity
// already traded stays traded.
class OrderBook {
public:
  OrderBook() = default;

  // Applies an Add order. Returns the transactions it generated (zero or one).
  std::vector<Transaction> apply(const Order& order) {
    std::vector<Transaction> out;
    apply(order, out);
    return out;
  }

  void apply(const Order& order, std::vector<Transaction>& out) {
    if (order.kind != OrderKind::Add) {
      throw InvalidOrderError("apply: order " + std::to_string(order.id) + " is not an add");
    }
    if (order.size == 0) {
      throw InvalidOrderError("order " + std::to_string(order.id) + " has zero size");
    }
    if (order.price <= 0) {
      throw InvalidOrderError("order " + std::to_string(order.id) + " has non-positive price");
    }
    if (index_.contains(order.id)) {
      throw InvalidOrderError("duplicate order id " + std::to_string(order.id));
    }

    const Side side = order.side();
    Quantity left = order.quantity();
    Quantity filled = 0;
    // Sum of price * qty over consumed liquidity; exact in 64 bits for
    // realistic tick prices and sizes.
    std::int64_t notional = 0;

    auto consume = [&](auto& opposing, auto crosses) {
      while (left > 0 && !opposing.empty() && crosses(opposing.begin()->first)) {
        auto level_it = opposing.begin();
        const PriceTicks price = level_it->first;
        PriceLevel& level = level_it->second;
        while (left > 0 && !level.queue.empty()) {
          RestingOrder& resting = level.queue.front();
          const Quantity take = std::min(left, resting.remaining);
          resting.remaining -= take;
          level.volume -= take;
          left -= take;
          filled += take;
          notional += price * take;
          auto& state = index_.at(resting.id);
          state.remaining -= take;
          if (resting.remaining == 0) level.queue.pop_front();
        }
        if (level.queue.empty()) {
          if (level.volume != 0) throw InvariantError("level volume out of sync with queue");
          opposing.erase(level_it);
        }
      }
    };

    if (side == Side::Buy) {
      consume(asks_, [&](PriceTicks ask) { return ask <= order.price; });
    } else {
      consume(bids_, [&](PriceTicks bid) { return bid >= order.price; });
    }

    if (filled > 0) {
      Transaction tx;
      tx.price = div_round_half_even(notional * kFixedScale, filled);
      tx.size = side == Side::Buy ? -filled : filled;
      tx.time = order.time;
      out.push_back(tx);
    }

    index_.emplace(order.id, IndexEntry{side, order.price, left});
    if (left > 0) {
      PriceLevel& level = side == Side::Buy ? bids_[order.price] : asks_[order.price];
      level.volume += left;
      level.queue.push_back(RestingOrder{order.id, left});
    }
    check_uncrossed();
  }

  // Removes the unfilled remainder of a previously added order.
  CancelResult cancel(OrderId id) {
    auto it = index_.find(id);
    if (it == index_.end()) throw NotFoundError("cancel: unknown order id " + std::to_string(id));
    IndexEntry& entry = it->second;
    if (entry.remaining == 0) return CancelResult{CancelStatus::AlreadyFilled, 0};

    auto remove = [&](auto& ladder) {
      auto level_it = ladder.find(entry.price);
      if (level_it == ladder.end()) throw InvariantError("cancel: resting level missing");
      PriceLevel& level = level_it->second;
      auto pos = std::find_if(level.queue.begin(), level.queue.end(),
                              [id](const RestingOrder& r) { return r.id == id; });
      if (pos == level.queue.end()) throw InvariantError("cancel: order missing from queue");
      const Quantity qty = pos->remaining;
      level.queue.erase(pos);
      level.volume -= qty;
      if (level.queue.empty()) ladder.erase(level_it);
      return qty;
    };
    const Quantity removed = entry.side == Side::Buy ? remove(bids_) : remove(asks_);
    entry.remaining = 0;
    return CancelResult{CancelStatus::Removed, removed};
  }

  // Applies either kind; transactions from adds are appended to `out`.
  void process(const Order& order, std::vector<Transaction>& out) {
    if (order.kind == OrderKind::Add) {
      apply(order, out);
    } else {
      cancel(order.id);
    }
  }

  BookLevels levels() const {
    BookLevels out;
    for (const auto& [p, level] : bids_) out.bids.emplace(p, level.volume);
    for (const auto& [p, level] : asks_) out.asks.emplace(p, level.volume);
    return out;
  }

  const std::map<PriceTicks, PriceLevel, std::greater<>>& bids() const noexcept { return bids_; }
  const std::map<PriceTicks, PriceLevel>& asks() const noexcept { return asks_; }

  bool empty() const noexcept { return bids_.empty() && asks_.empty(); }

  std::optional<PriceTicks> best_bid() const {
    if (bids_.empty()) return std::nullopt;
    return bids_.begin()->first;
  }
  std::optional<PriceTicks> best_ask() const {
    if (asks_.empty()) return std::nullopt;
    return asks_.begin()->first;
  }

  // Unfilled quantity of a known order; nullopt when the id was never added.
  std::optional<Quantity> remaining(OrderId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second.remaining;
  }

  bool operator==(const OrderBook& other) const {
    return bids_ == other.bids_ && asks_ == other.asks_;
  }

private:
  struct IndexEntry {
    Side side;
    PriceTicks price;
    Quantity remaining;
  };

  void check_uncrossed() const {
    if (!bids_.empty() && !asks_.empty() && bids_.begin()->first >= asks_.begin()->first) {
      throw InvariantError("crossed book: bid " + std::to_string(bids_.begin()->first) +
                           " >= ask " + std::to_string(asks_.begin()->first));
    }
  }

  std::map<PriceTicks, PriceLevel, std::greater<>> bids_;
  std::map<PriceTicks, PriceLevel> asks_;
  std::unordered_map<OrderId, IndexEntry> index_;
};

// Functional forms of the engine operations.
inline std::pair<OrderBook, std::vector<Transaction>> apply_order(OrderBook book, const Order& order) {
  auto txs = book.apply(order);
  return {std::move(book), std::move(txs)};
}

inline OrderBook cancel_order(OrderBook book, OrderId id) {
  book.cancel(id);
  return book;
}

inline BookLevels merge_books(const OrderBook& a, const OrderBook& b) {
  return merge_books(a.levels(), b.levels());
}

struct ReplayResult {
  OrderBook book;
  std::vector<Transaction> transactions;
};

// Folds a time-sorted order sequence into a fresh book.
inline ReplayResult replay(std::span<const Order> orders) {
  ReplayResult r;
  for (const Order& o : orders) r.book.process(o, r.transactions);
  return r;
}

}  // namespace microflow
