#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "microflow/error.hpp"
#include "microflow/io/csv.hpp"
#include "microflow/io/orderflow.hpp"
#include "microflow/lob/order_book.hpp"
#include "microflow/nn/tensor.hpp"

namespace microflow {

// One fixed-length window [begin, end) of a trading day. Orders and
// transactions are index ranges into the owning SegmentedDay.
struct Segment {
  std::size_t index = 0;
  TimeMs begin = 0;
  TimeMs end = 0;
  std::size_t order_begin = 0, order_end = 0;
  std::size_t tx_begin = 0, tx_end = 0;
  BookLevels delta_bid;  // posted buy volume in the window, no matching
  BookLevels delta_ask;  // posted sell volume in the window, no matching
  BookLevels boundary;   // real book at `begin`
  double mid = 0.0;      // grid anchor in ticks; may be a half tick

  std::size_t order_count() const noexcept { return order_end - order_begin; }
  std::size_t transaction_count() const noexcept { return tx_end - tx_begin; }
};

struct SegmentedDay {
  DayStream stream;
  std::vector<Transaction> transactions;  // full-day replay log
  std::vector<Segment> segments;
  BookLevels close_book;  // real book at session end

  std::span<const Order> orders(const Segment& s) const {
    return std::span<const Order>(stream.orders).subspan(s.order_begin, s.order_end - s.order_begin);
  }
  std::span<const Transaction> transactions_of(const Segment& s) const {
    return std::span<const Transaction>(transactions).subspan(s.tx_begin, s.tx_end - s.tx_begin);
  }
  // Real book at the end of segment n.
  const BookLevels& end_book(std::size_t n) const {
    return n + 1 < segments.size() ? segments[n + 1].boundary : close_book;
  }
};

struct SegmentOptions {
  TimeMs delta_t_ms = 4000;
  // Anchor used before any two-sided quote or trade exists; 0 = first add price.
  double previous_close = 0.0;
};

// Posted volume of one side's adds in `orders`, accumulated into an empty
// book without matching. A cancel subtracts the order's posted size when the
// order was also posted in `orders`; cancels of earlier orders are ignored.
inline BookLevels accumulate_side(std::span<const Order> orders, Side side) {
  BookLevels out;
  std::unordered_map<OrderId, std::pair<PriceTicks, Quantity>> posted;
  for (const auto& o : orders) {
    if (o.kind == OrderKind::Add) {
      if (o.side() != side) continue;
      out.adjust(side, o.price, o.quantity());
      posted[o.id] = {o.price, o.quantity()};
    } else {
      auto it = posted.find(o.id);
      if (it == posted.end()) continue;
      out.adjust(side, it->second.first, -it->second.second);
      posted.erase(it);
    }
  }
  return out;
}

inline BookLevels accumulate_side(const SegmentedDay& day, const Segment& s, Side side) {
  return accumulate_side(day.orders(s), side);
}

inline SegmentedDay segment_day(DayStream stream, const SegmentOptions& opt = {}) {
  if (opt.delta_t_ms <= 0) throw ConfigError("segment length must be positive");
  validate(stream);
  SegmentedDay day;
  day.stream = std::move(stream);
  const auto& orders = day.stream.orders;
  const TimeMs t0 = day.stream.t0;
  const TimeMs session = day.stream.session_ms;
  const auto n_segments = static_cast<std::size_t>((session + opt.delta_t_ms - 1) / opt.delta_t_ms);

  double fallback = opt.previous_close;
  if (fallback <= 0.0) {
    for (const auto& o : orders) {
      if (o.kind == OrderKind::Add) {
        fallback = static_cast<double>(o.price);
        break;
      }
    }
  }
  std::optional<double> last_trade;

  OrderBook book;
  std::size_t next = 0;
  day.segments.reserve(n_segments);
  for (std::size_t n = 0; n < n_segments; ++n) {
    Segment s;
    s.index = n;
    s.begin = t0 + static_cast<TimeMs>(n) * opt.delta_t_ms;
    s.end = std::min(s.begin + opt.delta_t_ms, t0 + session);
    s.boundary = book.levels();
    const auto b = book.best_bid();
    const auto a = book.best_ask();
    if (b && a) {
      s.mid = 0.5 * static_cast<double>(*b + *a);
    } else if (last_trade) {
      s.mid = *last_trade;
    } else {
      s.mid = fallback;
    }
    s.order_begin = next;
    s.tx_begin = day.transactions.size();
    while (next < orders.size() && orders[next].time < s.end) {
      book.process(orders[next], day.transactions);
      ++next;
    }
    s.order_end = next;
    s.tx_end = day.transactions.size();
    if (s.tx_end > s.tx_begin) {
      last_trade = static_cast<double>(day.transactions.back().price) / static_cast<double>(kFixedScale);
    }
    const auto window = day.orders(s);
    s.delta_bid = accumulate_side(window, Side::Buy);
    s.delta_ask = accumulate_side(window, Side::Sell);
    day.segments.push_back(std::move(s));
  }
  if (next != orders.size()) throw InvariantError("orders outside the session window");
  day.close_book = book.levels();
  return day;
}

// Fixed-grid encoding: entries [0, K) are bid slots, [K, 2K) ask slots. Bid
// slot k sits at ceil(mid - (k+1)) and ask slot k at floor(mid + (k+1)), so a
// half-tick mid maps the nearest price on each side to slot 0. Prices are in
// ticks. Volumes are log1p-scaled; levels outside the grid are dropped.
inline void vectorize_into(const BookLevels& book, double mid, std::size_t k_levels, std::span<double> out) {
  if (!(mid > 0.0)) throw ConfigError("vectorize: mid must be positive");
  if (out.size() != 2 * k_levels) throw DimensionError("vectorize: output must have 2K entries");
  const auto bid0 = static_cast<PriceTicks>(std::ceil(mid - 1.0));
  const auto ask0 = static_cast<PriceTicks>(std::floor(mid + 1.0));
  std::fill(out.begin(), out.end(), 0.0);
  for (const auto& [p, v] : book.bids) {
    if (p > bid0) continue;
    const auto k = static_cast<std::size_t>(bid0 - p);
    if (k >= k_levels) break;
    out[k] = std::log1p(static_cast<double>(v));
  }
  for (const auto& [p, v] : book.asks) {
    if (p < ask0) continue;
    const auto k = static_cast<std::size_t>(p - ask0);
    if (k >= k_levels) break;
    out[k_levels + k] = std::log1p(static_cast<double>(v));
  }
}

inline std::vector<double> vectorize(const BookLevels& book, double mid, std::size_t k_levels) {
  std::vector<double> v(2 * k_levels);
  vectorize_into(book, mid, k_levels, v);
  return v;
}

// Per-day grid encodings, one row per segment, all on the segment's own grid.
struct DayVectors {
  std::size_t k_levels = 0;
  nn::Tensor boundary;   // O_{n-1}: book at segment start
  nn::Tensor real;       // O_n: book at segment end
  nn::Tensor delta_bid;  // accumulated buy orders in the segment
  nn::Tensor delta_ask;  // accumulated sell orders in the segment
  std::vector<double> mids;

  std::size_t size() const noexcept { return mids.size(); }
};

inline DayVectors vectorize_day(const SegmentedDay& day, std::size_t k_levels) {
  if (k_levels == 0) throw ConfigError("k_levels must be >= 1");
  const std::size_t n = day.segments.size();
  const std::size_t w = 2 * k_levels;
  DayVectors v;
  v.k_levels = k_levels;
  v.boundary = nn::Tensor(n, w);
  v.real = nn::Tensor(n, w);
  v.delta_bid = nn::Tensor(n, w);
  v.delta_ask = nn::Tensor(n, w);
  v.mids.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Segment& s = day.segments[i];
    v.mids[i] = s.mid;
    vectorize_into(s.boundary, s.mid, k_levels, v.boundary.row_span(i));
    vectorize_into(day.end_book(i), s.mid, k_levels, v.real.row_span(i));
    vectorize_into(s.delta_bid, s.mid, k_levels, v.delta_bid.row_span(i));
    vectorize_into(s.delta_ask, s.mid, k_levels, v.delta_ask.row_span(i));
  }
  return v;
}

inline constexpr std::string_view kSegmentHeader = "segment_index,n_orders,n_transactions,mid_ticks";

inline void write_segment_dump(const std::string& path, const SegmentedDay& day,
                               const std::vector<std::string>& comments = {}) {
  auto out = io::open_for_write(path);
  for (const auto& c : comments) out << "# " << c << '\n';
  out << kSegmentHeader << '\n';
  for (const auto& s : day.segments) {
    out << s.index << ',' << s.order_count() << ',' << s.transaction_count() << ',' << io::format_double(s.mid)
        << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace microflow
