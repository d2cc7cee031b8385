#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "microflow/error.hpp"
#include "microflow/lob/book_levels.hpp"
#include "microflow/segment/segmenter.hpp"
#include "microflow/util/rng.hpp"

namespace microflow::baselines {

inline constexpr std::size_t kDepth = 5;
inline constexpr std::size_t kHfStaticDim = 6 * kDepth;  // bid/ask price, bid/ask volume, spread, mid
inline constexpr std::size_t kHfDynamicDim = 4 * kDepth;  // first differences of bid/ask price and volume
inline constexpr std::size_t kHfDim = kHfStaticDim + kHfDynamicDim;

// Seeded draw of `count` distinct entries of `candidates` without replacement,
// returned in ascending order.
inline std::vector<std::size_t> random_sample(std::span<const std::size_t> candidates, std::size_t count,
                                              std::uint64_t seed) {
  if (count > candidates.size()) throw ConfigError("sample count exceeds the number of segments");
  std::vector<std::size_t> pool(candidates.begin(), candidates.end());
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

// Every floor(N / count)-th candidate starting from the first.
inline std::vector<std::size_t> uniform_sample(std::span<const std::size_t> candidates, std::size_t count) {
  if (count > candidates.size()) throw ConfigError("sample count exceeds the number of segments");
  if (count == 0) return {};
  const std::size_t stride = candidates.size() / count;
  std::vector<std::size_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = candidates[i * stride];
  return out;
}

namespace detail {

inline std::vector<std::size_t> segment_of_transactions(const SegmentedDay& day) {
  std::vector<std::size_t> seg(day.transactions.size(), 0);
  for (const auto& s : day.segments) {
    for (std::size_t k = s.tx_begin; k < s.tx_end; ++k) seg[k] = s.index;
  }
  return seg;
}

// Walks transactions from the highest and lowest `key` inwards, alternating
// sides, and collects distinct segments until `count` are found.
template <typename Key>
std::vector<std::size_t> extreme_segments(const SegmentedDay& day, std::size_t count, Key key) {
  const auto& z = day.transactions;
  if (z.empty() || count == 0) return {};
  const auto seg = segment_of_transactions(day);
  std::vector<std::size_t> idx(z.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return key(z[a]) < key(z[b]); });
  std::vector<std::uint8_t> taken(day.segments.size(), 0);
  std::vector<std::size_t> out;
  std::size_t hi = idx.size(), lo = 0;
  bool from_top = true;
  while (out.size() < count && lo < hi) {
    const std::size_t k = from_top ? idx[--hi] : idx[lo++];
    from_top = !from_top;
    if (!taken[seg[k]]) {
      taken[seg[k]] = 1;
      out.push_back(seg[k]);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

// Segments holding the day's most extreme trade prices, high and low
// alternately, deduplicated, up to `count` segments. Empty day -> empty.
inline std::vector<std::size_t> price_extreme_segments(const SegmentedDay& day, std::size_t count) {
  return detail::extreme_segments(day, count, [](const Transaction& t) { return t.price; });
}

// Same rule on trade size |w|.
inline std::vector<std::size_t> volume_extreme_segments(const SegmentedDay& day, std::size_t count) {
  return detail::extreme_segments(day, count, [](const Transaction& t) { return t.quantity(); });
}

inline Quantity depth(const BookLevels& book, Side side, std::size_t levels) {
  Quantity v = 0;
  for (std::size_t k = 0; k < levels; ++k) {
    if (auto l = book.level(side, k)) v += l->second;
  }
  return v;
}

// ln(bid depth) - ln(ask depth) over the five best levels; NaN when a side
// is empty.
inline double order_imbalance(const BookLevels& book) {
  const Quantity b = depth(book, Side::Buy, kDepth);
  const Quantity a = depth(book, Side::Sell, kDepth);
  if (b <= 0 || a <= 0) return std::numeric_limits<double>::quiet_NaN();
  return std::log(static_cast<double>(b)) - std::log(static_cast<double>(a));
}

// Per level k: (bid volume - ask volume) at level k of book n minus the same
// quantity for book n-1. The first book of the window maps to zeros.
inline std::vector<std::array<double, kDepth>> time_sensitive_order_imbalance(
    std::span<const BookLevels* const> books) {
  std::vector<std::array<double, kDepth>> out(books.size());
  auto level_gap = [](const BookLevels& b, std::size_t k) {
    const auto bid = b.level(Side::Buy, k);
    const auto ask = b.level(Side::Sell, k);
    return static_cast<double>(bid ? bid->second : 0) - static_cast<double>(ask ? ask->second : 0);
  };
  for (std::size_t n = 0; n < books.size(); ++n) {
    out[n].fill(0.0);
    if (n == 0) continue;
    for (std::size_t k = 0; k < kDepth; ++k) out[n][k] = level_gap(*books[n], k) - level_gap(*books[n - 1], k);
  }
  return out;
}

// Fixed-width book description, missing levels zero-filled.
// [0, 30): per level bid price, ask price, bid volume, ask volume, spread, mid.
// [30, 50): per level change of bid price, ask price, bid volume, ask volume
// against `prev` (zeros when prev is null).
inline std::array<double, kHfDim> high_freq_lob_features(const BookLevels& book, const BookLevels* prev) {
  std::array<double, kHfDim> f{};
  auto level = [](const BookLevels& b, Side s, std::size_t k) {
    const auto l = b.level(s, k);
    return l ? std::array<double, 2>{static_cast<double>(l->first), static_cast<double>(l->second)}
             : std::array<double, 2>{0.0, 0.0};
  };
  for (std::size_t k = 0; k < kDepth; ++k) {
    const auto bid = level(book, Side::Buy, k);
    const auto ask = level(book, Side::Sell, k);
    double* row = &f[6 * k];
    row[0] = bid[0];
    row[1] = ask[0];
    row[2] = bid[1];
    row[3] = ask[1];
    const bool both = bid[0] > 0.0 && ask[0] > 0.0;
    row[4] = both ? ask[0] - bid[0] : 0.0;
    row[5] = both ? 0.5 * (ask[0] + bid[0]) : 0.0;
    if (prev) {
      const auto pb = level(*prev, Side::Buy, k);
      const auto pa = level(*prev, Side::Sell, k);
      double* d = &f[kHfStaticDim + 4 * k];
      d[0] = bid[0] - pb[0];
      d[1] = ask[0] - pa[0];
      d[2] = bid[1] - pb[1];
      d[3] = ask[1] - pa[1];
    }
  }
  return f;
}

// Boundary books of a day in segment order.
inline std::vector<const BookLevels*> boundary_books(const SegmentedDay& day) {
  std::vector<const BookLevels*> out;
  out.reserve(day.segments.size());
  for (const auto& s : day.segments) out.push_back(&s.boundary);
  return out;
}

}  // namespace microflow::baselines
