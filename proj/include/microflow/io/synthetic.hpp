#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "microflow/error.hpp"
#include "microflow/io/orderflow.hpp"
#include "microflow/lob/order_book.hpp"
#include "microflow/util/rng.hpp"

namespace microflow {

// Zero-intelligence order-flow model with optional planted anomaly windows.
//
// Events arrive as a Poisson process with total rate
//   2 * limit_rate (adds, split evenly by side) + cancel_rate.
// An add is marketable with probability market_prob: it is priced
// Geometric(0.5) ticks beyond the opposing best quote. Otherwise it
// rests Geometric(place_p) ticks away from the first grid price on its own
// side of the prevailing mid. Sizes are 1 + Geometric(size_p). A cancel
// targets a uniformly chosen live resting order.
//
// Anomaly windows cover exactly floor(anomaly_fraction * N) of the N segments
// of length segment_ms, in windows of anomaly_window_segments consecutive
// segments placed one per equal-width stratum of the session. Inside a window
// the add rate is multiplied by anomaly_rate_mult, sizes by
// anomaly_size_mult, marketable probability becomes anomaly_market_prob, and
// each add comes from the day's dominant side with probability
// anomaly_imbalance.
//
// Randomness comes from microflow::Rng (mt19937_64 with explicit
// distribution code), so a (config, seed) pair reproduces the stream exactly.
struct SynthConfig {
  std::string instrument = "SYN0";
  std::string date = "2024-01-02";
  TimeMs t0 = 34'200'000;  // 09:30:00
  TimeMs session_ms = 4 * 3600 * 1000;
  TimeMs segment_ms = 4000;
  PriceTicks initial_mid = 10'000;

  double limit_rate = 1.5;   // adds per second per side
  double cancel_rate = 1.0;  // cancels per second
  double market_prob = 0.25;
  double place_p = 0.35;
  double size_p = 0.2;

  double anomaly_fraction = 0.0;
  std::size_t anomaly_window_segments = 3;
  double anomaly_rate_mult = 4.0;
  double anomaly_size_mult = 3.0;
  double anomaly_market_prob = 0.7;
  double anomaly_imbalance = 0.9;

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0)) throw ConfigError(std::string("synthetic config: ") + name + " must be positive");
    };
    positive(limit_rate, "limit_rate");
    positive(cancel_rate, "cancel_rate");
    positive(static_cast<double>(session_ms), "session_ms");
    positive(static_cast<double>(segment_ms), "segment_ms");
    positive(static_cast<double>(initial_mid), "initial_mid");
    positive(anomaly_rate_mult, "anomaly_rate_mult");
    positive(anomaly_size_mult, "anomaly_size_mult");
    auto prob = [](double v, const char* name) {
      if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string("synthetic config: ") + name + " must be in [0, 1]");
    };
    prob(market_prob, "market_prob");
    prob(anomaly_market_prob, "anomaly_market_prob");
    prob(anomaly_imbalance, "anomaly_imbalance");
    prob(anomaly_fraction, "anomaly_fraction");
    if (!(place_p > 0.0 && place_p <= 1.0)) throw ConfigError("synthetic config: place_p must be in (0, 1]");
    if (!(size_p > 0.0 && size_p <= 1.0)) throw ConfigError("synthetic config: size_p must be in (0, 1]");
    if (anomaly_window_segments == 0) throw ConfigError("synthetic config: anomaly_window_segments must be >= 1");
  }

  std::size_t segment_count() const {
    return static_cast<std::size_t>((session_ms + segment_ms - 1) / segment_ms);
  }
};

struct SyntheticDay {
  DayStream stream;
  std::vector<std::uint8_t> labels;  // one per segment, 1 = planted anomaly
  int direction = 0;                 // +1 buy pressure, -1 sell pressure
};

// SplitMix64 finalizer; used to derive independent per-day seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return mix_seed(mix_seed(mix_seed(seed) ^ a) ^ b);
}

inline std::vector<std::uint8_t> plant_anomaly_windows(std::size_t n_segments, double fraction,
                                                       std::size_t window, Rng& rng) {
  std::vector<std::uint8_t> labels(n_segments, 0);
  const auto target = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n_segments) + 1e-9));
  if (target == 0) return labels;
  const std::size_t n_windows = (target + window - 1) / window;
  const std::size_t stratum = n_segments / n_windows;
  if (stratum < window) {
    // Windows cannot be spread out; label a contiguous prefix instead.
    std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(target), 1);
    return labels;
  }
  std::size_t left = target;
  for (std::size_t w = 0; w < n_windows; ++w) {
    const std::size_t len = std::min(window, left);
    const std::size_t lo = w * stratum;
    const std::size_t span = stratum > len ? stratum - len : 0;
    const std::size_t start = lo + static_cast<std::size_t>(rng.below(span + 1));
    for (std::size_t k = 0; k < len && start + k < n_segments; ++k) labels[start + k] = 1;
    left -= len;
  }
  return labels;
}

inline SyntheticDay generate_synthetic_day(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  SyntheticDay day;
  day.stream.instrument = cfg.instrument;
  day.stream.date = cfg.date;
  day.stream.t0 = cfg.t0;
  day.stream.session_ms = cfg.session_ms;
  day.direction = rng.bernoulli(0.5) ? 1 : -1;
  day.labels = plant_anomaly_windows(cfg.segment_count(), cfg.anomaly_fraction, cfg.anomaly_window_segments, rng);

  OrderBook book;
  std::vector<OrderId> live;
  std::vector<Transaction> scratch;
  OrderId next_id = 1;
  double ref_mid = static_cast<double>(cfg.initial_mid);
  double t = static_cast<double>(cfg.t0);
  const double end = static_cast<double>(cfg.t0 + cfg.session_ms);

  auto current_mid = [&]() {
    const auto b = book.best_bid();
    const auto a = book.best_ask();
    if (b && a) return 0.5 * static_cast<double>(*b + *a);
    if (a) return static_cast<double>(*a) - 0.5;
    if (b) return static_cast<double>(*b) + 0.5;
    return ref_mid;
  };

  while (true) {
    const auto seg = static_cast<std::size_t>((t - static_cast<double>(cfg.t0)) / static_cast<double>(cfg.segment_ms));
    const bool anomalous = seg < day.labels.size() && day.labels[seg] != 0;
    const double add_rate = 2.0 * cfg.limit_rate * (anomalous ? cfg.anomaly_rate_mult : 1.0);
    const double total_rate = add_rate + cfg.cancel_rate;
    t += rng.exponential(total_rate / 1000.0);
    if (t >= end) break;
    const auto now = static_cast<TimeMs>(std::floor(t));
    const auto now_seg = static_cast<std::size_t>((now - cfg.t0) / cfg.segment_ms);
    const bool in_window = now_seg < day.labels.size() && day.labels[now_seg] != 0;

    if (rng.uniform() * total_rate < cfg.cancel_rate) {
      // Cancel a live order; skip silently when nothing rests.
      while (!live.empty()) {
        const std::size_t k = static_cast<std::size_t>(rng.below(live.size()));
        const OrderId id = live[k];
        live[k] = live.back();
        live.pop_back();
        if (book.remaining(id).value_or(0) > 0) {
          book.cancel(id);
          day.stream.orders.push_back(Order::cancel(id, now));
          break;
        }
      }
      continue;
    }

    bool buy;
    double market_prob = cfg.market_prob;
    if (in_window) {
      const bool dominant = rng.bernoulli(cfg.anomaly_imbalance);
      buy = dominant ? day.direction > 0 : day.direction < 0;
      market_prob = cfg.anomaly_market_prob;
    } else {
      buy = rng.bernoulli(0.5);
    }
    const bool marketable = rng.bernoulli(market_prob);
    const double mid = current_mid();
    PriceTicks price;
    if (marketable) {
      const auto through = rng.geometric(0.5);
      if (buy) {
        const auto a = book.best_ask();
        price = a ? *a + through : static_cast<PriceTicks>(std::ceil(mid)) + through;
      } else {
        const auto b = book.best_bid();
        price = b ? *b - through : static_cast<PriceTicks>(std::floor(mid)) - through;
      }
    } else {
      const auto away = rng.geometric(cfg.place_p);
      price = buy ? static_cast<PriceTicks>(std::ceil(mid)) - 1 - away
                  : static_cast<PriceTicks>(std::floor(mid)) + 1 + away;
    }
    price = std::max<PriceTicks>(price, 1);
    Quantity qty = 1 + rng.geometric(cfg.size_p);
    if (in_window) qty = std::max<Quantity>(1, static_cast<Quantity>(std::llround(static_cast<double>(qty) * cfg.anomaly_size_mult)));

    const Order o = Order::add(next_id++, price, buy ? -qty : qty, now);
    scratch.clear();
    book.apply(o, scratch);
    if (!scratch.empty()) ref_mid = scratch.back().price_ticks();
    if (book.remaining(o.id).value_or(0) > 0) live.push_back(o.id);
    day.stream.orders.push_back(o);
  }
  return day;
}

}  // namespace microflow
