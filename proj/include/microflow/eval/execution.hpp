#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "microflow/error.hpp"
#include "microflow/eval/metrics.hpp"
#include "microflow/lob/types.hpp"

namespace microflow::eval {

inline constexpr TimeMs kMinuteMs = 60'000;

enum class MinuteStat : std::size_t { Mean, Median, Max, Min, Var, Range };
inline constexpr std::size_t kMinuteStatCount = 6;

inline MinuteStat parse_minute_stat(const std::string& s) {
  if (s == "mean") return MinuteStat::Mean;
  if (s == "median") return MinuteStat::Median;
  if (s == "max") return MinuteStat::Max;
  if (s == "min") return MinuteStat::Min;
  if (s == "var") return MinuteStat::Var;
  if (s == "range") return MinuteStat::Range;
  throw ConfigError("minute statistic must be one of mean, median, max, min, var, range; got '" + s + "'");
}

// Per-minute trade VWAP; minutes without trades have no price.
struct MinutePrices {
  std::vector<double> vwap;
  std::vector<std::uint8_t> has_price;
  double day_vwap = 0.0;

  std::size_t size() const noexcept { return vwap.size(); }
};

inline std::size_t minute_count(TimeMs session_ms, TimeMs minute_ms = kMinuteMs) {
  if (session_ms <= 0 || minute_ms <= 0) throw ConfigError("session and minute lengths must be positive");
  return static_cast<std::size_t>((session_ms + minute_ms - 1) / minute_ms);
}

inline MinutePrices minute_prices(std::span<const Transaction> z, TimeMs t0, TimeMs session_ms,
                                  TimeMs minute_ms = kMinuteMs) {
  const std::size_t n = minute_count(session_ms, minute_ms);
  std::vector<double> notional(n, 0.0), volume(n, 0.0);
  double day_notional = 0.0, day_volume = 0.0;
  for (const auto& t : z) {
    const auto m = static_cast<std::size_t>(std::clamp<TimeMs>((t.time - t0) / minute_ms, 0, static_cast<TimeMs>(n - 1)));
    const double q = static_cast<double>(t.quantity());
    notional[m] += t.price_ticks() * q;
    volume[m] += q;
    day_notional += t.price_ticks() * q;
    day_volume += q;
  }
  MinutePrices out;
  out.vwap.assign(n, 0.0);
  out.has_price.assign(n, 0);
  for (std::size_t m = 0; m < n; ++m) {
    if (volume[m] > 0.0) {
      out.vwap[m] = notional[m] / volume[m];
      out.has_price[m] = 1;
    }
  }
  out.day_vwap = day_volume > 0.0 ? day_notional / day_volume : 0.0;
  return out;
}

// Mean, median, max, min, variance (population) and range of the scores
// falling in each minute; all zero for minutes without scores.
inline std::vector<std::array<double, kMinuteStatCount>> minute_aggregates(std::span<const double> scores,
                                                                           std::span<const TimeMs> times, TimeMs t0,
                                                                           std::size_t n_minutes,
                                                                           TimeMs minute_ms = kMinuteMs) {
  if (scores.size() != times.size()) throw DimensionError("scores and times differ in length");
  std::vector<std::vector<double>> bucket(n_minutes);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto m = (times[i] - t0) / minute_ms;
    if (m < 0 || static_cast<std::size_t>(m) >= n_minutes) continue;
    bucket[static_cast<std::size_t>(m)].push_back(scores[i]);
  }
  std::vector<std::array<double, kMinuteStatCount>> out(n_minutes);
  for (std::size_t m = 0; m < n_minutes; ++m) {
    auto& b = bucket[m];
    auto& a = out[m];
    a.fill(0.0);
    if (b.empty()) continue;
    std::sort(b.begin(), b.end());
    const std::size_t k = b.size();
    const double mu = mean(b);
    a[0] = mu;
    a[1] = k % 2 ? b[k / 2] : 0.5 * (b[k / 2 - 1] + b[k / 2]);
    a[2] = b.back();
    a[3] = b.front();
    double v = 0.0;
    for (double x : b) v += (x - mu) * (x - mu);
    a[4] = v / static_cast<double>(k);
    a[5] = b.back() - b.front();
  }
  return out;
}

inline std::vector<double> minute_signal(const std::vector<std::array<double, kMinuteStatCount>>& agg,
                                         MinuteStat stat) {
  std::vector<double> out(agg.size());
  for (std::size_t m = 0; m < agg.size(); ++m) out[m] = agg[m][static_cast<std::size_t>(stat)];
  return out;
}

struct ExecutionOutcome {
  ExecutionRecord record;
  std::vector<double> weights;  // per minute, sums to 1
  bool fallback = false;        // true when the policy degenerated to TWAP
};

namespace detail {

inline ExecutionOutcome execute(std::vector<std::uint8_t> chosen, const MinutePrices& prices) {
  ExecutionOutcome out;
  std::size_t count = 0;
  for (std::size_t m = 0; m < chosen.size(); ++m) {
    chosen[m] = chosen[m] && prices.has_price[m];
    count += chosen[m];
  }
  if (count == 0) {
    out.fallback = true;
    for (std::size_t m = 0; m < chosen.size(); ++m) {
      chosen[m] = prices.has_price[m];
      count += chosen[m];
    }
  }
  if (count == 0) throw ConfigError("execution day has no traded minute");
  out.weights.assign(chosen.size(), 0.0);
  double px = 0.0;
  for (std::size_t m = 0; m < chosen.size(); ++m) {
    if (!chosen[m]) continue;
    out.weights[m] = 1.0 / static_cast<double>(count);
    px += prices.vwap[m];
  }
  out.record = {px / static_cast<double>(count), prices.day_vwap};
  return out;
}

}  // namespace detail

// Sells one unit evenly over every minute with a price.
inline ExecutionOutcome twap_execution(const MinutePrices& prices) {
  return detail::execute(std::vector<std::uint8_t>(prices.size(), 0), prices);
}

// Sells one unit evenly over the minutes whose signal exceeds the day's median
// signal. Scheduled minutes without a price are skipped and the remaining
// weights renormalized; with no usable minute the order falls back to TWAP.
inline ExecutionOutcome threshold_execution(std::span<const double> signal, const MinutePrices& prices) {
  if (signal.size() != prices.size()) throw DimensionError("signal and minute prices differ in length");
  if (signal.empty()) throw ConfigError("execution over zero minutes");
  std::vector<double> sorted(signal.begin(), signal.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t k = sorted.size();
  const double median = k % 2 ? sorted[k / 2] : 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]);
  std::vector<std::uint8_t> chosen(k, 0);
  for (std::size_t m = 0; m < k; ++m) chosen[m] = signal[m] > median;
  return detail::execute(std::move(chosen), prices);
}

}  // namespace microflow::eval
