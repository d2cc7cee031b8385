#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "microflow/lob/types.hpp"

namespace microflow::test_support {

// Random add/cancel stream around a fixed center price. Roughly
// `marketable_share` of adds are priced through the center so they can cross
// resting liquidity; the rest rest passively on their own side.
inline std::vector<Order> random_order_stream(std::size_t count, std::uint64_t seed,
                                              double marketable_share = 0.3,
                                              double cancel_share = 0.2,
                                              PriceTicks center = 1000) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> passive_off(1, 10);
  std::uniform_int_distribution<int> aggressive_off(0, 5);
  std::uniform_int_distribution<Quantity> qty(1, 20);

  std::vector<Order> out;
  std::vector<OrderId> added;
  out.reserve(count);
  OrderId next_id = 1;
  TimeMs t = 0;
  while (out.size() < count) {
    t += static_cast<TimeMs>(u01(rng) * 3.0);  // frequent equal timestamps
    if (!added.empty() && u01(rng) < cancel_share) {
      std::uniform_int_distribution<std::size_t> pick(0, added.size() - 1);
      out.push_back(Order::cancel(added[pick(rng)], t));
      continue;
    }
    const bool buy = u01(rng) < 0.5;
    const bool aggressive = u01(rng) < marketable_share;
    PriceTicks price;
    if (buy) {
      price = aggressive ? center + aggressive_off(rng) : center - passive_off(rng);
    } else {
      price = aggressive ? center - aggressive_off(rng) : center + passive_off(rng);
    }
    const Quantity q = qty(rng);
    out.push_back(Order::add(next_id, price, buy ? -q : q, t));
    added.push_back(next_id);
    ++next_id;
  }
  return out;
}

}  // namespace microflow::test_support
