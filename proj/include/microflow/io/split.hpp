#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "microflow/error.hpp"

namespace microflow {

struct SplitCounts {
  std::size_t train = 0;
  std::size_t valid = 0;
  std::size_t test = 0;

  bool operator==(const SplitCounts&) const = default;
};

// Contiguous chronological split in proportion train:valid:test. Counts are
// rounded (half away from zero) for train and valid; test takes the rest.
inline SplitCounts split_counts(std::size_t n_days, double train_w = 7.0, double valid_w = 1.0, double test_w = 4.0) {
  const double total = train_w + valid_w + test_w;
  if (train_w <= 0 || valid_w <= 0 || test_w <= 0) throw ConfigError("split weights must be positive");
  SplitCounts c;
  c.train = static_cast<std::size_t>(std::lround(static_cast<double>(n_days) * train_w / total));
  c.valid = static_cast<std::size_t>(std::lround(static_cast<double>(n_days) * valid_w / total));
  if (c.train + c.valid > n_days || c.train == 0 || c.valid == 0 || c.train + c.valid == n_days) {
    throw ConfigError("cannot split " + std::to_string(n_days) + " days into non-empty train/valid/test");
  }
  c.test = n_days - c.train - c.valid;
  return c;
}

template <typename T>
struct DaySplit {
  std::vector<T> train;
  std::vector<T> valid;
  std::vector<T> test;
};

template <typename T>
DaySplit<T> split_days(std::span<const T> days, double train_w = 7.0, double valid_w = 1.0, double test_w = 4.0) {
  const SplitCounts c = split_counts(days.size(), train_w, valid_w, test_w);
  DaySplit<T> s;
  s.train.assign(days.begin(), days.begin() + static_cast<std::ptrdiff_t>(c.train));
  s.valid.assign(days.begin() + static_cast<std::ptrdiff_t>(c.train),
                 days.begin() + static_cast<std::ptrdiff_t>(c.train + c.valid));
  s.test.assign(days.begin() + static_cast<std::ptrdiff_t>(c.train + c.valid), days.end());
  return s;
}

template <typename T>
DaySplit<T> split_days(const std::vector<T>& days, double train_w = 7.0, double valid_w = 1.0, double test_w = 4.0) {
  return split_days(std::span<const T>(days), train_w, valid_w, test_w);
}

}  // namespace microflow
