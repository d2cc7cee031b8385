#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "microflow/error.hpp"
#include "microflow/io/csv.hpp"
#include "microflow/io/orderflow.hpp"
#include "microflow/io/split.hpp"
#include "microflow/io/synthetic.hpp"
#include "microflow/pipeline/run_config.hpp"

namespace microflow::pipeline {

namespace fs = std::filesystem;

inline constexpr std::string_view kManifestHeader = "instrument,date,orders_file,labels_file,close";
inline constexpr const char* kManifestName = "days.csv";

// One row of the day manifest. Paths are relative to the data directory;
// labels_file may be empty and close may be absent.
struct DayEntry {
  std::string instrument;
  std::string date;
  std::string orders_file;
  std::string labels_file;
  std::optional<double> close;

  bool operator==(const DayEntry&) const = default;
};

inline std::chrono::sys_days parse_date(const std::string& s) {
  int y = 0;
  unsigned m = 0, d = 0;
  if (s.size() != 10 || s[4] != '-' || s[7] != '-' || !io::parse_number(std::string_view(s).substr(0, 4), y) ||
      !io::parse_number(std::string_view(s).substr(5, 2), m) ||
      !io::parse_number(std::string_view(s).substr(8, 2), d)) {
    throw ConfigError("date '" + s + "' is not yyyy-mm-dd");
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) throw ConfigError("date '" + s + "' does not exist");
  return std::chrono::sys_days{ymd};
}

inline std::string format_date(std::chrono::sys_days t) {
  const std::chrono::year_month_day ymd{t};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

// `n` consecutive weekdays starting at `start` (moved forward if it falls on
// a weekend).
inline std::vector<std::string> weekdays(const std::string& start, std::size_t n) {
  std::vector<std::string> out;
  auto t = parse_date(start);
  while (out.size() < n) {
    const std::chrono::weekday wd{t};
    if (wd != std::chrono::Saturday && wd != std::chrono::Sunday) out.push_back(format_date(t));
    t += std::chrono::days{1};
  }
  return out;
}

inline void write_manifest(const std::string& path, const std::vector<DayEntry>& days,
                           const std::vector<std::string>& comments = {}) {
  auto out = io::open_for_write(path);
  for (const auto& c : comments) out << "# " << c << '\n';
  out << kManifestHeader << '\n';
  for (const auto& d : days) {
    out << d.instrument << ',' << d.date << ',' << d.orders_file << ',' << d.labels_file << ','
        << (d.close ? io::format_double(*d.close) : "") << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

// Rows sorted by (date, instrument); duplicate (instrument, date) rejected.
inline std::vector<DayEntry> read_manifest(const std::string& path) {
  io::LineReader r(path);
  io::expect_header(r, kManifestHeader);
  std::vector<DayEntry> days;
  std::string line;
  while (r.next(line)) {
    auto f = io::split(line);
    if (f.size() != 5) r.fail("expected 5 fields");
    DayEntry e{std::string(f[0]), std::string(f[1]), std::string(f[2]), std::string(f[3]), std::nullopt};
    if (e.instrument.empty() || e.orders_file.empty()) r.fail("instrument and orders_file are required");
    try {
      parse_date(e.date);
    } catch (const ConfigError& err) {
      r.fail(err.what());
    }
    if (!f[4].empty()) {
      double c = 0.0;
      if (!io::parse_number(f[4], c) || !(c > 0.0)) r.fail("close must be a positive number");
      e.close = c;
    }
    days.push_back(std::move(e));
  }
  std::sort(days.begin(), days.end(), [](const DayEntry& a, const DayEntry& b) {
    return a.date != b.date ? a.date < b.date : a.instrument < b.instrument;
  });
  for (std::size_t i = 1; i < days.size(); ++i) {
    if (days[i].date == days[i - 1].date && days[i].instrument == days[i - 1].instrument) {
      throw FormatError(path + ": duplicate day " + days[i].instrument + " " + days[i].date);
    }
  }
  return days;
}

// Which split each manifest row falls in, by chronological 7:1:4 split of
// the distinct dates.
enum class Split : std::uint8_t { Train, Valid, Test };

inline std::vector<Split> assign_splits(const std::vector<DayEntry>& days) {
  std::vector<std::string> dates;
  for (const auto& d : days) {
    if (dates.empty() || dates.back() != d.date) dates.push_back(d.date);
  }
  const auto c = split_counts(dates.size());
  std::map<std::string, Split> by_date;
  for (std::size_t i = 0; i < dates.size(); ++i) {
    by_date[dates[i]] = i < c.train ? Split::Train : i < c.train + c.valid ? Split::Valid : Split::Test;
  }
  std::vector<Split> out;
  out.reserve(days.size());
  for (const auto& d : days) out.push_back(by_date.at(d.date));
  return out;
}

inline std::vector<std::size_t> indices_in(const std::vector<Split>& s, Split which) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == which) out.push_back(i);
  }
  return out;
}

inline std::string day_key(const DayEntry& d) { return d.instrument + "_" + d.date; }

// Synthetic panel: synth.instruments x synth.days of zero-intelligence order
// flow. Each instrument-day carries anomaly windows with probability
// synth.anomaly_day_prob. Daily closes are constructed so that the next-day
// return y_T = close_{T+2}/close_{T+1} - 1 equals
// label_beta * direction_T * [day T anomalous] + N(0, label_noise^2).
inline std::vector<DayEntry> generate_panel(const RunConfig& cfg, const std::string& data_dir,
                                            const std::string& hash) {
  cfg.validate();
  const auto dates = weekdays(cfg.synth_start_date, cfg.synth_days);
  fs::create_directories(data_dir);
  std::vector<DayEntry> out;
  for (std::size_t i = 0; i < cfg.synth_instruments; ++i) {
    const std::string inst = "SYN" + std::to_string(i);
    fs::create_directories(fs::path(data_dir) / inst);
    Rng close_rng(derive_seed(cfg.seed, 0xC105E, i));
    std::vector<double> closes(dates.size(), 0.0);
    std::vector<double> signal(dates.size(), 0.0);
    for (std::size_t d = 0; d < dates.size(); ++d) {
      SynthConfig sc = cfg.synth_config();
      sc.instrument = inst;
      sc.date = dates[d];
      Rng day_rng(derive_seed(cfg.seed, 0xDA7, i * 100003 + d));
      const bool anomalous = day_rng.bernoulli(cfg.synth_anomaly_day_prob);
      if (!anomalous) sc.anomaly_fraction = 0.0;
      const auto day = generate_synthetic_day(sc, day_rng.next_u64());
      signal[d] = anomalous && sc.anomaly_fraction > 0.0 ? day.direction : 0.0;
      const std::string stem = inst + "/" + dates[d];
      const std::vector<std::string> meta{"config_hash=" + hash};
      io::write_orderflow((fs::path(data_dir) / (stem + ".orders.csv")).string(), day.stream, meta);
      io::write_labels((fs::path(data_dir) / (stem + ".labels.csv")).string(), day.labels, meta);
      out.push_back({inst, dates[d], stem + ".orders.csv", stem + ".labels.csv", std::nullopt});
    }
    const std::size_t n = dates.size();
    if (n > 0) closes[0] = 100.0 * (1.0 + 0.1 * static_cast<double>(i));
    if (n > 1) closes[1] = closes[0] * (1.0 + close_rng.normal(0.0, cfg.synth_label_noise));
    for (std::size_t t = 0; t + 2 < n; ++t) {
      const double y = cfg.synth_label_beta * signal[t] + close_rng.normal(0.0, cfg.synth_label_noise);
      closes[t + 2] = closes[t + 1] * (1.0 + y);
    }
    for (std::size_t d = 0; d < n; ++d) out[out.size() - n + d].close = closes[d];
  }
  std::sort(out.begin(), out.end(), [](const DayEntry& a, const DayEntry& b) {
    return a.date != b.date ? a.date < b.date : a.instrument < b.instrument;
  });
  return out;
}

// Daily closes per instrument in date order, with the manifest row of each.
struct CloseSeries {
  std::vector<std::size_t> rows;
  std::vector<double> closes;
};

inline std::map<std::string, CloseSeries> close_series(const std::vector<DayEntry>& days) {
  std::map<std::string, CloseSeries> out;
  for (std::size_t i = 0; i < days.size(); ++i) {
    if (!days[i].close) continue;
    auto& s = out[days[i].instrument];
    s.rows.push_back(i);
    s.closes.push_back(*days[i].close);
  }
  return out;
}

}  // namespace microflow::pipeline
