#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "microflow/io/csv.hpp"
#include "microflow/lob/types.hpp"

namespace microflow {

// One instrument-day of order flow.
struct DayStream {
  std::string instrument;
  std::string date;  // ISO yyyy-mm-dd
  TimeMs t0 = 0;
  TimeMs session_ms = 0;
  std::vector<Order> orders;

  bool operator==(const DayStream&) const = default;
};

// Throws FormatError if orders are unsorted or fall outside the session.
inline void validate(const DayStream& day) {
  if (day.session_ms <= 0) throw FormatError("day " + day.date + ": non-positive session length");
  for (std::size_t i = 0; i < day.orders.size(); ++i) {
    const auto& o = day.orders[i];
    if (i > 0 && o.time < day.orders[i - 1].time) {
      throw FormatError("day " + day.date + ": order " + std::to_string(o.id) + " at row " + std::to_string(i + 1) +
                        " is out of time order");
    }
    if (o.time < day.t0 || o.time > day.t0 + day.session_ms) {
      throw FormatError("day " + day.date + ": order " + std::to_string(o.id) + " outside session window");
    }
  }
}

namespace io {

inline constexpr std::string_view kOrderHeader = "time_ms,order_id,kind,price_ticks,size";
inline constexpr std::string_view kTransactionHeader = "time_ms,price_x10000,size";
inline constexpr std::string_view kLabelHeader = "segment_index,label";

struct ParseOptions {
  bool drop_cancels = false;
  // Used when the file carries no "# t0_ms=" / "# session_ms=" metadata.
  TimeMs default_t0 = 0;
  TimeMs default_session_ms = 0;
};

inline DayStream parse_orderflow(const std::string& path, const ParseOptions& opt = {}) {
  LineReader r(path);
  expect_header(r, kOrderHeader);
  DayStream day;
  std::string line;
  while (r.next(line)) {
    auto f = split(line);
    if (f.size() != 5) r.fail("expected 5 fields, got " + std::to_string(f.size()));
    Order o;
    if (!parse_number(f[0], o.time)) r.fail("bad time_ms '" + std::string(f[0]) + "'");
    if (!parse_number(f[1], o.id)) r.fail("bad order_id '" + std::string(f[1]) + "'");
    if (f[2] == "A") {
      o.kind = OrderKind::Add;
    } else if (f[2] == "C") {
      o.kind = OrderKind::Cancel;
    } else {
      r.fail("bad kind '" + std::string(f[2]) + "', expected A or C");
    }
    if (!parse_number(f[3], o.price)) r.fail("bad price_ticks '" + std::string(f[3]) + "'");
    if (!parse_number(f[4], o.size)) r.fail("bad size '" + std::string(f[4]) + "'");
    if (o.kind == OrderKind::Add) {
      if (o.size == 0) r.fail("order " + std::to_string(o.id) + " has size 0");
      if (o.price <= 0) r.fail("order " + std::to_string(o.id) + " has non-positive price");
    }
    if (!day.orders.empty() && o.time < day.orders.back().time) {
      throw FormatError(path + ":" + std::to_string(r.line_no()) + ": timestamps not sorted");
    }
    day.orders.push_back(o);
  }

  day.t0 = opt.default_t0;
  day.session_ms = opt.default_session_ms;
  for (const auto& [k, v] : parse_meta_comments(r.comments())) {
    if (k == "instrument") day.instrument = v;
    else if (k == "date") day.date = v;
    else if (k == "t0_ms" && !parse_number(v, day.t0)) throw FormatError(path + ": bad t0_ms metadata");
    else if (k == "session_ms" && !parse_number(v, day.session_ms)) throw FormatError(path + ": bad session_ms metadata");
  }
  if (day.session_ms <= 0) {
    // Fall back to the span of the data itself.
    if (!day.orders.empty()) {
      if (opt.default_t0 == 0) day.t0 = day.orders.front().time;
      day.session_ms = std::max<TimeMs>(1, day.orders.back().time - day.t0 + 1);
    } else {
      day.session_ms = 1;
    }
  }
  if (opt.drop_cancels) {
    std::erase_if(day.orders, [](const Order& o) { return o.kind == OrderKind::Cancel; });
  }
  validate(day);
  return day;
}

inline void write_orderflow(const std::string& path, const DayStream& day,
                            const std::vector<std::string>& extra_comments = {}) {
  auto out = open_for_write(path);
  for (const auto& c : extra_comments) out << "# " << c << '\n';
  out << "# instrument=" << day.instrument << " date=" << day.date << " t0_ms=" << day.t0
      << " session_ms=" << day.session_ms << '\n';
  out << kOrderHeader << '\n';
  for (const auto& o : day.orders) {
    out << o.time << ',' << o.id << ',' << (o.kind == OrderKind::Add ? 'A' : 'C') << ',' << o.price << ','
        << o.size << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

inline void write_transactions(const std::string& path, const std::vector<Transaction>& txs,
                               const std::vector<std::string>& comments = {}) {
  auto out = open_for_write(path);
  for (const auto& c : comments) out << "# " << c << '\n';
  out << kTransactionHeader << '\n';
  for (const auto& t : txs) out << t.time << ',' << t.price << ',' << t.size << '\n';
  if (!out) throw IoError("write failed: " + path);
}

inline std::vector<Transaction> parse_transactions(const std::string& path) {
  LineReader r(path);
  expect_header(r, kTransactionHeader);
  std::vector<Transaction> txs;
  std::string line;
  while (r.next(line)) {
    auto f = split(line);
    if (f.size() != 3) r.fail("expected 3 fields");
    Transaction t;
    if (!parse_number(f[0], t.time) || !parse_number(f[1], t.price) || !parse_number(f[2], t.size)) {
      r.fail("malformed transaction row");
    }
    if (t.size == 0) r.fail("transaction with size 0");
    txs.push_back(t);
  }
  return txs;
}

inline void write_labels(const std::string& path, const std::vector<std::uint8_t>& labels,
                         const std::vector<std::string>& comments = {}) {
  auto out = open_for_write(path);
  for (const auto& c : comments) out << "# " << c << '\n';
  out << kLabelHeader << '\n';
  for (std::size_t i = 0; i < labels.size(); ++i) out << i << ',' << int(labels[i]) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

inline std::vector<std::uint8_t> parse_labels(const std::string& path) {
  LineReader r(path);
  expect_header(r, kLabelHeader);
  std::vector<std::uint8_t> labels;
  std::string line;
  while (r.next(line)) {
    auto f = split(line);
    std::size_t idx = 0;
    int lab = 0;
    if (f.size() != 2 || !parse_number(f[0], idx) || !parse_number(f[1], lab)) r.fail("malformed label row");
    if (idx != labels.size()) r.fail("segment indices must be contiguous from 0");
    if (lab != 0 && lab != 1) r.fail("label must be 0 or 1");
    labels.push_back(static_cast<std::uint8_t>(lab));
  }
  return labels;
}

}  // namespace io
}  // namespace microflow
