#pragma once

#include <map>
#include <string>
#include <vector>

#include "microflow/error.hpp"
#include "microflow/io/csv.hpp"

namespace microflow::pipeline {

// features/<key>.features.csv: one row per segment; feature fields are empty
// for segments without transactions.
struct FeatureRow {
  std::size_t segment = 0;
  bool valid = false;
  std::vector<double> f;
};

inline std::string feature_header(std::size_t d_e) {
  std::string h = "date,segment_index,valid";
  for (std::size_t j = 0; j < d_e; ++j) h += ",f_" + std::to_string(j);
  return h;
}

inline void write_features(const std::string& path, const std::string& date, const std::vector<FeatureRow>& rows,
                           std::size_t d_e, const std::vector<std::string>& comments) {
  auto out = io::open_for_write(path);
  for (const auto& c : comments) out << "# " << c << '\n';
  out << feature_header(d_e) << '\n';
  for (const auto& r : rows) {
    out << date << ',' << r.segment << ',' << (r.valid ? 1 : 0);
    for (std::size_t j = 0; j < d_e; ++j) out << ',' << (r.valid ? io::format_double(r.f.at(j)) : "");
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

inline std::vector<FeatureRow> read_features(const std::string& path, std::size_t d_e) {
  io::LineReader r(path);
  io::expect_header(r, feature_header(d_e));
  std::vector<FeatureRow> rows;
  std::string line;
  while (r.next(line)) {
    const auto f = io::split(line);
    if (f.size() != 3 + d_e) r.fail("expected " + std::to_string(3 + d_e) + " fields");
    FeatureRow row;
    int valid = 0;
    if (!io::parse_number(f[1], row.segment) || !io::parse_number(f[2], valid) || (valid != 0 && valid != 1)) {
      r.fail("malformed segment_index or valid field");
    }
    if (row.segment != rows.size()) r.fail("segment indices must be contiguous from 0");
    row.valid = valid == 1;
    if (row.valid) {
      row.f.resize(d_e);
      for (std::size_t j = 0; j < d_e; ++j) {
        if (!io::parse_number(f[3 + j], row.f[j])) r.fail("malformed feature value");
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// ranking/<key>.ranking.csv and baselines/<key>.baselines.csv share one row
// type; baselines add a leading method column.
struct RankRow {
  std::string method;
  std::size_t segment = 0;
  double uniqueness = 0.0;
  bool selected = false;
};

inline constexpr std::string_view kRankingHeader = "date,segment_index,uniqueness,selected";
inline constexpr std::string_view kBaselineHeader = "method,date,segment_index,uniqueness,selected";

inline void write_ranking(const std::string& path, const std::string& date, const std::vector<RankRow>& rows,
                          const std::vector<std::string>& comments, bool with_method) {
  auto out = io::open_for_write(path);
  for (const auto& c : comments) out << "# " << c << '\n';
  out << (with_method ? kBaselineHeader : kRankingHeader) << '\n';
  for (const auto& r : rows) {
    if (with_method) out << r.method << ',';
    out << date << ',' << r.segment << ',' << io::format_sig(r.uniqueness, 9) << ',' << (r.selected ? 1 : 0)
        << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

inline std::vector<RankRow> read_ranking(const std::string& path, bool with_method) {
  io::LineReader r(path);
  io::expect_header(r, with_method ? kBaselineHeader : kRankingHeader);
  std::vector<RankRow> rows;
  std::string line;
  const std::size_t off = with_method ? 1 : 0;
  while (r.next(line)) {
    const auto f = io::split(line);
    if (f.size() != 4 + off) r.fail("expected " + std::to_string(4 + off) + " fields");
    RankRow row;
    if (with_method) row.method = std::string(f[0]);
    int sel = 0;
    if (!io::parse_number(f[off + 1], row.segment) || !io::parse_number(f[off + 2], row.uniqueness) ||
        !io::parse_number(f[off + 3], sel) || (sel != 0 && sel != 1)) {
      r.fail("malformed ranking row");
    }
    row.selected = sel == 1;
    rows.push_back(std::move(row));
  }
  return rows;
}

// baselines/<key>.factors.csv: day-level pooled vector baselines in long form.
inline constexpr std::string_view kFactorHeader = "method,date,dim,value";

inline void write_factors(const std::string& path, const std::string& date,
                          const std::map<std::string, std::vector<double>>& factors,
                          const std::vector<std::string>& comments) {
  auto out = io::open_for_write(path);
  for (const auto& c : comments) out << "# " << c << '\n';
  out << kFactorHeader << '\n';
  for (const auto& [method, v] : factors) {
    for (std::size_t j = 0; j < v.size(); ++j) out << method << ',' << date << ',' << j << ',' << io::format_double(v[j]) << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

inline std::map<std::string, std::vector<double>> read_factors(const std::string& path) {
  io::LineReader r(path);
  io::expect_header(r, kFactorHeader);
  std::map<std::string, std::vector<double>> out;
  std::string line;
  while (r.next(line)) {
    const auto f = io::split(line);
    std::size_t j = 0;
    double v = 0.0;
    if (f.size() != 4 || !io::parse_number(f[2], j) || !io::parse_number(f[3], v)) r.fail("malformed factor row");
    auto& vec = out[std::string(f[0])];
    if (j != vec.size()) r.fail("factor dimensions must be contiguous from 0");
    vec.push_back(v);
  }
  return out;
}

}  // namespace microflow::pipeline
