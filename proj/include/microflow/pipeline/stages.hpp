#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "microflow/baselines/baselines.hpp"
#include "microflow/eval/daily_head.hpp"
#include "microflow/eval/execution.hpp"
#include "microflow/eval/metrics.hpp"
#include "microflow/lob/order_book.hpp"
#include "microflow/pipeline/artifacts.hpp"
#include "microflow/pipeline/model_data.hpp"
#include "microflow/pipeline/parallel.hpp"
#include "microflow/pipeline/workspace.hpp"

namespace microflow::pipeline {

inline const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"gen-data", "replay", "segment", "train-context", "train-svdd",
                                                 "extract",  "select", "baselines", "evaluate"};
  return names;
}

inline constexpr const char* kContextModel = "context.ckpt";
inline constexpr const char* kSelectorModel = "svdd.ckpt";
inline constexpr const char* kMetricsFile = "metrics.json";

// Synthetic panel and its manifest.
inline void stage_gen_data(const Workspace& ws) {
  const auto& cfg = ws.cfg();
  auto days = generate_panel(cfg, cfg.data_dir, ws.hash());
  write_manifest(ws.manifest_path(), days, {std::string(kGeneratorTag) + " config_hash=" + ws.hash()});
  ws.log("gen-data: " + std::to_string(days.size()) + " instrument-days in " + cfg.data_dir);
}

// Order flow -> transaction log per day.
inline void stage_replay(const Workspace& ws) {
  ws.clear_stamp("replay");
  const auto days = ws.manifest();
  const auto& cfg = ws.cfg();
  ws.ensure_dir("replay");
  std::vector<std::size_t> counts(days.size());
  parallel_for(days.size(), cfg.jobs, [&](std::size_t i) {
    const auto stream =
        io::parse_orderflow((ws.data() / days[i].orders_file).string(), {.drop_cancels = cfg.drop_cancels});
    const auto r = replay(stream.orders);
    counts[i] = r.transactions.size();
    io::write_transactions(ws.day_file("replay", days[i], "transactions"), r.transactions, ws.header("replay"));
  });
  std::size_t total = 0;
  for (auto c : counts) total += c;
  ws.stamp("replay", {{"days", days.size()}, {"transactions", total}});
  ws.log("replay: " + std::to_string(total) + " transactions over " + std::to_string(days.size()) + " days");
}

// Fixed-window segmentation; the replayed transaction log must agree with the
// segmenter's own replay.
inline void stage_segment(const Workspace& ws) {
  ws.require("replay");
  ws.clear_stamp("segment");
  const auto days = ws.manifest();
  const auto& cfg = ws.cfg();
  ws.ensure_dir("segments");
  std::vector<std::size_t> n_seg(days.size()), n_valid(days.size());
  parallel_for(days.size(), cfg.jobs, [&](std::size_t i) {
    const auto tx_path = ws.day_file("replay", days[i], "transactions");
    ws.check_file(tx_path, "replay");
    const auto d = load_day(cfg, days[i]);
    if (io::parse_transactions(tx_path) != d.day.transactions) {
      throw InvariantError(tx_path + " disagrees with the segmenter's replay of " + days[i].orders_file);
    }
    write_segment_dump(ws.day_file("segments", days[i], "segments"), d.day, ws.header("segment"));
    n_seg[i] = d.day.segments.size();
    for (const auto& s : d.day.segments) n_valid[i] += s.transaction_count() > 0;
  });
  std::size_t total = 0, valid = 0;
  for (std::size_t i = 0; i < days.size(); ++i) total += n_seg[i], valid += n_valid[i];
  ws.stamp("segment", {{"segments", total}, {"valid_segments", valid}});
  ws.log("segment: " + std::to_string(total) + " segments, " + std::to_string(valid) + " with transactions");
}

inline std::vector<DayVectors> load_day_vectors(const Workspace& ws, const std::vector<DayEntry>& days,
                                                const std::vector<std::size_t>& which) {
  std::vector<DayVectors> out(which.size());
  parallel_for(which.size(), ws.cfg().jobs, [&](std::size_t k) {
    out[k] = vectorize_day(load_day(ws.cfg(), days[which[k]]).day, ws.cfg().k_levels);
  });
  return out;
}

inline Json context_report_json(const ContextTrainReport& r) {
  return {{"initial_valid_loss", r.initial_valid_loss}, {"train_loss", r.train_loss},
          {"valid_loss", r.valid_loss},                 {"best_epoch", r.best_epoch},
          {"best_valid_loss", r.best_valid_loss}};
}

inline ContextTrainReport stage_train_context(const Workspace& ws) {
  ws.require("segment");
  ws.clear_stamp("train-context");
  const auto& cfg = ws.cfg();
  const auto days = ws.manifest();
  const auto splits = assign_splits(days);
  const auto train = load_day_vectors(ws, days, indices_in(splits, Split::Train));
  const auto valid = load_day_vectors(ws, days, indices_in(splits, Split::Valid));
  nn::ModelParams params;
  Rng rng(derive_seed(cfg.seed, 0xC1));
  const auto enc = ContextEncoder::create(params, cfg.context_config(), rng);
  ws.log("train-context: " + std::to_string(train.size()) + " train days, " + std::to_string(valid.size()) +
         " validation days, " + std::to_string(params.count_scalars()) + " parameters");
  const auto rep = train_context_encoder(enc, params, train, valid, cfg.context_train_config(), ws.logger());
  ws.save_model(kContextModel, "train-context", params);
  write_json(ws.file("context_report.json"), context_report_json(rep));
  ws.stamp("train-context", {{"best_valid_loss", rep.best_valid_loss}});
  return rep;
}

// Normalized extractor inputs of the given days, using a trained context
// encoder. `norm` is fitted on the inputs when empty.
struct PreparedDays {
  std::vector<std::vector<ExtractorInput>> inputs;
  std::vector<std::size_t> n_segments;
};

inline PreparedDays prepare_inputs(const Workspace& ws, const nn::ModelParams& context_params,
                                   const std::vector<DayEntry>& days, const std::vector<std::size_t>& which) {
  const auto& cfg = ws.cfg();
  PreparedDays p;
  p.inputs.resize(which.size());
  p.n_segments.resize(which.size());
  parallel_for(which.size(), cfg.jobs, [&](std::size_t k) {
    nn::ModelParams local = context_params;
    const auto enc = ContextEncoder::bind(local, cfg.context_config());
    const auto d = load_day(cfg, days[which[k]]);
    const auto ctx = context_features(enc, local, d.day, cfg.k_levels);
    p.inputs[k] = raw_inputs(d.day, ctx, cfg);
    p.n_segments[k] = d.day.segments.size();
  });
  return p;
}

inline Json svdd_report_json(const SvddTrainReport& r, std::size_t n_train, std::size_t n_valid, double mu) {
  return {{"initial_radius", r.initial_radius},
          {"final_radius", r.final_radius},
          {"train_loss", r.train_loss},
          {"valid_loss", r.valid_loss},
          {"best_epoch", r.best_epoch},
          {"best_valid_loss", r.best_valid_loss},
          {"outside_fraction", r.outside_fraction},
          {"n_train", n_train},
          {"n_valid", n_valid},
          {"mu", mu}};
}

inline SvddTrainReport stage_train_svdd(const Workspace& ws) {
  ws.require("train-context");
  ws.clear_stamp("train-svdd");
  const auto& cfg = ws.cfg();
  const auto days = ws.manifest();
  const auto splits = assign_splits(days);
  const auto ctx_ck = ws.load_model(kContextModel, "train-context");
  auto train = prepare_inputs(ws, ctx_ck.params, days, indices_in(splits, Split::Train));
  auto valid = prepare_inputs(ws, ctx_ck.params, days, indices_in(splits, Split::Valid));

  std::vector<const std::vector<ExtractorInput>*> train_ptrs;
  for (const auto& d : train.inputs) train_ptrs.push_back(&d);
  const auto norm = InputNormalizer::fit(train_ptrs);
  for (auto& d : train.inputs) norm.apply(d);
  for (auto& d : valid.inputs) norm.apply(d);

  std::vector<const ExtractorInput*> train_items, valid_items;
  for (const auto& d : train.inputs) {
    for (const auto& in : d) train_items.push_back(&in);
  }
  for (const auto& d : valid.inputs) {
    for (const auto& in : d) valid_items.push_back(&in);
  }

  nn::ModelParams params;
  const auto f = create_selector_model(params, cfg, norm);
  ws.log("train-svdd: " + std::to_string(train_items.size()) + " train segments, " +
         std::to_string(valid_items.size()) + " validation segments");
  const auto rep = train_svdd(params, make_embed(f, train_items), train_items.size(), make_embed(f, valid_items),
                              valid_items.size(), cfg.svdd_config(), cfg.svdd_train_config(), ws.logger());
  ws.save_model(kSelectorModel, "train-svdd", params, {{"mu", io::format_double(cfg.mu)}});
  write_json(ws.file("svdd_report.json"), svdd_report_json(rep, train_items.size(), valid_items.size(), cfg.mu));
  ws.stamp("train-svdd", {{"outside_fraction", rep.outside_fraction}, {"final_radius", rep.final_radius}});
  return rep;
}

// F^seg for every valid segment of every day.
inline void stage_extract(const Workspace& ws) {
  ws.require("train-svdd");
  ws.clear_stamp("extract");
  const auto& cfg = ws.cfg();
  const auto days = ws.manifest();
  const auto ctx_ck = ws.load_model(kContextModel, "train-context");
  const auto sel_ck = ws.load_model(kSelectorModel, "train-svdd");
  ws.ensure_dir("features");
  std::vector<std::size_t> n_valid(days.size());
  parallel_for(days.size(), cfg.jobs, [&](std::size_t i) {
    nn::ModelParams ctx_params = ctx_ck.params;
    nn::ModelParams sel_params = sel_ck.params;
    const auto enc = ContextEncoder::bind(ctx_params, cfg.context_config());
    const auto f = FactorExtractor::bind(sel_params, cfg.extractor_config());
    const auto norm = InputNormalizer::load(sel_params);
    const auto d = load_day(cfg, days[i]);
    auto inputs = raw_inputs(d.day, context_features(enc, ctx_params, d.day, cfg.k_levels), cfg);
    norm.apply(inputs);
    std::vector<FeatureRow> rows(d.day.segments.size());
    for (std::size_t n = 0; n < rows.size(); ++n) rows[n].segment = n;
    for (const auto& in : inputs) {
      nn::Tape t(&sel_params, false);
      const auto v = embed_input(t, f, in).value();
      rows[in.segment].valid = true;
      rows[in.segment].f = v.to_vector();
    }
    n_valid[i] = inputs.size();
    write_features(ws.day_file("features", days[i], "features"), days[i].date, rows, cfg.d_e, ws.header("extract"));
  });
  std::size_t total = 0;
  for (auto v : n_valid) total += v;
  ws.stamp("extract", {{"valid_segments", total}});
  ws.log("extract: " + std::to_string(total) + " segment features");
}

inline std::vector<FeatureRow> load_features(const Workspace& ws, const DayEntry& d) {
  const auto path = ws.day_file("features", d, "features");
  ws.check_file(path, "extract");
  return read_features(path, ws.cfg().d_e);
}

// Uniqueness ranking of each day's valid segments; the top
// max(1, floor(mu * n_valid)) are selected.
inline void stage_select(const Workspace& ws) {
  ws.require("extract");
  ws.clear_stamp("select");
  const auto& cfg = ws.cfg();
  const auto days = ws.manifest();
  const auto center = hypersphere_center(ws.load_model(kSelectorModel, "train-svdd").params);
  ws.ensure_dir("ranking");
  std::vector<std::size_t> n_sel(days.size()), n_valid(days.size());
  parallel_for(days.size(), cfg.jobs, [&](std::size_t i) {
    const auto feats = load_features(ws, days[i]);
    std::vector<std::size_t> segs;
    std::vector<double> d;
    for (const auto& r : feats) {
      if (!r.valid) continue;
      segs.push_back(r.segment);
      d.push_back(uniqueness(r.f, center));
    }
    std::vector<RankRow> rows;
    if (!d.empty()) {
      const auto rank = rank_and_select(d, cfg.mu);
      for (std::size_t k = 0; k < segs.size(); ++k) rows.push_back({"", segs[k], rank.d[k], rank.selected[k] != 0});
      n_sel[i] = rank.n_selected;
    }
    n_valid[i] = segs.size();
    auto header = ws.header("select");
    header.push_back("mu=" + io::format_double(cfg.mu));
    write_ranking(ws.day_file("ranking", days[i], "ranking"), days[i].date, rows, header, false);
  });
  std::size_t sel = 0, valid = 0;
  for (std::size_t i = 0; i < days.size(); ++i) sel += n_sel[i], valid += n_valid[i];
  ws.stamp("select", {{"mu", cfg.mu}, {"selected", sel}, {"valid_segments", valid}});
  ws.log("select: " + std::to_string(sel) + " of " + std::to_string(valid) + " valid segments selected");
}

inline std::vector<RankRow> load_ranking(const Workspace& ws, const DayEntry& d) {
  const auto path = ws.day_file("ranking", d, "ranking");
  ws.check_file(path, "select");
  return read_ranking(path, false);
}

inline std::string random_method(std::size_t k) { return "random_s" + std::to_string(k); }

// Seed of one random-sample draw; depends on the day's identity, not its
// position in the manifest.
inline std::uint64_t baseline_seed(std::uint64_t seed, std::size_t k, const DayEntry& d) {
  return derive_seed(seed, 0xBA5E0000ULL + k, fnv1a64(day_key(d)));
}

// Day-level pooled vector baselines: order imbalance, time-sensitive order
// imbalance and the high-frequency book vector over the boundary books.
inline std::map<std::string, std::vector<double>> vector_baselines(const SegmentedDay& day) {
  const auto books = baselines::boundary_books(day);
  std::vector<std::vector<double>> oi, tsoi, hf;
  for (const auto* b : books) {
    const double v = baselines::order_imbalance(*b);
    if (std::isfinite(v)) oi.push_back({v});
  }
  for (const auto& row : baselines::time_sensitive_order_imbalance(books)) tsoi.emplace_back(row.begin(), row.end());
  for (std::size_t n = 0; n < books.size(); ++n) {
    const auto row = baselines::high_freq_lob_features(*books[n], n > 0 ? books[n - 1] : nullptr);
    hf.emplace_back(row.begin(), row.end());
  }
  return {{"oi", eval::pool_rows(oi, 1)},
          {"tsoi", eval::pool_rows(tsoi, baselines::kDepth)},
          {"hf", eval::pool_rows(hf, baselines::kHfDim)}};
}

// Segment selections of the comparison methods under the same budget as the
// uniqueness selection, plus day-level vector baselines.
inline void stage_baselines(const Workspace& ws) {
  ws.require_selection();
  ws.clear_stamp("baselines");
  const auto& cfg = ws.cfg();
  const auto days = ws.manifest();
  ws.ensure_dir("baselines");
  parallel_for(days.size(), cfg.jobs, [&](std::size_t i) {
    const auto ranking = load_ranking(ws, days[i]);
    const auto d = load_day(cfg, days[i]);
    std::vector<std::size_t> candidates;
    for (const auto& r : ranking) candidates.push_back(r.segment);
    const std::size_t budget = selection_count(candidates.size(), cfg.mu);
    std::vector<RankRow> rows;
    auto emit = [&](const std::string& method, const std::vector<std::size_t>& segs) {
      for (auto s : segs) rows.push_back({method, s, 1.0, true});
    };
    for (std::size_t k = 0; k < cfg.baseline_seeds; ++k) {
      emit(random_method(k), baselines::random_sample(candidates, budget, baseline_seed(cfg.seed, k, days[i])));
    }
    emit("uniform", baselines::uniform_sample(candidates, budget));
    emit("price_extreme", baselines::price_extreme_segments(d.day, budget));
    emit("volume_extreme", baselines::volume_extreme_segments(d.day, budget));
    auto header = ws.header("baselines");
    header.push_back("mu=" + io::format_double(cfg.mu));
    write_ranking(ws.day_file("baselines", days[i], "baselines"), days[i].date, rows, header, true);
    write_factors(ws.day_file("baselines", days[i], "factors"), days[i].date, vector_baselines(d.day), header);
  });
  ws.stamp("baselines", {{"mu", cfg.mu}, {"seeds", cfg.baseline_seeds}});
  ws.log("baselines: " + std::to_string(days.size()) + " days");
}

inline const std::vector<std::string>& selection_methods() {
  static const std::vector<std::string> m = {"uniform", "price_extreme", "volume_extreme"};
  return m;
}

inline const std::vector<std::string>& vector_methods() {
  static const std::vector<std::string> m = {"oi", "tsoi", "hf"};
  return m;
}

// Everything evaluate needs from one instrument-day.
struct DayEvaluation {
  std::map<std::string, std::vector<double>> x;          // per method daily feature row
  std::map<std::string, eval::ExecutionRecord> execution;  // test days only
  std::vector<double> anomaly_score;
  std::vector<std::uint8_t> anomaly_label;
  std::vector<std::string> plot_rows;
};

inline std::vector<double> selection_features(const SegmentedDay& day, const std::vector<FeatureRow>& feats,
                                              const std::vector<std::size_t>& selected, std::size_t d_e) {
  std::vector<std::vector<double>> rows;
  for (auto s : selected) {
    const auto& fr = feats.at(s);
    if (!fr.valid) throw InvariantError("selected segment " + std::to_string(s) + " has no feature");
    std::vector<double> row = fr.f;
    const auto desc = eval::segment_descriptor(day, s);
    row.insert(row.end(), desc.begin(), desc.end());
    rows.push_back(std::move(row));
  }
  return eval::pool_rows(rows, d_e + eval::kSegmentDescriptorDim);
}

inline eval::ExecutionRecord execute_day(const SegmentedDay& day, const std::vector<std::size_t>& segs,
                                         const std::vector<double>& scores, const eval::MinutePrices& prices,
                                         eval::MinuteStat stat) {
  std::vector<TimeMs> times;
  for (auto s : segs) times.push_back(day.segments.at(s).begin);
  const auto agg = eval::minute_aggregates(scores, times, day.stream.t0, prices.size());
  return eval::threshold_execution(eval::minute_signal(agg, stat), prices).record;
}

inline DayEvaluation evaluate_day(const Workspace& ws, const DayEntry& entry, bool test) {
  const auto& cfg = ws.cfg();
  const auto d = load_day(cfg, entry);
  const auto feats = load_features(ws, entry);
  if (feats.size() != d.day.segments.size()) {
    throw StageError("extract", ws.day_file("features", entry, "features") + " does not match the segmentation");
  }
  const auto ranking = load_ranking(ws, entry);
  const auto bpath = ws.day_file("baselines", entry, "baselines");
  const auto fpath = ws.day_file("baselines", entry, "factors");
  ws.check_file(bpath, "baselines");
  ws.check_file(fpath, "baselines");
  std::map<std::string, std::vector<std::size_t>> chosen;
  for (const auto& r : read_ranking(bpath, true)) chosen[r.method].push_back(r.segment);
  const auto factors = read_factors(fpath);

  DayEvaluation out;
  std::vector<double> stats(eval::kDailyStatDim, 0.0);
  if (!d.day.transactions.empty()) {
    const auto s = eval::daily_statistics(eval::daily_bar(d.day.transactions));
    stats.assign(s.begin(), s.end());
  }
  auto with_stats = [&](const std::vector<double>& v) {
    std::vector<double> x = stats;
    x.insert(x.end(), v.begin(), v.end());
    return x;
  };

  std::vector<std::size_t> ours;
  std::vector<double> ours_d;
  for (const auto& r : ranking) {
    if (!r.selected) continue;
    ours.push_back(r.segment);
    ours_d.push_back(r.uniqueness);
  }
  out.x["ours"] = with_stats(selection_features(d.day, feats, ours, cfg.d_e));
  out.x["daily_only"] = stats;
  std::vector<std::string> sel_methods = selection_methods();
  for (std::size_t k = 0; k < cfg.baseline_seeds; ++k) sel_methods.push_back(random_method(k));
  for (const auto& m : sel_methods) out.x[m] = with_stats(selection_features(d.day, feats, chosen[m], cfg.d_e));
  for (const auto& m : vector_methods()) {
    auto it = factors.find(m);
    if (it == factors.end()) throw StageError("baselines", fpath + " lacks method " + m);
    out.x[m] = with_stats(it->second);
  }

  if (!test) return out;
  if (!d.day.transactions.empty()) {
    const auto prices = eval::minute_prices(d.day.transactions, d.day.stream.t0, d.day.stream.session_ms);
    const auto stat = eval::parse_minute_stat(cfg.minute_stat);
    out.execution["ours"] = execute_day(d.day, ours, ours_d, prices, stat);
    for (const auto& m : sel_methods) {
      out.execution[m] = execute_day(d.day, chosen[m], std::vector<double>(chosen[m].size(), 1.0), prices, stat);
    }
    out.execution["twap"] = eval::twap_execution(prices).record;
  }
  std::vector<std::uint8_t> sel_mask(d.day.segments.size(), 0);
  for (auto s : ours) sel_mask[s] = 1;
  for (const auto& r : ranking) {
    if (!d.labels.empty()) {
      out.anomaly_score.push_back(r.uniqueness);
      out.anomaly_label.push_back(d.labels.at(r.segment));
    }
    out.plot_rows.push_back(entry.instrument + ',' + entry.date + ',' + std::to_string(r.segment) + ',' +
                            std::to_string(d.day.segments.at(r.segment).begin) + ',' +
                            io::format_sig(r.uniqueness, 9) + ',' + (sel_mask[r.segment] ? "1" : "0"));
  }
  return out;
}

inline Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

struct MethodScore {
  double ic = NAN, rank_ic = NAN, rank_ir = NAN, pa = NAN, glr = NAN;

  Json to_json() const {
    return {{"ic", number_or_null(ic)},
            {"rank_ic", number_or_null(rank_ic)},
            {"rank_ir", number_or_null(rank_ir)},
            {"pa", number_or_null(pa)},
            {"glr", number_or_null(glr)}};
  }
};

// Mean of the finite values; NaN when there are none.
inline double finite_mean(const std::vector<double>& v) {
  double s = 0.0;
  std::size_t n = 0;
  for (double x : v) {
    if (std::isfinite(x)) s += x, ++n;
  }
  return n ? s / static_cast<double>(n) : NAN;
}

inline Json stage_evaluate(const Workspace& ws) {
  ws.require("extract");
  ws.require_selection();
  ws.require("baselines");
  ws.clear_stamp("evaluate");
  const auto& cfg = ws.cfg();
  const auto days = ws.manifest();
  const auto splits = assign_splits(days);

  // Labels and date ordinals.
  std::map<std::string, std::size_t> date_index;
  for (const auto& d : days) date_index.emplace(d.date, date_index.size());
  std::vector<std::optional<double>> label(days.size());
  for (const auto& [inst, series] : close_series(days)) {
    for (std::size_t t = 0; t < series.rows.size(); ++t) label[series.rows[t]] = eval::daily_label(series.closes, t);
  }

  std::vector<DayEvaluation> per_day(days.size());
  parallel_for(days.size(), cfg.jobs,
               [&](std::size_t i) { per_day[i] = evaluate_day(ws, days[i], splits[i] == Split::Test); });

  std::vector<std::string> methods = {"ours", "daily_only"};
  for (const auto& m : selection_methods()) methods.push_back(m);
  for (const auto& m : vector_methods()) methods.push_back(m);
  for (std::size_t k = 0; k < cfg.baseline_seeds; ++k) methods.push_back(random_method(k));

  std::size_t n_labeled = 0;
  std::map<std::string, MethodScore> scores;
  for (const auto& m : methods) {
    std::vector<eval::DailySample> part[3];
    for (std::size_t i = 0; i < days.size(); ++i) {
      if (!label[i]) continue;
      part[static_cast<int>(splits[i])].push_back(
          {days[i].instrument, date_index.at(days[i].date), per_day[i].x.at(m), *label[i]});
    }
    n_labeled = part[0].size() + part[1].size() + part[2].size();
    MethodScore s;
    if (!part[0].empty() && !part[2].empty()) {
      try {
        const auto head = eval::fit_daily_head(part[0], part[1], part[2], std::array<double, 6>{1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0},
                                               [&](const std::string& w) { ws.log("evaluate " + m + ": " + w); });
        s.ic = head.test.ic;
        s.rank_ic = head.test.rank_ic;
        s.rank_ir = head.test.rank_ir;
      } catch (const NumericError& e) {
        ws.log("evaluate " + m + ": " + e.what());
      }
    }
    std::vector<eval::ExecutionRecord> records;
    for (std::size_t i = 0; i < days.size(); ++i) {
      auto it = per_day[i].execution.find(m);
      if (it != per_day[i].execution.end()) records.push_back(it->second);
    }
    if (!records.empty()) {
      s.pa = eval::pa(records);
      try {
        s.glr = eval::glr(eval::pa_series(records));
      } catch (const Error&) {
      }
    }
    scores[m] = s;
  }

  Json methods_json = Json::object();
  std::vector<Json> per_seed;
  MethodScore random;
  {
    std::vector<double> ic, ric, rir, pa, glr;
    for (std::size_t k = 0; k < cfg.baseline_seeds; ++k) {
      const auto& s = scores.at(random_method(k));
      ic.push_back(s.ic), ric.push_back(s.rank_ic), rir.push_back(s.rank_ir), pa.push_back(s.pa), glr.push_back(s.glr);
      per_seed.push_back(s.to_json());
    }
    random = {finite_mean(ic), finite_mean(ric), finite_mean(rir), finite_mean(pa), finite_mean(glr)};
  }
  for (const auto& m : methods) {
    if (m.rfind("random_s", 0) == 0) continue;
    methods_json[m] = scores.at(m).to_json();
  }
  methods_json["random"] = random.to_json();

  MethodScore twap;
  {
    std::vector<eval::ExecutionRecord> records;
    for (const auto& d : per_day) {
      auto it = d.execution.find("twap");
      if (it != d.execution.end()) records.push_back(it->second);
    }
    if (!records.empty()) {
      twap.pa = eval::pa(records);
      try {
        twap.glr = eval::glr(eval::pa_series(records));
      } catch (const Error&) {
      }
    }
  }

  std::vector<double> a_score;
  std::vector<std::uint8_t> a_label;
  for (const auto& d : per_day) {
    a_score.insert(a_score.end(), d.anomaly_score.begin(), d.anomaly_score.end());
    a_label.insert(a_label.end(), d.anomaly_label.begin(), d.anomaly_label.end());
  }
  double auc = NAN;
  try {
    if (!a_score.empty()) auc = eval::roc_auc(a_score, a_label);
  } catch (const Error&) {
  }

  const Json svdd_rep = read_json(ws.file("svdd_report.json"));
  const Json ctx_rep = read_json(ws.file("context_report.json"));
  Json metrics = {
      {"config_hash", ws.hash()},
      {"mu", cfg.mu},
      {"methods", methods_json},
      {"random_per_seed", per_seed},
      {"twap", {{"pa", number_or_null(twap.pa)}, {"glr", number_or_null(twap.glr)}}},
      {"anomaly_auc_test", number_or_null(auc)},
      {"svdd", {{"outside_fraction", svdd_rep.at("outside_fraction")}, {"final_radius", svdd_rep.at("final_radius")}}},
      {"context",
       {{"initial_valid_loss", ctx_rep.at("initial_valid_loss")}, {"best_valid_loss", ctx_rep.at("best_valid_loss")}}},
      {"counts",
       {{"days", days.size()},
        {"labeled_days", n_labeled},
        {"test_days", indices_in(splits, Split::Test).size()},
        {"test_segments_scored", a_score.size()}}}};
  write_json(ws.file(kMetricsFile), metrics);

  ws.ensure_dir("plots");
  {
    const auto path = ws.file("plots/uniqueness_test.csv");
    auto out = io::open_for_write(path);
    for (const auto& c : ws.header("evaluate")) out << "# " << c << '\n';
    out << "instrument,date,segment_index,time_ms,uniqueness,selected\n";
    for (const auto& d : per_day) {
      for (const auto& r : d.plot_rows) out << r << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
  }
  ws.stamp("evaluate");
  ws.log("evaluate: metrics written to " + ws.file(kMetricsFile));
  return metrics;
}

// Whether run-all should (re)generate the synthetic panel: yes unless the
// data directory holds a manifest that gen-data did not write.
inline bool should_generate(const Workspace& ws) {
  const auto path = ws.manifest_path();
  if (!std::filesystem::exists(path)) return true;
  for (const auto& c : leading_comments(path)) {
    if (c.find(kGeneratorTag) != std::string::npos) return true;
  }
  return false;
}

inline void run_stage(const Workspace& ws, const std::string& stage) {
  if (stage == "gen-data") stage_gen_data(ws);
  else if (stage == "replay") stage_replay(ws);
  else if (stage == "segment") stage_segment(ws);
  else if (stage == "train-context") stage_train_context(ws);
  else if (stage == "train-svdd") stage_train_svdd(ws);
  else if (stage == "extract") stage_extract(ws);
  else if (stage == "select") stage_select(ws);
  else if (stage == "baselines") stage_baselines(ws);
  else if (stage == "evaluate") stage_evaluate(ws);
  else throw ConfigError("unknown stage '" + stage + "'");
}

// Runs every stage in order. `current` names the running stage so a caller
// can report which one failed.
inline void run_all(const Workspace& ws, std::string* current = nullptr) {
  for (const auto& s : stage_names()) {
    if (s == "gen-data" && !should_generate(ws)) {
      ws.log("gen-data: skipped, " + ws.manifest_path() + " was not generated");
      continue;
    }
    if (current) *current = s;
    run_stage(ws, s);
  }
}

}  // namespace microflow::pipeline
