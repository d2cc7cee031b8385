#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "microflow/error.hpp"
#include "microflow/nn/autodiff.hpp"
#include "microflow/nn/layers.hpp"
#include "microflow/nn/optim.hpp"
#include "microflow/segment/segmenter.hpp"
#include "microflow/util/rng.hpp"

namespace microflow {

struct ContextConfig {
  std::size_t k_levels = 10;
  std::size_t m_history = 100;
  std::size_t hidden = 64;
  std::size_t gen_hidden = 64;
  bool feed_book = false;  // generators also see vec(O_{n-1})

  std::size_t book_dim() const noexcept { return 2 * k_levels; }
  std::size_t feature_dim() const noexcept { return 4 * k_levels + 1; }

  void validate() const {
    if (k_levels == 0 || m_history == 0 || hidden == 0 || gen_hidden == 0) {
      throw ConfigError("context encoder sizes must be positive");
    }
  }
};

// Sum of absolute slot differences between two grid vectors.
inline double book_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("book_distance: grid sizes differ");
  double g = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) g += std::fabs(a[i] - b[i]);
  return g;
}

// Volume-space sum of a log1p grid vector and nonnegative volume deltas,
// returned on the same log1p scale.
inline std::vector<double> predict_book(std::span<const double> boundary, std::span<const double> delta_bid,
                                        std::span<const double> delta_ask) {
  if (boundary.size() != delta_bid.size() || boundary.size() != delta_ask.size()) {
    throw DimensionError("predict_book: grid sizes differ");
  }
  std::vector<double> out(boundary.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::log1p(std::expm1(boundary[i]) + delta_bid[i] + delta_ask[i]);
  }
  return out;
}

// Twin LSTM generators over the last M accumulated books of each side,
// cross-conditioned MLP heads predicting the next accumulated books, and the
// resulting predicted book. All batch tensors carry one segment per row.
class ContextEncoder {
public:
  struct State {
    nn::Var h_buy;
    nn::Var h_sell;
  };

  struct Output {
    nn::Var delta_bid;  // predicted accumulated buy volume, B x 2K
    nn::Var delta_ask;  // predicted accumulated sell volume, B x 2K
    nn::Var predicted;  // predicted book, log1p grid, B x 2K
    nn::Var gamma;      // B x 1
  };

  static ContextEncoder create(nn::ModelParams& params, const ContextConfig& cfg, Rng& rng) {
    cfg.validate();
    ContextEncoder e;
    e.cfg_ = cfg;
    const std::size_t d = cfg.book_dim();
    const std::size_t gen_in = 2 * cfg.hidden + (cfg.feed_book ? d : 0);
    e.lstm_buy_ = nn::LstmCell::create(params, "context.lstm_buy", d, cfg.hidden, rng);
    e.lstm_sell_ = nn::LstmCell::create(params, "context.lstm_sell", d, cfg.hidden, rng);
    e.gen_buy_ = nn::Mlp::create(params, "context.gen_buy", gen_in, cfg.gen_hidden, d, rng, nn::Activation::Relu,
                                 nn::Activation::Softplus);
    e.gen_sell_ = nn::Mlp::create(params, "context.gen_sell", gen_in, cfg.gen_hidden, d, rng, nn::Activation::Relu,
                                  nn::Activation::Softplus);
    return e;
  }

  static ContextEncoder bind(const nn::ModelParams& params, const ContextConfig& cfg) {
    cfg.validate();
    ContextEncoder e;
    e.cfg_ = cfg;
    e.lstm_buy_ = nn::LstmCell::bind(params, "context.lstm_buy");
    e.lstm_sell_ = nn::LstmCell::bind(params, "context.lstm_sell");
    e.gen_buy_ = nn::Mlp::bind(params, "context.gen_buy", nn::Activation::Relu, nn::Activation::Softplus);
    e.gen_sell_ = nn::Mlp::bind(params, "context.gen_sell", nn::Activation::Relu, nn::Activation::Softplus);
    if (e.lstm_buy_.in != cfg.book_dim() || e.lstm_buy_.hidden != cfg.hidden) {
      throw DimensionError("context checkpoint does not match k_levels/hidden");
    }
    return e;
  }

  const ContextConfig& config() const noexcept { return cfg_; }

  // Folds each side's history (oldest first, one B x 2K tensor per step)
  // through its own LSTM from a zero state.
  State encode_history(nn::Tape& t, std::span<const nn::Var> buy_steps, std::span<const nn::Var> sell_steps) const {
    if (buy_steps.empty() || buy_steps.size() != sell_steps.size()) {
      throw DimensionError("encode_history: both sides need the same nonzero number of steps");
    }
    const std::size_t batch = buy_steps.front().rows();
    auto fold = [&](const nn::LstmCell& cell, std::span<const nn::Var> steps) {
      auto bound = cell.bind_tape(t);
      auto s = cell.zero_state(t, batch);
      for (const auto& x : steps) s = cell.step(bound, x, s);
      return s.h;
    };
    return State{fold(lstm_buy_, buy_steps), fold(lstm_sell_, sell_steps)};
  }

  // G_b sees (h_buy, h_sell), G_s sees (h_sell, h_buy).
  std::pair<nn::Var, nn::Var> generate(nn::Tape& t, const State& s, std::optional<nn::Var> book = {}) const {
    if (cfg_.feed_book && !book) throw ConfigError("feed_book requires the boundary book");
    nn::Var in_b = cfg_.feed_book ? nn::concat_cols({s.h_buy, s.h_sell, *book}) : nn::concat_cols({s.h_buy, s.h_sell});
    nn::Var in_s = cfg_.feed_book ? nn::concat_cols({s.h_sell, s.h_buy, *book}) : nn::concat_cols({s.h_sell, s.h_buy});
    return {gen_buy_(t, in_b), gen_sell_(t, in_s)};
  }

  // log1p(expm1(boundary) + delta_bid + delta_ask), boundary constant.
  static nn::Var predict(nn::Tape& t, const nn::Tensor& boundary, nn::Var delta_bid, nn::Var delta_ask) {
    nn::Tensor vol(boundary.rows(), boundary.cols());
    for (std::size_t i = 0; i < vol.size(); ++i) vol[i] = std::expm1(boundary[i]);
    return nn::log1p(nn::add(nn::add(t.constant(std::move(vol)), delta_bid), delta_ask));
  }

  static nn::Var gamma(nn::Var real, nn::Var predicted) { return nn::row_sum(nn::abs(nn::sub(real, predicted))); }

  // Forward pass for the given segment rows of one day.
  Output forward(nn::Tape& t, const DayVectors& day, std::span<const std::size_t> rows) const {
    check_day(day);
    const std::size_t m = cfg_.m_history;
    std::vector<nn::Var> buy_steps, sell_steps;
    buy_steps.reserve(m);
    sell_steps.reserve(m);
    for (std::size_t j = 0; j < m; ++j) {
      // Step j holds segment n - m + j; positions before the day start are zero.
      buy_steps.push_back(t.constant(history_step(day.delta_bid, rows, m - j)));
      sell_steps.push_back(t.constant(history_step(day.delta_ask, rows, m - j)));
    }
    const State s = encode_history(t, buy_steps, sell_steps);
    const nn::Tensor boundary = gather(day.boundary, rows);
    std::optional<nn::Var> book;
    if (cfg_.feed_book) book = t.constant(boundary);
    auto [db, ds] = generate(t, s, book);
    Output out{db, ds, predict(t, boundary, db, ds), {}};
    out.gamma = gamma(t.constant(gather(day.real, rows)), out.predicted);
    return out;
  }

  // Mean gamma over the given rows.
  nn::Var loss(nn::Tape& t, const DayVectors& day, std::span<const std::size_t> rows) const {
    return nn::mean(forward(t, day, rows).gamma);
  }

  // Context features [real O_n | predicted O_n | gamma] for every segment.
  nn::Tensor features(nn::ModelParams& params, const DayVectors& day, std::size_t chunk = 512) const {
    check_day(day);
    const std::size_t n = day.size();
    const std::size_t d = cfg_.book_dim();
    nn::Tensor out(n, cfg_.feature_dim());
    std::vector<std::size_t> rows;
    for (std::size_t lo = 0; lo < n; lo += chunk) {
      const std::size_t hi = std::min(n, lo + chunk);
      rows.clear();
      for (std::size_t i = lo; i < hi; ++i) rows.push_back(i);
      nn::Tape t(&params, false);
      const Output o = forward(t, day, rows);
      const auto& pred = o.predicted.value();
      const auto& gam = o.gamma.value();
      for (std::size_t r = 0; r < rows.size(); ++r) {
        auto dst = out.row_span(rows[r]);
        auto real = day.real.row_span(rows[r]);
        std::copy(real.begin(), real.end(), dst.begin());
        for (std::size_t k = 0; k < d; ++k) dst[d + k] = pred(r, k);
        dst[2 * d] = gam(r, 0);
      }
    }
    return out;
  }

  static nn::Tensor gather(const nn::Tensor& src, std::span<const std::size_t> rows) {
    nn::Tensor out(rows.size(), src.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      auto s = src.row_span(rows[r]);
      std::copy(s.begin(), s.end(), out.row_span(r).begin());
    }
    return out;
  }

private:
  static nn::Tensor history_step(const nn::Tensor& src, std::span<const std::size_t> rows, std::size_t lag) {
    nn::Tensor out(rows.size(), src.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r] < lag) continue;
      auto s = src.row_span(rows[r] - lag);
      std::copy(s.begin(), s.end(), out.row_span(r).begin());
    }
    return out;
  }

  void check_day(const DayVectors& day) const {
    if (day.k_levels != cfg_.k_levels) {
      throw DimensionError("day vectors use K=" + std::to_string(day.k_levels) + ", encoder expects K=" +
                           std::to_string(cfg_.k_levels));
    }
  }

  ContextConfig cfg_;
  nn::LstmCell lstm_buy_, lstm_sell_;
  nn::Mlp gen_buy_, gen_sell_;
};

struct ContextTrainConfig {
  std::size_t max_epochs = 30;
  std::size_t patience = 10;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  // Per-epoch cap on sampled training segments (0 = all).
  std::size_t segments_per_epoch = 0;
  // Fixed validation subset size (0 = all).
  std::size_t valid_segments = 0;
  std::uint64_t seed = 0;
};

struct ContextTrainReport {
  double initial_valid_loss = 0.0;
  std::vector<double> train_loss;
  std::vector<double> valid_loss;
  std::size_t best_epoch = 0;  // 1-based; 0 = initial weights kept
  double best_valid_loss = 0.0;
};

namespace detail {

struct SegmentRef {
  std::size_t day;
  std::size_t row;
};

inline std::vector<SegmentRef> all_segments(const std::vector<DayVectors>& days) {
  std::vector<SegmentRef> refs;
  for (std::size_t d = 0; d < days.size(); ++d) {
    for (std::size_t r = 0; r < days[d].size(); ++r) refs.push_back({d, r});
  }
  return refs;
}

// Groups a list of segment refs into per-day row batches of at most `batch`.
template <typename Fn>
void for_each_day_batch(const std::vector<SegmentRef>& refs, std::size_t batch, Fn fn) {
  std::size_t i = 0;
  std::vector<std::size_t> rows;
  while (i < refs.size()) {
    const std::size_t day = refs[i].day;
    rows.clear();
    while (i < refs.size() && refs[i].day == day && rows.size() < batch) rows.push_back(refs[i++].row);
    fn(day, std::span<const std::size_t>(rows));
  }
}

}  // namespace detail

inline double context_loss(const ContextEncoder& enc, nn::ModelParams& params, const std::vector<DayVectors>& days,
                           const std::vector<detail::SegmentRef>& refs, std::size_t batch = 512) {
  double total = 0.0;
  std::size_t count = 0;
  detail::for_each_day_batch(refs, batch, [&](std::size_t d, std::span<const std::size_t> rows) {
    nn::Tape t(&params, false);
    const auto g = enc.forward(t, days[d], rows).gamma.value();
    for (std::size_t r = 0; r < g.rows(); ++r) total += g(r, 0);
    count += rows.size();
  });
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

// Minimizes mean gamma with Adam; keeps the parameters of the best
// validation epoch and stops after `patience` epochs without improvement.
inline ContextTrainReport train_context_encoder(const ContextEncoder& enc, nn::ModelParams& params,
                                                const std::vector<DayVectors>& train,
                                                const std::vector<DayVectors>& valid, const ContextTrainConfig& cfg,
                                                const std::function<void(const std::string&)>& log = {}) {
  if (cfg.batch_size == 0) throw ConfigError("batch_size must be positive");
  Rng rng(cfg.seed);
  auto train_refs = detail::all_segments(train);
  auto valid_refs = detail::all_segments(valid.empty() ? train : valid);
  const auto& valid_days = valid.empty() ? train : valid;
  if (train_refs.empty()) throw ConfigError("no training segments");
  if (cfg.valid_segments != 0 && valid_refs.size() > cfg.valid_segments) {
    rng.shuffle(valid_refs);
    valid_refs.resize(cfg.valid_segments);
  }
  auto by_position = [](const detail::SegmentRef& a, const detail::SegmentRef& b) {
    return a.day != b.day ? a.day < b.day : a.row < b.row;
  };
  std::sort(valid_refs.begin(), valid_refs.end(), by_position);

  ContextTrainReport rep;
  rep.initial_valid_loss = context_loss(enc, params, valid_days, valid_refs);
  rep.best_valid_loss = rep.initial_valid_loss;
  nn::ModelParams best = params;
  nn::Adam adam(cfg.lr);
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(train_refs);
    std::vector<detail::SegmentRef> sample(train_refs.begin(),
                                           train_refs.begin() + static_cast<std::ptrdiff_t>(
                                               cfg.segments_per_epoch == 0
                                                   ? train_refs.size()
                                                   : std::min(cfg.segments_per_epoch, train_refs.size())));
    // Batches are drawn per day so each batch shares one day's tensors.
    std::stable_sort(sample.begin(), sample.end(),
                     [](const detail::SegmentRef& a, const detail::SegmentRef& b) { return a.day < b.day; });
    std::vector<std::pair<std::size_t, std::vector<std::size_t>>> batches;
    detail::for_each_day_batch(sample, cfg.batch_size, [&](std::size_t d, std::span<const std::size_t> rows) {
      batches.emplace_back(d, std::vector<std::size_t>(rows.begin(), rows.end()));
    });
    rng.shuffle(batches);

    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& [d, rows] = batches[b];
      params.zero_grad();
      nn::Tape t(&params, true);
      nn::Var loss = enc.loss(t, train[d], rows);
      const double v = loss.value().item();
      if (!std::isfinite(v)) {
        throw NumericError("context training: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(b));
      }
      t.backward(loss);
      adam.step(params);
      epoch_loss += v * static_cast<double>(rows.size());
      seen += rows.size();
    }
    rep.train_loss.push_back(epoch_loss / static_cast<double>(std::max<std::size_t>(seen, 1)));
    const double vl = context_loss(enc, params, valid_days, valid_refs);
    rep.valid_loss.push_back(vl);
    if (log) {
      log("context epoch " + std::to_string(epoch) + " train=" + std::to_string(rep.train_loss.back()) +
          " valid=" + std::to_string(vl));
    }
    if (vl < rep.best_valid_loss) {
      rep.best_valid_loss = vl;
      rep.best_epoch = epoch;
      best = params;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  params.assign_from(best);
  return rep;
}

}  // namespace microflow
