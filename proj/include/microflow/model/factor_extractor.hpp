#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "microflow/error.hpp"
#include "microflow/io/normalize.hpp"
#include "microflow/lob/types.hpp"
#include "microflow/nn/autodiff.hpp"
#include "microflow/nn/layers.hpp"
#include "microflow/util/rng.hpp"

namespace microflow {

inline constexpr std::size_t kTxnRawDim = 4;
inline constexpr double kMaskedLogit = -1e9;

enum class MaskMode {
  Hybrid,          // weights scale unmasked logits; masked logits forced to -1e9
  Multiplicative,  // logits times the weight matrix, masked entries weight 0
};

inline MaskMode parse_mask_mode(const std::string& s) {
  if (s == "hybrid") return MaskMode::Hybrid;
  if (s == "multiplicative") return MaskMode::Multiplicative;
  throw ConfigError("mask.mode must be 'hybrid' or 'multiplicative', got '" + s + "'");
}

inline std::string to_string(MaskMode m) { return m == MaskMode::Hybrid ? "hybrid" : "multiplicative"; }

struct ExtractorConfig {
  std::size_t context_dim = 41;  // 4K + 1
  std::size_t d_e = 16;
  std::size_t hidden = 16;
  std::size_t heads = 4;
  std::size_t l_max = 256;
  double mask_w = 0.25;
  MaskMode mask_mode = MaskMode::Hybrid;

  void validate() const {
    if (context_dim == 0 || d_e == 0 || hidden == 0 || heads == 0 || l_max == 0) {
      throw ConfigError("factor extractor sizes must be positive");
    }
    if (!(mask_w > 0.0 && mask_w < 0.5)) throw ConfigError("mask weight w must lie in (0, 0.5)");
  }
};

// Raw per-transaction rows of one segment, oldest first, truncated to the
// most recent l_max. Columns: price minus segment-open mid (ticks),
// log1p(|size|), sign(size), time offset as a fraction of the window.
struct TxnRows {
  nn::Tensor raw;
  std::vector<TimeMs> times;
  std::vector<int> signs;

  std::size_t size() const noexcept { return times.size(); }
  bool empty() const noexcept { return times.empty(); }
};

inline TxnRows transaction_rows(std::span<const Transaction> z, double mid, TimeMs begin, TimeMs window_ms,
                                std::size_t l_max) {
  if (window_ms <= 0) throw ConfigError("segment window must be positive");
  const std::size_t skip = z.size() > l_max ? z.size() - l_max : 0;
  const std::size_t l = z.size() - skip;
  TxnRows out;
  out.raw = nn::Tensor(l, kTxnRawDim);
  out.times.reserve(l);
  out.signs.reserve(l);
  for (std::size_t i = 0; i < l; ++i) {
    const Transaction& t = z[skip + i];
    if (i > 0 && t.time < out.times.back()) throw FormatError("transactions must be time-sorted");
    out.raw(i, 0) = static_cast<double>(t.price) / static_cast<double>(kFixedScale) - mid;
    out.raw(i, 1) = std::log1p(static_cast<double>(t.quantity()));
    out.raw(i, 2) = t.size > 0 ? 1.0 : -1.0;
    out.raw(i, 3) = static_cast<double>(t.time - begin) / static_cast<double>(window_ms);
    out.times.push_back(t.time);
    out.signs.push_back(t.size > 0 ? 1 : -1);
  }
  return out;
}

// L x L attention mask. Row i may attend to column j only when t_j < t_i or
// i == j. Visible off-diagonal pairs get weight w for same-sign transactions
// and 1 - w otherwise; the diagonal gets 1.
struct MaskMatrix {
  std::size_t n = 0;
  nn::Tensor weight;  // multiplier for visible entries, 0 where masked
  nn::Tensor offset;  // kMaskedLogit where masked (hybrid mode), else 0

  bool masked(std::size_t i, std::size_t j) const { return weight(i, j) == 0.0; }
};

inline MaskMatrix build_mask(std::span<const TimeMs> times, std::span<const int> signs, double w,
                             MaskMode mode = MaskMode::Hybrid) {
  if (!(w > 0.0 && w < 0.5)) throw ConfigError("mask weight w must lie in (0, 0.5)");
  if (times.size() != signs.size()) throw DimensionError("mask: times and signs differ in length");
  const std::size_t n = times.size();
  MaskMatrix m;
  m.n = n;
  m.weight = nn::Tensor(n, n);
  m.offset = nn::Tensor(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) {
        m.weight(i, j) = 1.0;
      } else if (times[i] <= times[j]) {
        if (mode == MaskMode::Hybrid) m.offset(i, j) = kMaskedLogit;
      } else {
        m.weight(i, j) = signs[i] * signs[j] > 0 ? w : 1.0 - w;
      }
    }
  }
  return m;
}

// Conditional multi-head attention over a segment's transactions.
class FactorExtractor {
public:
  struct Output {
    nn::Var feature;                 // 1 x d_e
    std::vector<nn::Var> attention;  // per head, L x L row-stochastic
  };

  static FactorExtractor create(nn::ModelParams& params, const ExtractorConfig& cfg, Rng& rng) {
    cfg.validate();
    FactorExtractor f;
    f.cfg_ = cfg;
    // Bias-free layers: with biases the network could map every segment to
    // the fixed center with zero weights, a trivial hypersphere solution.
    f.enc_txn_ = nn::Mlp::create(params, "extractor.enc_txn", kTxnRawDim, cfg.hidden, cfg.d_e, rng,
                                 nn::Activation::Relu, nn::Activation::Identity, false);
    f.enc_ctx_ = nn::Mlp::create(params, "extractor.enc_ctx", cfg.context_dim, cfg.hidden, cfg.d_e, rng,
                                 nn::Activation::Relu, nn::Activation::Identity, false);
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      const std::string p = "extractor.head" + std::to_string(h);
      f.wq_.push_back(nn::Linear::create(params, p + ".query", 2 * cfg.d_e, cfg.d_e, rng, false));
      f.wk_.push_back(nn::Linear::create(params, p + ".key", 2 * cfg.d_e, cfg.d_e, rng, false));
      f.wv_.push_back(nn::Linear::create(params, p + ".value", cfg.d_e, cfg.d_e, rng, false));
    }
    f.wh_ = nn::Linear::create(params, "extractor.out", cfg.heads * cfg.d_e, cfg.d_e, rng, false);
    return f;
  }

  static FactorExtractor bind(const nn::ModelParams& params, const ExtractorConfig& cfg) {
    cfg.validate();
    FactorExtractor f;
    f.cfg_ = cfg;
    f.enc_txn_ = nn::Mlp::bind(params, "extractor.enc_txn", nn::Activation::Relu, nn::Activation::Identity, false);
    f.enc_ctx_ = nn::Mlp::bind(params, "extractor.enc_ctx", nn::Activation::Relu, nn::Activation::Identity, false);
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      const std::string p = "extractor.head" + std::to_string(h);
      f.wq_.push_back(nn::Linear::bind(params, p + ".query", false));
      f.wk_.push_back(nn::Linear::bind(params, p + ".key", false));
      f.wv_.push_back(nn::Linear::bind(params, p + ".value", false));
    }
    f.wh_ = nn::Linear::bind(params, "extractor.out", false);
    if (f.enc_ctx_.hidden.in != cfg.context_dim || f.wh_.out != cfg.d_e) {
      throw DimensionError("extractor checkpoint does not match configuration");
    }
    return f;
  }

  const ExtractorConfig& config() const noexcept { return cfg_; }

  // L x 4 normalized rows -> L x d_e.
  nn::Var encode_transactions(nn::Tape& t, nn::Var rows) const { return enc_txn_(t, rows); }

  // 1 x (4K+1) normalized context -> 1 x d_e.
  nn::Var encode_context(nn::Tape& t, nn::Var ctx) const { return enc_ctx_(t, ctx); }

  Output attend(nn::Tape& t, nn::Var e, nn::Var r, const MaskMatrix& mask) const {
    const std::size_t l = e.rows();
    if (l == 0) throw DimensionError("attention over an empty segment");
    if (mask.n != l) throw DimensionError("mask size does not match transaction count");
    nn::Var x = nn::concat_cols({e, nn::repeat_rows(r, l)});
    nn::Var weight = t.constant(mask.weight);
    nn::Var offset = t.constant(mask.offset);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(cfg_.d_e));
    Output out;
    std::vector<nn::Var> heads;
    for (std::size_t h = 0; h < cfg_.heads; ++h) {
      nn::Var q = wq_[h](t, x);
      nn::Var k = wk_[h](t, x);
      nn::Var v = wv_[h](t, e);
      nn::Var logits = nn::add(nn::mul(nn::scale(nn::matmul_bt(q, k), inv_sqrt), weight), offset);
      nn::Var a = nn::row_softmax(logits);
      out.attention.push_back(a);
      heads.push_back(nn::row_maxpool(nn::matmul(a, v)));
    }
    out.feature = wh_(t, nn::concat_cols(heads));
    return out;
  }

  // Full pass from normalized transaction rows and normalized context row.
  Output forward(nn::Tape& t, const nn::Tensor& rows, const MaskMatrix& mask, const nn::Tensor& ctx) const {
    nn::Var e = encode_transactions(t, t.constant(rows));
    nn::Var r = encode_context(t, t.constant(ctx));
    return attend(t, e, r, mask);
  }

private:
  ExtractorConfig cfg_;
  nn::Mlp enc_txn_, enc_ctx_;
  std::vector<nn::Linear> wq_, wk_, wv_;
  nn::Linear wh_;
};

// One segment's prepared extractor input.
struct SegmentSample {
  std::size_t day = 0;
  std::size_t index = 0;
  nn::Tensor rows;  // L x 4, normalized
  MaskMatrix mask;
  nn::Tensor context;  // 1 x (4K+1), normalized
  bool valid = false;  // false when the segment had no transactions
};

}  // namespace microflow
