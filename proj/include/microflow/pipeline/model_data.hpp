#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "microflow/io/normalize.hpp"
#include "microflow/io/orderflow.hpp"
#include "microflow/model/context_encoder.hpp"
#include "microflow/model/factor_extractor.hpp"
#include "microflow/model/svdd.hpp"
#include "microflow/pipeline/dataset.hpp"
#include "microflow/pipeline/run_config.hpp"
#include "microflow/segment/segmenter.hpp"

namespace microflow::pipeline {

struct LoadedDay {
  DayEntry entry;
  SegmentedDay day;
  std::vector<std::uint8_t> labels;  // empty when the manifest has no label file
};

inline LoadedDay load_day(const RunConfig& cfg, const DayEntry& e) {
  LoadedDay d;
  d.entry = e;
  const auto base = std::filesystem::path(cfg.data_dir);
  auto stream = io::parse_orderflow((base / e.orders_file).string(), {.drop_cancels = cfg.drop_cancels});
  if (stream.instrument.empty()) stream.instrument = e.instrument;
  if (stream.date.empty()) stream.date = e.date;
  d.day = segment_day(std::move(stream), {.delta_t_ms = cfg.delta_t_ms});
  if (!e.labels_file.empty()) {
    d.labels = io::parse_labels((base / e.labels_file).string());
    if (d.labels.size() != d.day.segments.size()) {
      throw FormatError(e.labels_file + ": " + std::to_string(d.labels.size()) + " labels for " +
                        std::to_string(d.day.segments.size()) + " segments");
    }
  }
  return d;
}

// One segment's extractor input before or after normalization.
struct ExtractorInput {
  std::size_t segment = 0;
  nn::Tensor rows;  // L x 4
  std::vector<TimeMs> times;
  std::vector<int> signs;
  nn::Tensor context;  // 1 x (4K+1)
};

// Raw inputs of every segment with at least one transaction, in segment order.
inline std::vector<ExtractorInput> raw_inputs(const SegmentedDay& day, const nn::Tensor& context,
                                              const RunConfig& cfg) {
  if (context.rows() != day.segments.size()) throw DimensionError("context rows do not match segment count");
  std::vector<ExtractorInput> out;
  for (const auto& s : day.segments) {
    const auto z = day.transactions_of(s);
    if (z.empty()) continue;
    auto rows = transaction_rows(z, s.mid, s.begin, cfg.delta_t_ms, cfg.l_max);
    ExtractorInput in;
    in.segment = s.index;
    in.rows = std::move(rows.raw);
    in.times = std::move(rows.times);
    in.signs = std::move(rows.signs);
    in.context = nn::Tensor::row(context.row_span(s.index));
    out.push_back(std::move(in));
  }
  return out;
}

inline constexpr const char* kNormTxnMean = "norm.txn.mean";
inline constexpr const char* kNormTxnStd = "norm.txn.std";
inline constexpr const char* kNormCtxMean = "norm.ctx.mean";
inline constexpr const char* kNormCtxStd = "norm.ctx.std";

// Training-split z-score statistics for transaction rows and context rows.
struct InputNormalizer {
  NormStats txn;
  NormStats ctx;

  static InputNormalizer fit(const std::vector<const std::vector<ExtractorInput>*>& train_days) {
    std::size_t n_rows = 0, n_ctx = 0, ctx_dim = 0;
    for (const auto* d : train_days) {
      for (const auto& in : *d) {
        n_rows += in.rows.rows();
        ++n_ctx;
        ctx_dim = in.context.cols();
      }
    }
    if (n_ctx == 0) throw ConfigError("training split has no segment with transactions");
    nn::Tensor rows(n_rows, kTxnRawDim), ctx(n_ctx, ctx_dim);
    std::size_t r = 0, c = 0;
    for (const auto* d : train_days) {
      for (const auto& in : *d) {
        for (std::size_t i = 0; i < in.rows.rows(); ++i, ++r) {
          auto src = in.rows.row_span(i);
          std::copy(src.begin(), src.end(), rows.row_span(r).begin());
        }
        auto src = in.context.row_span(0);
        std::copy(src.begin(), src.end(), ctx.row_span(c++).begin());
      }
    }
    return {zscore_fit(rows), zscore_fit(ctx)};
  }

  void apply(std::vector<ExtractorInput>& day) const {
    for (auto& in : day) {
      for (std::size_t i = 0; i < in.rows.rows(); ++i) zscore_apply_inplace(txn, in.rows.row_span(i));
      zscore_apply_inplace(ctx, in.context.row_span(0));
    }
  }

  void store(nn::ModelParams& params) const {
    params.add(kNormTxnMean, nn::Tensor::row(txn.mean), false);
    params.add(kNormTxnStd, nn::Tensor::row(txn.stddev), false);
    params.add(kNormCtxMean, nn::Tensor::row(ctx.mean), false);
    params.add(kNormCtxStd, nn::Tensor::row(ctx.stddev), false);
  }

  static InputNormalizer load(const nn::ModelParams& params) {
    auto stats = [&](const char* mean, const char* sd) {
      NormStats s;
      s.mean = params.value(mean).to_vector();
      s.stddev = params.value(sd).to_vector();
      if (s.mean.size() != s.stddev.size()) throw DimensionError("normalizer checkpoint is inconsistent");
      for (std::size_t c = 0; c < s.stddev.size(); ++c) (s.stddev[c] > 0.0 ? s.kept : s.dropped).push_back(c);
      return s;
    };
    return {stats(kNormTxnMean, kNormTxnStd), stats(kNormCtxMean, kNormCtxStd)};
  }
};

// Context features F^M for every segment of a day.
inline nn::Tensor context_features(const ContextEncoder& enc, nn::ModelParams& params, const SegmentedDay& day,
                                   std::size_t k_levels) {
  return enc.features(params, vectorize_day(day, k_levels));
}

// Feature of one normalized input on `t`.
inline nn::Var embed_input(nn::Tape& t, const FactorExtractor& f, const ExtractorInput& in) {
  const auto mask = build_mask(in.times, in.signs, f.config().mask_w, f.config().mask_mode);
  return f.forward(t, in.rows, mask, in.context).feature;
}

// Flat view over several days' inputs for hypersphere training.
inline EmbedFn make_embed(const FactorExtractor& f, const std::vector<const ExtractorInput*>& items) {
  return [&f, &items](nn::Tape& t, std::size_t i) { return embed_input(t, f, *items.at(i)); };
}

// Creates the extractor, hypersphere and normalizer parameters of a fresh
// model.
inline FactorExtractor create_selector_model(nn::ModelParams& params, const RunConfig& cfg,
                                             const InputNormalizer& norm) {
  Rng rng(derive_seed(cfg.seed, 0xE7));
  auto f = FactorExtractor::create(params, cfg.extractor_config(), rng);
  add_hypersphere(params, init_center(cfg.d_e, derive_seed(cfg.seed, 0xCE)), 0.0);
  norm.store(params);
  return f;
}

}  // namespace microflow::pipeline
