#pragma once

#include <charconv>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "microflow/error.hpp"
#include "microflow/io/csv.hpp"
#include "microflow/io/kv_config.hpp"
#include "microflow/io/synthetic.hpp"
#include "microflow/model/context_encoder.hpp"
#include "microflow/model/factor_extractor.hpp"
#include "microflow/model/svdd.hpp"

namespace microflow::pipeline {

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Every hyperparameter of a run. Keys use the names listed in
// RunConfig::keys(); CLI flags are the same names with '_' and '.' mapped
// to '-'.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string data_dir = "data";
  std::string work_dir = "work";
  std::size_t jobs = 1;
  bool drop_cancels = false;

  // Segmentation and context encoder.
  std::int64_t delta_t_ms = 4000;
  std::size_t k_levels = 10;
  std::size_t m_history = 100;
  std::size_t context_hidden = 64;
  std::size_t generator_hidden = 64;
  bool feed_book = false;

  // Factor extractor and hypersphere.
  std::size_t d_e = 16;
  std::size_t encoder_hidden = 16;
  std::size_t heads = 4;
  std::size_t l_max = 256;
  double mask_w = 0.25;
  std::string mask_mode = "hybrid";
  double mu = 0.02;
  double lambda = 0.1;
  double lr = 1e-3;

  // Training schedules.
  std::size_t context_epochs = 30;
  std::size_t context_patience = 10;
  std::size_t context_batch = 64;
  std::size_t context_segments_per_epoch = 0;
  std::size_t context_valid_segments = 0;
  std::size_t svdd_epochs = 20;
  std::size_t svdd_patience = 5;
  std::size_t svdd_batch = 128;
  std::size_t svdd_samples_per_epoch = 0;

  // Evaluation.
  std::size_t baseline_seeds = 5;
  std::string minute_stat = "mean";

  // Synthetic data (gen-data).
  std::size_t synth_instruments = 1;
  std::size_t synth_days = 12;
  std::string synth_start_date = "2024-01-02";
  std::int64_t synth_session_ms = 4 * 3600 * 1000;
  double synth_anomaly_fraction = 0.02;
  double synth_anomaly_day_prob = 1.0;
  double synth_label_beta = 0.01;
  double synth_label_noise = 0.005;
  double synth_limit_rate = 1.5;
  double synth_cancel_rate = 1.0;
  double synth_market_prob = 0.25;

  struct Key {
    std::string name;
    std::string help;
    bool hashed = true;  // false for paths, parallelism and selection-only keys
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
  };

  static const std::vector<Key>& keys();

  void set(const std::string& key, const std::string& value) {
    for (const auto& k : keys()) {
      if (k.name == key) {
        k.set(*this, value);
        return;
      }
    }
    throw ConfigError("unknown config key '" + key + "'");
  }

  std::string get(const std::string& key) const {
    for (const auto& k : keys()) {
      if (k.name == key) return k.get(*this);
    }
    throw ConfigError("unknown config key '" + key + "'");
  }

  void apply(const std::map<std::string, std::string>& kv) {
    for (const auto& [k, v] : kv) set(k, v);
  }

  void validate() const {
    if (delta_t_ms <= 0) throw ConfigError("delta_t_ms must be positive");
    if (!(mu > 0.0 && mu <= 1.0)) throw ConfigError("mu must lie in (0, 1]");
    if (!(mask_w > 0.0 && mask_w < 0.5)) throw ConfigError("mask_w must lie in (0, 0.5)");
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (jobs == 0) throw ConfigError("jobs must be at least 1");
    if (baseline_seeds == 0) throw ConfigError("baseline_seeds must be at least 1");
    if (synth_instruments == 0) throw ConfigError("synth.instruments must be at least 1");
    if (!(synth_anomaly_day_prob >= 0.0 && synth_anomaly_day_prob <= 1.0)) {
      throw ConfigError("synth.anomaly_day_prob must lie in [0, 1]");
    }
    parse_mask_mode(mask_mode);
    context_config().validate();
    extractor_config().validate();
    svdd_config().validate();
  }

  // Canonical "key=value" lines of the hashed keys, in key order.
  std::string canonical(bool hashed_only = true) const {
    std::string out;
    for (const auto& k : keys()) {
      if (hashed_only && !k.hashed) continue;
      out += k.name + "=" + k.get(*this) + "\n";
    }
    return out;
  }

  // FNV-1a 64 of canonical(); identifies everything that shapes artifacts.
  std::string hash() const {
    const std::uint64_t h = fnv1a64(canonical());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

  ContextConfig context_config() const {
    return {.k_levels = k_levels,
            .m_history = m_history,
            .hidden = context_hidden,
            .gen_hidden = generator_hidden,
            .feed_book = feed_book};
  }

  ExtractorConfig extractor_config() const {
    return {.context_dim = 4 * k_levels + 1,
            .d_e = d_e,
            .hidden = encoder_hidden,
            .heads = heads,
            .l_max = l_max,
            .mask_w = mask_w,
            .mask_mode = parse_mask_mode(mask_mode)};
  }

  SvddConfig svdd_config() const { return {.mu = mu, .lambda = lambda}; }

  ContextTrainConfig context_train_config() const {
    return {.max_epochs = context_epochs,
            .patience = context_patience,
            .batch_size = context_batch,
            .lr = lr,
            .segments_per_epoch = context_segments_per_epoch,
            .valid_segments = context_valid_segments,
            .seed = derive_seed(seed, 0xC0)};
  }

  SvddTrainConfig svdd_train_config() const {
    return {.max_epochs = svdd_epochs,
            .patience = svdd_patience,
            .batch_size = svdd_batch,
            .lr = lr,
            .samples_per_epoch = svdd_samples_per_epoch,
            .seed = derive_seed(seed, 0x5D)};
  }

  SynthConfig synth_config() const {
    SynthConfig c;
    c.session_ms = synth_session_ms;
    c.segment_ms = delta_t_ms;
    c.anomaly_fraction = synth_anomaly_fraction;
    c.limit_rate = synth_limit_rate;
    c.cancel_rate = synth_cancel_rate;
    c.market_prob = synth_market_prob;
    return c;
  }
};

namespace detail {

template <typename T>
void parse_value(const std::string& key, const std::string& v, T& out) {
  if constexpr (std::is_same_v<T, bool>) {
    if (v == "true" || v == "1") out = true;
    else if (v == "false" || v == "0") out = false;
    else throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
  } else if constexpr (std::is_same_v<T, std::string>) {
    out = v;
  } else if constexpr (std::is_same_v<T, double>) {
    std::size_t used = 0;
    try {
      out = std::stod(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != v.size()) throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  } else {
    if (!v.empty() && v.front() == '-' && std::is_unsigned_v<T>) {
      throw ConfigError("config key '" + key + "': expected a nonnegative integer, got '" + v + "'");
    }
    if (!io::parse_number(v, out)) throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  }
}

template <typename T>
std::string format_value(const T& v) {
  if constexpr (std::is_same_v<T, bool>) return v ? "true" : "false";
  else if constexpr (std::is_same_v<T, std::string>) return v;
  else if constexpr (std::is_same_v<T, double>) return io::format_double(v);
  else return std::to_string(v);
}

template <typename T>
RunConfig::Key key(std::string name, std::string help, T RunConfig::*field, bool hashed = true) {
  return {std::move(name), std::move(help), hashed,
          [field](const RunConfig& c) { return format_value(c.*field); },
          [field, name](RunConfig& c, const std::string& v) { parse_value(name, v, c.*field); }};
}

}  // namespace detail

inline const std::vector<RunConfig::Key>& RunConfig::keys() {
  using detail::key;
  static const std::vector<Key> k = {
      key("seed", "master random seed", &RunConfig::seed),
      key("data_dir", "directory holding days.csv and order-flow files", &RunConfig::data_dir, false),
      key("work_dir", "directory for stage artifacts", &RunConfig::work_dir, false),
      key("jobs", "worker threads for per-day stages", &RunConfig::jobs, false),
      key("drop_cancels", "ignore cancel rows when reading order flow", &RunConfig::drop_cancels),
      key("delta_t_ms", "segment length in ms", &RunConfig::delta_t_ms),
      key("k_levels", "price levels per side in book vectors", &RunConfig::k_levels),
      key("m_history", "prior segments seen by the context encoder", &RunConfig::m_history),
      key("context.hidden", "LSTM hidden width", &RunConfig::context_hidden),
      key("context.generator_hidden", "generator MLP hidden width", &RunConfig::generator_hidden),
      key("context.feed_book", "also feed the boundary book to the generators", &RunConfig::feed_book),
      key("d_e", "transaction embedding width", &RunConfig::d_e),
      key("encoder_hidden", "hidden width of the extractor encoders", &RunConfig::encoder_hidden),
      key("heads", "attention heads", &RunConfig::heads),
      key("l_max", "most recent transactions kept per segment", &RunConfig::l_max),
      key("mask_w", "same-sign attention weight w", &RunConfig::mask_w),
      key("mask.mode", "hybrid or multiplicative", &RunConfig::mask_mode),
      key("mu", "selected fraction and soft-boundary parameter", &RunConfig::mu, false),
      key("lambda", "weight regularization strength", &RunConfig::lambda),
      key("lr", "Adam learning rate", &RunConfig::lr),
      key("context.epochs", "context encoder epochs", &RunConfig::context_epochs),
      key("context.patience", "context encoder early-stopping patience", &RunConfig::context_patience),
      key("context.batch", "context encoder batch size", &RunConfig::context_batch),
      key("context.segments_per_epoch", "training segments drawn per epoch (0 = all)",
          &RunConfig::context_segments_per_epoch),
      key("context.valid_segments", "validation segments scored per epoch (0 = all)",
          &RunConfig::context_valid_segments),
      key("svdd.epochs", "hypersphere training epochs", &RunConfig::svdd_epochs),
      key("svdd.patience", "hypersphere early-stopping patience", &RunConfig::svdd_patience),
      key("svdd.batch", "hypersphere batch size", &RunConfig::svdd_batch),
      key("svdd.samples_per_epoch", "training segments drawn per epoch (0 = all)",
          &RunConfig::svdd_samples_per_epoch),
      key("eval.baseline_seeds", "seeds averaged for the random-sample baseline", &RunConfig::baseline_seeds),
      key("eval.minute_stat", "minute aggregate driving the execution policy", &RunConfig::minute_stat),
      key("synth.instruments", "instruments generated by gen-data", &RunConfig::synth_instruments),
      key("synth.days", "trading days generated per instrument", &RunConfig::synth_days),
      key("synth.start_date", "first generated date (weekdays only)", &RunConfig::synth_start_date),
      key("synth.session_ms", "session length in ms", &RunConfig::synth_session_ms),
      key("synth.anomaly_fraction", "fraction of anomalous segments on an anomalous day",
          &RunConfig::synth_anomaly_fraction),
      key("synth.anomaly_day_prob", "probability that a day carries anomaly windows",
          &RunConfig::synth_anomaly_day_prob),
      key("synth.label_beta", "next-day return per unit of anomaly direction", &RunConfig::synth_label_beta),
      key("synth.label_noise", "std of the next-day return noise", &RunConfig::synth_label_noise),
      key("synth.limit_rate", "adds per second per side", &RunConfig::synth_limit_rate),
      key("synth.cancel_rate", "cancels per second", &RunConfig::synth_cancel_rate),
      key("synth.market_prob", "marketable fraction of adds", &RunConfig::synth_market_prob),
  };
  return k;
}

// CLI flag spelling of a key: '_' and '.' become '-'.
inline std::string flag_name(const std::string& key) {
  std::string f = key;
  for (auto& c : f) {
    if (c == '_' || c == '.') c = '-';
  }
  return f;
}

}  // namespace microflow::pipeline
