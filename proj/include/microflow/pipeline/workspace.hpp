#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "microflow/error.hpp"
#include "microflow/io/csv.hpp"
#include "microflow/nn/params.hpp"
#include "microflow/pipeline/dataset.hpp"
#include "microflow/pipeline/run_config.hpp"

namespace microflow::pipeline {

using Json = nlohmann::json;
using LogFn = std::function<void(const std::string&)>;

inline constexpr const char* kGeneratorTag = "generator=synthetic";

// Leading "#" lines of a text file.
inline std::vector<std::string> leading_comments(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line) && !line.empty() && line.front() == '#') out.push_back(line);
  return out;
}

inline std::optional<std::string> meta_value(const std::vector<std::string>& comments, const std::string& key) {
  std::optional<std::string> v;
  for (const auto& [k, val] : io::parse_meta_comments(comments)) {
    if (k == key) v = val;
  }
  return v;
}

inline Json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

inline void write_json(const std::string& path, const Json& j) {
  auto out = io::open_for_write(path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

// Artifact layout and provenance for one run. Every file written under the
// work directory carries the config hash; readers compare it against the
// current configuration and abort on mismatch, naming the producing stage.
class Workspace {
public:
  explicit Workspace(RunConfig cfg, LogFn log = {}) : cfg_(std::move(cfg)), log_(std::move(log)) {
    cfg_.validate();
    hash_ = cfg_.hash();
  }

  const RunConfig& cfg() const noexcept { return cfg_; }
  const std::string& hash() const noexcept { return hash_; }

  void log(const std::string& msg) const {
    if (log_) log_(msg);
  }
  const LogFn& logger() const noexcept { return log_; }

  std::filesystem::path work() const { return cfg_.work_dir; }
  std::filesystem::path data() const { return cfg_.data_dir; }
  std::string manifest_path() const { return (data() / kManifestName).string(); }

  std::string file(const std::string& name) const { return (work() / name).string(); }

  std::string day_file(const std::string& dir, const DayEntry& d, const std::string& suffix) const {
    return (work() / dir / (day_key(d) + "." + suffix + ".csv")).string();
  }

  void ensure_dir(const std::string& dir) const { std::filesystem::create_directories(work() / dir); }

  // Comment lines for an artifact: hash, stage and every hashed key.
  std::vector<std::string> header(const std::string& stage) const {
    std::vector<std::string> out{"config_hash=" + hash_ + " stage=" + stage};
    std::string canon = cfg_.canonical();
    std::size_t start = 0;
    while (start < canon.size()) {
      const std::size_t end = canon.find('\n', start);
      out.push_back(canon.substr(start, end - start));
      start = end + 1;
    }
    return out;
  }

  // Aborts when an artifact was written under a different configuration.
  void check_hash(const std::vector<std::string>& comments, const std::string& path,
                  const std::string& producer) const {
    const auto h = meta_value(comments, "config_hash");
    if (!h) throw StageError(producer, path + " carries no config hash; rerun `" + producer + "`");
    if (*h != hash_) {
      throw StageError(producer, path + " was produced with config hash " + *h + " but the current config hash is " +
                                     hash_ + "; rerun `" + producer + "`");
    }
  }

  void check_file(const std::string& path, const std::string& producer) const {
    if (!std::filesystem::exists(path)) {
      throw StageError(producer, "missing " + path + "; run `" + producer + "` first");
    }
    check_hash(leading_comments(path), path, producer);
  }

  std::vector<DayEntry> manifest() const {
    const auto path = manifest_path();
    if (!std::filesystem::exists(path)) {
      throw StageError("gen-data", "missing day manifest " + path + "; run `gen-data` or provide one");
    }
    const auto comments = leading_comments(path);
    bool synthetic = false;
    for (const auto& c : comments) synthetic = synthetic || c.find(kGeneratorTag) != std::string::npos;
    if (synthetic) check_hash(comments, path, "gen-data");
    auto days = read_manifest(path);
    if (days.empty()) throw ConfigError(path + " lists no days");
    return days;
  }

  std::string stamp_path(const std::string& stage) const { return file("stamps/" + stage + ".json"); }

  void clear_stamp(const std::string& stage) const { std::filesystem::remove(stamp_path(stage)); }

  void stamp(const std::string& stage, Json extra = Json::object()) const {
    ensure_dir("stamps");
    extra["stage"] = stage;
    extra["config_hash"] = hash_;
    write_json(stamp_path(stage), extra);
  }

  // Completion record of a predecessor stage; missing or stale stamps name
  // the stage to rerun.
  Json require(const std::string& stage) const {
    const auto path = stamp_path(stage);
    if (!std::filesystem::exists(path)) {
      throw StageError(stage, "missing output of stage `" + stage + "` in " + work().string() + "; run `" + stage +
                                  "` first");
    }
    Json j = read_json(path);
    const std::string h = j.value("config_hash", std::string());
    if (h != hash_) {
      throw StageError(stage, "output of stage `" + stage + "` was produced with config hash " + h +
                                  " but the current config hash is " + hash_ + "; rerun `" + stage + "`");
    }
    return j;
  }

  // Selection-dependent stages also require the selection to use the
  // current mu, which the config hash does not cover.
  void require_selection() const {
    const Json j = require("select");
    const double mu = j.value("mu", -1.0);
    if (mu != cfg_.mu) {
      throw StageError("select", "selection was made with mu " + io::format_double(mu) + " but mu is now " +
                                     io::format_double(cfg_.mu) + "; rerun `select`");
    }
  }

  void save_model(const std::string& name, const std::string& stage, const nn::ModelParams& params,
                  std::map<std::string, std::string> meta = {}) const {
    meta["config_hash"] = hash_;
    meta["stage"] = stage;
    std::filesystem::create_directories(work());
    nn::save_checkpoint(file(name), {std::move(meta), params, std::nullopt});
  }

  nn::Checkpoint load_model(const std::string& name, const std::string& producer) const {
    const auto path = file(name);
    if (!std::filesystem::exists(path)) throw StageError(producer, "missing " + path + "; run `" + producer + "` first");
    auto ck = nn::load_checkpoint(path);
    auto it = ck.meta.find("config_hash");
    if (it == ck.meta.end() || it->second != hash_) {
      throw StageError(producer, path + " was produced with config hash " +
                                     (it == ck.meta.end() ? std::string("(none)") : it->second) +
                                     " but the current config hash is " + hash_ + "; rerun `" + producer + "`");
    }
    return ck;
  }

private:
  RunConfig cfg_;
  std::string hash_;
  LogFn log_;
};

}  // namespace microflow::pipeline
