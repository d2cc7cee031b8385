#include <cstdlib>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "microflow/pipeline/stages.hpp"

using namespace microflow;
using namespace microflow::pipeline;

namespace {

struct Options {
  std::string config_path;
  bool quiet = false;
  std::map<std::string, std::string> flags;  // key -> raw value, only when given
};

RunConfig resolve_config(const Options& opt) {
  RunConfig cfg;
  std::string path = opt.config_path;
  if (path.empty()) {
    if (const char* env = std::getenv("MICROFLOW_CONFIG")) path = env;
  }
  if (!path.empty()) cfg.apply(io::parse_kv_file(path));
  cfg.apply(opt.flags);
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Order-flow factor pipeline: synthetic data, replay, segmentation, training, selection, evaluation"};
  app.require_subcommand(1);
  Options opt;
  app.add_option("--config", opt.config_path, "key = value config file (fallback: $MICROFLOW_CONFIG)");
  app.add_flag("-q,--quiet", opt.quiet, "suppress progress messages");

  std::map<std::string, std::string> raw;
  for (const auto& k : RunConfig::keys()) {
    const std::string flag = "--" + flag_name(k.name);
    const std::string def = k.get(RunConfig{});
    const std::string help = k.help + " [" + k.name + ", default " + def + "]";
    if (def == "true" || def == "false") {
      app.add_flag(flag + "{true}", raw[k.name], help)->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    } else {
      app.add_option(flag, raw[k.name], help);
    }
  }

  const std::map<std::string, std::string> about = {
      {"gen-data", "write a synthetic order-flow panel and its day manifest"},
      {"replay", "match order flow into per-day transaction logs"},
      {"segment", "split days into fixed windows and check the replay"},
      {"train-context", "train the context encoder"},
      {"train-svdd", "train the factor extractor and hypersphere"},
      {"extract", "write per-segment factor features"},
      {"select", "rank segments by uniqueness and select the top fraction"},
      {"baselines", "write comparison selections and book-based factors"},
      {"evaluate", "fit daily heads, run the execution policy, write metrics"}};
  for (const auto& s : stage_names()) app.add_subcommand(s, about.at(s))->fallthrough();
  app.add_subcommand("run-all", "run every stage in order")->fallthrough();

  CLI11_PARSE(app, argc, argv);

  for (const auto& k : RunConfig::keys()) {
    if (app.count("--" + flag_name(k.name)) > 0) opt.flags[k.name] = raw[k.name];
  }

  const std::string command = app.get_subcommands().front()->get_name();
  std::string stage = command;
  try {
    const RunConfig cfg = resolve_config(opt);
    LogFn log;
    if (!opt.quiet) log = [](const std::string& m) { std::cerr << m << '\n'; };
    const Workspace ws(cfg, log);
    ws.log("config hash " + ws.hash());
    if (command == "run-all") {
      run_all(ws, &stage);
    } else {
      run_stage(ws, command);
    }
  } catch (const StageError& e) {
    std::cerr << "microflow: stage " << stage << " failed: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "microflow: stage " << stage << " failed: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
