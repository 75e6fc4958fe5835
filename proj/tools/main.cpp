#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "xmlc/errors.hpp"

namespace {

enum Exit { kOk = 0, kInternal = 1, kConfig = 2, kData = 3, kDivergence = 4 };

const std::vector<std::string> kPipeline{"preprocess", "build-graph", "build-mask", "train", "evaluate", "predict"};

}  // namespace

int main(int argc, char** argv) {
  using namespace xmlc::cli;
  CLI::App app{"Label-graph and auxiliary-mask multi-label text classifier"};
  app.require_subcommand(1);
  app.footer("Exit codes: 0 ok, 1 internal error, 2 config error, 3 data error, 4 numerical divergence.\n"
             "Run `xmlc keys` for every configuration key and its default.");

  std::vector<std::string> config_files, overrides;
  std::string work_dir, seed;
  bool verbose = false;
  app.add_option("-c,--config", config_files, "key=value config file; later files override earlier ones");
  app.add_option("-s,--set", overrides, "override one key, e.g. --set lr=0.001 (applied last)");
  app.add_option("--seed", seed, "seed for every stochastic stage");
  app.add_option("--work-dir", work_dir, "artifact directory (same as work_dir=)");
  app.add_flag("-v,--verbose", verbose, "per-epoch training log");

  std::vector<std::pair<std::string, CLI::App*>> subs;
  for (const auto& name : subcommands()) subs.emplace_back(name, app.add_subcommand(name, describe_subcommand(name)));
  subs.emplace_back("run-all", app.add_subcommand("run-all", "preprocess through predict in one go"));
  std::string manifest;
  CLI::App* replay_cmd = app.add_subcommand("replay", "rerun a manifest and compare its outputs byte for byte");
  replay_cmd->add_option("manifest", manifest, "manifest JSON under <work_dir>/manifests")->required();
  CLI::App* keys_cmd = app.add_subcommand("keys", "list configuration keys and defaults");
  CLI::App* show_cmd = app.add_subcommand("show-config", "print the resolved configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (keys_cmd->parsed()) {
      std::cout << describe_keys();
      return kOk;
    }
    if (replay_cmd->parsed()) {
      const auto differing = replay(manifest, verbose);
      for (const auto& p : differing) std::cerr << "xmlc replay: " << p << " differs from the recorded bytes\n";
      if (!differing.empty()) return kData;
      std::cerr << "xmlc replay: every output matches " << manifest << "\n";
      return kOk;
    }

    RunConfig cfg;
    for (const auto& f : config_files) cfg.merge_file(f);
    cfg.merge_environment();
    if (!work_dir.empty()) cfg.set("work_dir", work_dir, "--work-dir");
    if (!seed.empty()) cfg.set("seed", seed, "--seed");
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw xmlc::ConfigError("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1), "--set");
    }
    cfg.validate();
    if (show_cmd->parsed()) {
      std::cout << cfg.canonical();
      return kOk;
    }
    for (const auto& [name, sub] : subs) {
      if (!sub->parsed()) continue;
      if (name == "run-all") {
        for (const auto& step : kPipeline) run_subcommand(step, cfg, verbose);
      } else {
        run_subcommand(name, cfg, verbose);
      }
    }
    return kOk;
  } catch (const xmlc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const xmlc::ArgumentError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const xmlc::DivergenceError& e) {
    std::cerr << "numerical divergence: " << e.what() << "\n";
    return kDivergence;
  } catch (const xmlc::Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
}
