// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <exception>
#include <functional>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"
#include "histoniche/histoniche.h"
#include "run_config.hpp"

namespace {

using histoniche::cli::RunConfig;

struct Subcommand {
  const char* name;
  const char* help;
  int (*run)(const RunConfig&);
};

const Subcommand kSubcommands[] = {
    {"synth", "generate a synthetic tissue table with planted niches", histoniche::cli::cmd_synth},
    {"calibrate", "calibrate the neighborhood radius and print it", histoniche::cli::cmd_calibrate},
    {"split", "assign cells to train/test/discard strips", histoniche::cli::cmd_split},
    {"train", "distill the teacher into the student and write a checkpoint", histoniche::cli::cmd_train},
    {"infer", "label cells with a trained student", histoniche::cli::cmd_infer},
    {"eval", "score assignments against the teacher (ARI, NMI, composition JSD)", histoniche::cli::cmd_eval},
    {"probe", "linear SVM pathology probe on niche labels", histoniche::cli::cmd_probe},
    {"render", "draw a niche map", histoniche::cli::cmd_render},
    {"pipeline", "run every stage end to end", histoniche::cli::cmd_pipeline},
};

void print_usage(const CLI::App& app) { std::fputs(app.help().c_str(), stderr); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"histoniche: distill spatial niche labels into a histology-feature student"};
  app.set_version_flag("--version", std::string(hn_version()));
  app.require_subcommand(0, 1);

  std::string config_path;
  std::map<std::string, std::string> overrides;
  std::map<const CLI::App*, const Subcommand*> by_app;
  for (const Subcommand& sc : kSubcommands) {
    CLI::App* sub = app.add_subcommand(sc.name, sc.help);
    by_app[sub] = &sc;
    sub->add_option("--config", config_path, "INI config or run manifest JSON");
    for (const auto& key : histoniche::cli::config_keys()) {
      sub->add_option("--" + std::string(key.name), overrides[key.name], key.help)->group(key.section);
    }
  }

  if (argc <= 1) {
    print_usage(app);
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "histoniche: error: %s\n", e.what());
    return 2;
  }
  const auto chosen = app.get_subcommands();
  if (chosen.empty()) {
    print_usage(app);
    return 2;
  }
  CLI::App* sub = chosen.front();

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg.load_file(config_path);
    for (const auto& key : histoniche::cli::config_keys()) {
      if (sub->count("--" + std::string(key.name)) > 0) cfg.set(key.name, overrides[key.name]);
    }
    return by_app.at(sub)->run(cfg);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "histoniche %s: error: %s\n", sub->get_name().c_str(), e.what());
    return 1;
  }
}
