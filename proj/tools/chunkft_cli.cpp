// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "chunkft/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"chunkft: rotating chunk-local fine-tuning experiments"};

  std::string config_path;
  std::string preset;
  std::string out_dir;
  long long seed = -1;
  bool check = false;
  bool list_presets = false;

  app.add_option("--config", config_path, "experiment config file (JSON)");
  app.add_option("--preset", preset, "built-in experiment preset");
  app.add_option("--out", out_dir, "output directory (fallback: CHUNKFT_OUT_DIR)");
  app.add_option("--seed", seed, "override the config seed");
  app.add_flag("--check", check, "run all preset expectations, exit nonzero on violation");
  app.add_flag("--list-presets", list_presets, "print preset names and exit");

  CLI11_PARSE(app, argc, argv);

  try {
    if (list_presets) {
      for (const auto& name : chunkft::preset_names()) std::cout << name << '\n';
      return 0;
    }
    if (check) {
      const int failures = chunkft::run_preset_checks(std::cout);
      if (failures > 0) {
        std::cout << failures << " check(s) failed\n";
        return 1;
      }
      std::cout << "all checks passed\n";
      return 0;
    }

    if (config_path.empty() == preset.empty()) {
      std::cerr << "need exactly one of --config or --preset (see --help)\n";
      return 2;
    }
    chunkft::ExperimentConfig cfg = config_path.empty()
                                        ? chunkft::make_preset(preset)
                                        : chunkft::load_config_file(config_path);
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    if (!out_dir.empty()) {
      cfg.out_dir = out_dir;
    } else if (cfg.out_dir.empty()) {
      if (const char* env = std::getenv("CHUNKFT_OUT_DIR")) cfg.out_dir = env;
    }

    const chunkft::RunArtifacts art = chunkft::run_experiment(cfg);
    std::cout << chunkft::summary_text(art);
    if (!art.out_dir.empty()) std::cout << "artifacts written to " << art.out_dir.string() << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
