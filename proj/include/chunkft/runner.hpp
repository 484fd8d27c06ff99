// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "chunkft/config.hpp"
#include "chunkft/trainer.hpp"

namespace chunkft {

struct RunArtifacts {
  ExperimentConfig config;  // effective (defaults filled, K snapped to plan)
  ChunkPlan plan;
  TrainResult result;
  double initial_loss = 0.0;
  double peak_bytes = 0.0;
  double mean_total_bytes = 0.0;
  double jitter_value = 0.0;
  double jitter_upper_bound = 0.0;
  double measured_bp_ratio = 0.0;
  std::filesystem::path out_dir;  // empty when nothing was written
};

std::vector<std::string> preset_names();

// Built-in experiment configs; throws on unknown names listing the known ones.
ExperimentConfig make_preset(const std::string& name);

// Builds the model/plan/stream from the config, trains, and (when out_dir is
// set) writes the artifact bundle: memory_trace.csv, transfer_log.csv,
// trajectory.csv, plan.json, summary.txt, effective_config.json, and
// checkpoints/chunk_NNNN.bin. Identical config + seed produce byte-identical
// files.
RunArtifacts run_experiment(const ExperimentConfig& config);

std::string summary_text(const RunArtifacts& artifacts);

// Runs every preset with a built-in expectation and reports one line per
// check; returns the number of violations (0 = all good).
int run_preset_checks(std::ostream& os);

}  // namespace chunkft
