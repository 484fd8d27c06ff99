// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "chunkft/model.hpp"
#include "chunkft/optimizer.hpp"
#include "chunkft/partition.hpp"
#include "chunkft/schedule.hpp"

namespace chunkft {

enum class PlanKind { byte_balanced, per_tensor };
enum class InitKind { random, formula };

struct LayerSpec {
  enum class Type { linear, embedding, layernorm, tanh_act };
  Type type = Type::linear;
  int in = 0, out = 0;     // linear
  bool bias = true;        // linear
  int vocab = 0, dim = 0;  // embedding / layernorm
  int seq = 1;             // embedding positions per sample
};

struct ModelSpec {
  std::vector<LayerSpec> layers;
  LossKind loss = LossKind::half_sq;
};

struct ExperimentConfig {
  ModelSpec model;
  DatasetSpec dataset;
  ScheduleConfig schedule;
  AdamWHyper hyper;
  OptimKind optim = OptimKind::adamw;
  CostPolicy policy;
  PlanKind plan = PlanKind::byte_balanced;
  InitKind init = InitKind::random;
  int micro_batches = 1;
  std::int64_t activation_bytes = 0;
  std::string out_dir;
  std::uint64_t seed = 7;
};

// Parses and validates a config document. Unknown keys anywhere are rejected;
// every missing field takes the documented default (T defaults to K). Errors
// name the offending field and the violated constraint.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config_file(const std::filesystem::path& path);

// Effective config with every default filled in, for echoing next to run
// artifacts.
nlohmann::json config_to_json(const ExperimentConfig& config);

// Instantiates the model described by the config and initializes parameters
// from config.seed (or the deterministic formula init). Tensor storage widths
// come from the cost policy.
Model build_model(const ExperimentConfig& config);

ChunkPlan build_plan(const Model& model, const ExperimentConfig& config);

}  // namespace chunkft
