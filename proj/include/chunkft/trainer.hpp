// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "chunkft/accounting.hpp"
#include "chunkft/autodiff.hpp"
#include "chunkft/model.hpp"
#include "chunkft/optimizer.hpp"
#include "chunkft/partition.hpp"
#include "chunkft/schedule.hpp"

namespace chunkft {

struct TrainOptions {
  ScheduleConfig schedule;
  AdamWHyper hyper;
  OptimKind optim = OptimKind::adamw;
  int micro_batches = 1;  // forward/backward passes accumulated per step
  bool record_memory = true;
  int64_t activation_bytes = 0;
  bool instrument_flops = true;
};

struct TrainTrajectoryEntry {
  int64_t step = 0;
  int64_t chunk_epoch = 0;  // completed full rotations
  int inner_step = 0;       // t mod T
  int chunk = -1;
  double loss = 0.0;          // mean over the step's micro-batches, pre-update
  double grad_norm_sq = 0.0;  // of the active chunk's mean gradient
};

struct TrainResult {
  std::vector<TrainTrajectoryEntry> trajectory;
  MemoryTrace memory;
  std::vector<TransferEvent> transfers;
  std::vector<ChunkStates> states;  // all flushed to host tier
  BpInstrumentation bp;
  int64_t noop_loads = 0;
  double final_loss = 0.0;
};

// Runs the full rotation loop: every step does forward, chunk-masked backward,
// micro-batch accumulation, one optimizer step on the active chunk, and the
// boundary load/offload bookkeeping. Final parameters land in the model; all
// chunk states come back flushed to the host tier.
TrainResult run_training(Model& model, DataStream& data, const ChunkPlan& plan,
                         const TrainOptions& options);

void write_trajectory_csv(const std::vector<TrainTrajectoryEntry>& trajectory,
                          const std::filesystem::path& path);

namespace reference {

// Textbook dense AdamW loop: full backward, one global step counter, flat
// fp64 master/moment arrays. Kept deliberately simple as the comparison
// baseline for the chunked engine.
struct DenseResult {
  std::vector<double> losses;
  double final_loss = 0.0;
};

DenseResult dense_adamw_run(Model& model, DataStream& data, const AdamWHyper& hyper,
                            int64_t steps, int micro_batches = 1);

}  // namespace reference

}  // namespace chunkft
