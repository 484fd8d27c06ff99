// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "chunkft/autodiff.hpp"
#include "chunkft/model.hpp"
#include "chunkft/partition.hpp"

namespace chunkft {

struct AdamWHyper {
  double eta = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  void validate() const;
};

enum class Tier { host, device };

// Full optimizer state for one chunk. While on the device tier the arrays are
// live and mutable; on the host tier they exist only as a serialized blob.
// The update counter n is local to the chunk: bias correction sees only the
// steps this chunk actually took.
struct ChunkStates {
  int chunk_index = -1;
  uint64_t n = 0;
  Tier tier = Tier::host;
  int64_t elements = 0;

  std::vector<double> master;  // flattened slices in plan order
  std::vector<double> m;
  std::vector<double> v;
  std::vector<uint8_t> host_blob;

  std::vector<double> accum;  // pending micro-batch gradient sum
  int accum_count = 0;

  // Range of the adaptive per-element step scale 1/(sqrt(vhat)+eps) observed
  // in the most recent update.
  double last_precond_min = 0.0;
  double last_precond_max = 0.0;
};

// Masters copy the tensor values current at call time; moments start at zero;
// the result is left on the host tier.
ChunkStates init_chunk_states(const ChunkPlan& plan, int chunk_index,
                              const Model& model);

std::vector<ChunkStates> init_all_chunk_states(const ChunkPlan& plan, const Model& model);

// Serializes {n, master, m, v} into the host blob and drops the device
// arrays. Throws if gradient accumulation is still pending. Round trip
// through the two tiers is bit-identical.
void offload_to_host(ChunkStates& states);
void load_to_device(ChunkStates& states);

// Copies the chunk's master values back into the model tensors.
void write_back(const ChunkStates& states, const ChunkPlan& plan, Model& model);

// Adds the bag's gradients (which must cover exactly this chunk's slices)
// into the accumulator. Mean over micro-batches is taken by take_mean_grad.
void accumulate_grad(ChunkStates& states, const ChunkPlan& plan, const GradBag& bag);
std::vector<double> take_mean_grad(ChunkStates& states);
void clear_accum(ChunkStates& states);

// One decoupled-weight-decay Adam update on the chunk, using the chunk-local
// counter for bias correction, then master -> tensors write-back.
void adamw_chunk_step(ChunkStates& states, const std::vector<double>& grad,
                      const AdamWHyper& hyper, const ChunkPlan& plan, Model& model);

// Plain gradient descent on the chunk (no moments), same residency and
// write-back contract.
void sgd_chunk_step(ChunkStates& states, const std::vector<double>& grad, double eta,
                    const ChunkPlan& plan, Model& model);

enum class OptimKind { adamw, plain };

// Update rule applied when a chunk's accumulated gradient is ready.
class ChunkStepper {
 public:
  virtual ~ChunkStepper() = default;
  virtual void step(ChunkStates& states, const std::vector<double>& grad) = 0;
};

class AdamWStepper : public ChunkStepper {
 public:
  AdamWStepper(AdamWHyper hyper, const ChunkPlan* plan, Model* model)
      : hyper_(hyper), plan_(plan), model_(model) {}
  void step(ChunkStates& states, const std::vector<double>& grad) override {
    adamw_chunk_step(states, grad, hyper_, *plan_, *model_);
  }

 private:
  AdamWHyper hyper_;
  const ChunkPlan* plan_;
  Model* model_;
};

class PlainGradStepper : public ChunkStepper {
 public:
  PlainGradStepper(double eta, const ChunkPlan* plan, Model* model)
      : eta_(eta), plan_(plan), model_(model) {}
  void step(ChunkStates& states, const std::vector<double>& grad) override {
    sgd_chunk_step(states, grad, eta_, *plan_, *model_);
  }

 private:
  double eta_;
  const ChunkPlan* plan_;
  Model* model_;
};

// Checkpoint: one little-endian binary file per chunk holding the plan hash,
// the chunk-local counter, and the full-precision master/m/v arrays. Layout
// is documented in FORMATS.md. Requires the host tier (flush first).
void write_chunk_checkpoint(const ChunkStates& states, uint64_t plan_hash,
                            const std::filesystem::path& path);
ChunkStates read_chunk_checkpoint(const std::filesystem::path& path,
                                  uint64_t expected_plan_hash);

}  // namespace chunkft
