// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chunkft/tensor.hpp"

namespace chunkft {

// Bytes per element for each array class. Parameter storage may be half or
// single width; gradients, master weights, and both moment arrays are kept at
// single width. Everything here is bookkeeping: engine math always runs in
// double regardless of these widths.
struct CostPolicy {
  int param_bytes = 2;
  int grad_bytes = 4;
  int master_bytes = 4;
  int moment1_bytes = 4;
  int moment2_bytes = 4;

  int mutable_bytes_per_element() const {
    return grad_bytes + master_bytes + moment1_bytes + moment2_bytes;
  }
  int state_bytes_per_element() const {  // moved on load/offload: master + moments
    return master_bytes + moment1_bytes + moment2_bytes;
  }
  void validate() const;
};

struct ByteCost {
  int64_t mutable_bytes = 0;   // grad + master + m1 + m2
  int64_t resident_bytes = 0;  // forward copy at storage precision
};

ByteCost estimate_byte_cost(const TensorInfo& info, const CostPolicy& policy);

// Row-granular assignment of every trainable row to exactly one chunk.
struct ChunkPlan {
  struct ChunkEntry {
    std::vector<SliceRef> slices;  // registration order, contiguous row ranges
    int64_t byte_cost = 0;         // mutable bytes
    int64_t elements = 0;
  };

  std::vector<ChunkEntry> chunks;
  int64_t total_mutable_bytes = 0;
  int64_t max_row_cost = 0;  // heaviest single row across all tensors
  CostPolicy policy;

  int K() const { return static_cast<int>(chunks.size()); }
  ActiveMask mask_of(int chunk) const;
  int64_t chunk_elements(int chunk) const { return chunks.at(chunk).elements; }

  // Exact cover: every trainable row in exactly one chunk, all chunks
  // non-empty, slices in registration order. Throws on violation.
  void validate(const std::vector<TensorInfo>& infos) const;
};

// Splits the trainable parameters (walked in registration order, rows in
// order) into exactly K chunks with near-equal mutable byte cost. Greedy over
// cumulative cost targets: chunk c ends at the first row where the running
// cost reaches (c+1)/K of the total, so each chunk's cost deviates from the
// ideal mean by at most one row's cost. Deterministic.
ChunkPlan partition(const std::vector<TensorInfo>& infos, int K,
                    const CostPolicy& policy = {});

// K = ceil(total mutable bytes / budget).
ChunkPlan partition_by_budget(const std::vector<TensorInfo>& infos, int64_t budget_bytes,
                              const CostPolicy& policy = {});

// One chunk per trainable tensor, registration order. Deliberately ignores
// byte balance; used as the imbalanced contrast case.
ChunkPlan partition_per_tensor(const std::vector<TensorInfo>& infos,
                               const CostPolicy& policy = {});

std::string plan_to_json(const ChunkPlan& plan, const std::vector<TensorInfo>& infos);
ChunkPlan plan_from_json(const std::string& text, const std::vector<TensorInfo>& infos);

// Stable digest over the chunk/slice structure (not the policy), used to pair
// checkpoints with the plan that produced them.
uint64_t plan_hash(const ChunkPlan& plan);

}  // namespace chunkft
