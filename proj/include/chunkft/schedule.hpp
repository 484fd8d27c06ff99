// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <deque>
#include <vector>

#include "chunkft/optimizer.hpp"
#include "chunkft/partition.hpp"

namespace chunkft {

struct ScheduleConfig {
  int K = 1;
  int T = 1;  // steps per active chunk
  int64_t total_steps = 0;
  bool prefetch = false;
  // Bytes moved per simulated step; 0 means transfers complete instantly.
  // A transfer of B bytes takes ceil(B / bandwidth) whole steps, bookkeeping
  // only: simulated compute never blocks on it.
  int64_t bandwidth_bytes_per_step = 0;
  void validate() const;
};

struct TransferEvent {
  int64_t step = 0;  // issue step
  int chunk = -1;
  enum class Dir { load, offload } dir = Dir::load;
  int64_t bytes = 0;
  int64_t latency_steps = 0;
};

// Drives chunk rotation: active chunk = I mod K, loads at t mod T == 0,
// offloads at t mod T == T-1, I increments when the offload is issued.
// Physical state movement happens synchronously at the boundaries, so results
// are identical with or without prefetch; prefetch and bandwidth shape only
// the transfer log and the in-flight byte windows the memory trace samples.
class RotationScheduler {
 public:
  // states may be null for accounting-only dry runs over TensorInfo shapes.
  RotationScheduler(ScheduleConfig config, const ChunkPlan* plan,
                    std::vector<ChunkStates>* states);

  // Makes the active chunk resident (loading it if needed), issues any
  // prefetch, and returns the active chunk index.
  int step_begin();
  // Issues the boundary offload and advances the step counter.
  void step_end();
  // Flushes every chunk still on the device tier to host.
  void finish();

  int64_t current_step() const { return t_; }
  int64_t active_index_counter() const { return I_; }
  int active_chunk() const { return active_; }
  bool is_resident(int chunk) const;
  std::vector<int> resident_chunks() const;

  // Sum of device-tier state bytes (master + moments at accounting width)
  // over all resident chunks.
  int64_t device_state_bytes() const { return device_state_bytes_; }
  // Bytes of async transfers whose window covers the given step.
  int64_t transfer_inflight_bytes(int64_t step);

  const std::vector<TransferEvent>& events() const { return events_; }
  int64_t noop_loads() const { return noop_loads_; }

 private:
  struct Window {
    int64_t begin = 0;
    int64_t end = 0;
    int64_t bytes = 0;
  };

  int64_t state_bytes_of(int chunk) const;
  int64_t latency_of(int64_t bytes) const;
  void physical_load(int chunk);
  void physical_offload(int chunk);
  bool chunk_on_device(int chunk) const;

  ScheduleConfig config_;
  const ChunkPlan* plan_;
  std::vector<ChunkStates>* states_;
  std::vector<bool> virtual_device_;  // tier tracking for the dry-run mode

  int64_t I_ = 0;
  int64_t t_ = 0;
  int active_ = -1;
  int64_t device_state_bytes_ = 0;
  int64_t noop_loads_ = 0;
  int pending_prefetch_chunk_ = -1;

  std::vector<TransferEvent> events_;
  std::deque<Window> windows_;
};

void write_transfer_log_csv(const std::vector<TransferEvent>& events,
                            const std::filesystem::path& path);

}  // namespace chunkft
