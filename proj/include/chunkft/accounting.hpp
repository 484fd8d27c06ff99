// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "chunkft/partition.hpp"
#include "chunkft/schedule.hpp"

namespace chunkft {

struct MemorySample {
  int64_t step = 0;
  int64_t resident_param_bytes = 0;  // forward weights at storage precision
  int64_t active_state_bytes = 0;    // device master/moments + active-chunk grad
  int64_t activation_bytes = 0;
  int64_t transfer_buffer_bytes = 0;
  int64_t total() const {
    return resident_param_bytes + active_state_bytes + activation_bytes +
           transfer_buffer_bytes;
  }
};

struct MemoryTrace {
  std::vector<MemorySample> samples;
  void append(MemorySample s);
  int64_t peak_total() const;
  int64_t min_total() const;
  double mean_total() const;
};

// (max - min) / mean over per-step totals.
double jitter(const MemoryTrace& trace);

// Convenience for evaluating the ratio from reported endpoint readings, with
// mean approximated by the midpoint.
double jitter_from_endpoints(double min_bytes, double max_bytes);

// 2 * eps_B / mean_total, where eps_B is the plan's worst per-chunk byte-cost
// deviation from the ideal mean. Measured jitter of a run never exceeds this
// when the only step-to-step variation is which chunk is active.
double jitter_bound(const ChunkPlan& plan, double mean_total_bytes);
int64_t plan_imbalance_bytes(const ChunkPlan& plan);  // eps_B

// Peak bytes predicted by the residency model: M * param_bytes for the
// resident copy plus M * (grad+master+m1+m2) / K for the largest mutable
// share, evaluated with exact fractions. Defaults give 2M + 16M/K.
double model_peak_bytes(int64_t m_elements, int K, const CostPolicy& policy = {});

// Fixed synthetic activation model: batch * width * layers * 4 bytes,
// constant per step.
int64_t activation_model_bytes(int batch, int width, int layers);

// ---- gradient-generation cost per full-parameter cycle ----

enum class Method { adam, lomo, lora, badam, hift, chunkft };

struct CostReport {
  std::string method;
  double normalized_cost = 0.0;
};

CostReport analytic_bp_cost(Method method, int K, std::optional<int> lora_rank = {},
                            std::optional<int> dim = {});

// Layer-wise suffix propagation: updating block k requires backward through
// blocks k..K, so one cycle costs sum_k suffix(k), normalized by the dense
// cost sum_k C_k. Uniform costs give (K+1)/2.
double suffix_cycle_cost(const std::vector<double>& block_costs);

struct BpInstrumentation {
  int64_t chunked_macs = 0;          // over completed rotations only
  int64_t dense_macs_per_step = 0;   // analytic, fixed batch shape
  int64_t rotations = 0;
  int K = 1;
  int T = 1;
};

// Parameter-gradient work per full-parameter update cycle, normalized so a
// dense run measures exactly 1. One rotation performs T updates of every
// parameter, hence the T in the denominator; at T=1 this is literally
// (rotation MACs) / (one dense backward's MACs).
double measured_bp_cost(const BpInstrumentation& bp);

// ---- trace construction ----

// Builds the sample for the current step of a running scheduler. Categories:
// all parameters at storage precision; device-resident master/moment bytes
// plus the active chunk's gradient buffer; the fixed activation model; bytes
// of async transfers in flight this step.
MemorySample sample_memory(int64_t step, RotationScheduler& sched, const ChunkPlan& plan,
                           const std::vector<TensorInfo>& infos, int64_t activation_bytes);

// Dry-runs the rotation schedule over shape metadata only (no parameter or
// state allocation), producing the full memory trace. Usable for models far
// beyond physical memory.
MemoryTrace simulate_memory_trace(const std::vector<TensorInfo>& infos,
                                  const ChunkPlan& plan, ScheduleConfig schedule,
                                  int64_t activation_bytes);

void write_memory_trace_csv(const MemoryTrace& trace, const std::filesystem::path& path);
std::string cost_report_text(const std::vector<CostReport>& reports);

}  // namespace chunkft
