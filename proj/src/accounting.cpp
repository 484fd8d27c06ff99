// SPDX-License-Identifier: Apache-2.0

#include "chunkft/accounting.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "chunkft/csvio.hpp"

namespace chunkft {

void MemoryTrace::append(MemorySample s) {
  if (!samples.empty() && samples.back().step >= s.step)
    throw Error("memory trace steps must be strictly increasing");
  if (s.resident_param_bytes < 0 || s.active_state_bytes < 0 || s.activation_bytes < 0 ||
      s.transfer_buffer_bytes < 0)
    throw Error("memory sample categories must be non-negative");
  samples.push_back(s);
}

int64_t MemoryTrace::peak_total() const {
  if (samples.empty()) throw Error("empty memory trace");
  int64_t peak = samples.front().total();
  for (const auto& s : samples) peak = std::max(peak, s.total());
  return peak;
}

int64_t MemoryTrace::min_total() const {
  if (samples.empty()) throw Error("empty memory trace");
  int64_t low = samples.front().total();
  for (const auto& s : samples) low = std::min(low, s.total());
  return low;
}

double MemoryTrace::mean_total() const {
  if (samples.empty()) throw Error("empty memory trace");
  double acc = 0.0;
  for (const auto& s : samples) acc += static_cast<double>(s.total());
  return acc / static_cast<double>(samples.size());
}

double jitter(const MemoryTrace& trace) {
  const double mean = trace.mean_total();
  if (mean <= 0.0) throw Error("jitter: non-positive mean");
  return (static_cast<double>(trace.peak_total()) - static_cast<double>(trace.min_total())) / mean;
}

double jitter_from_endpoints(double min_bytes, double max_bytes) {
  if (min_bytes <= 0.0 || max_bytes < min_bytes) throw Error("jitter: bad endpoints");
  const double mean = 0.5 * (min_bytes + max_bytes);
  return (max_bytes - min_bytes) / mean;
}

int64_t plan_imbalance_bytes(const ChunkPlan& plan) {
  if (plan.chunks.empty()) throw Error("empty plan");
  const double mean = static_cast<double>(plan.total_mutable_bytes) / plan.K();
  double worst = 0.0;
  for (const auto& ch : plan.chunks)
    worst = std::max(worst, std::fabs(static_cast<double>(ch.byte_cost) - mean));
  return static_cast<int64_t>(std::ceil(worst));
}

double jitter_bound(const ChunkPlan& plan, double mean_total_bytes) {
  if (mean_total_bytes <= 0.0) throw Error("jitter bound: non-positive mean");
  return 2.0 * static_cast<double>(plan_imbalance_bytes(plan)) / mean_total_bytes;
}

double model_peak_bytes(int64_t m_elements, int K, const CostPolicy& policy) {
  if (m_elements < 1) throw Error("model_peak_bytes: M must be at least 1");
  if (K < 1) throw Error("model_peak_bytes: K must be at least 1");
  policy.validate();
  const double m = static_cast<double>(m_elements);
  return m * policy.param_bytes + m * policy.mutable_bytes_per_element() / K;
}

int64_t activation_model_bytes(int batch, int width, int layers) {
  if (batch < 0 || width < 0 || layers < 0) throw Error("activation model: negative argument");
  return static_cast<int64_t>(batch) * width * layers * 4;
}

CostReport analytic_bp_cost(Method method, int K, std::optional<int> lora_rank,
                            std::optional<int> dim) {
  if (K < 1) throw Error("analytic_bp_cost: K must be at least 1");
  CostReport r;
  switch (method) {
    case Method::adam:
      r.method = "Adam";
      r.normalized_cost = 1.0;
      break;
    case Method::lomo:
      r.method = "LOMO";
      r.normalized_cost = 1.0;
      break;
    case Method::chunkft:
      r.method = "ChunkFT";
      r.normalized_cost = 1.0;
      break;
    case Method::lora:
      if (!lora_rank || !dim) throw Error("analytic_bp_cost: LoRA needs rank and dim");
      if (*dim <= 0 || *lora_rank <= 0) throw Error("analytic_bp_cost: rank and dim must be positive");
      r.method = "LoRA";
      r.normalized_cost = static_cast<double>(*lora_rank) / *dim;
      break;
    case Method::badam:
    case Method::hift:
      r.method = method == Method::badam ? "BAdam" : "HiFT";
      r.normalized_cost = (static_cast<double>(K) + 1.0) / 2.0;
      break;
  }
  return r;
}

double suffix_cycle_cost(const std::vector<double>& block_costs) {
  if (block_costs.empty()) throw Error("suffix_cycle_cost: no blocks");
  double total = 0.0;
  for (double c : block_costs) {
    if (c <= 0.0) throw Error("suffix_cycle_cost: block costs must be positive");
    total += c;
  }
  double cycle = 0.0;
  double suffix = total;
  for (double c : block_costs) {
    cycle += suffix;
    suffix -= c;
  }
  return cycle / total;
}

double measured_bp_cost(const BpInstrumentation& bp) {
  if (bp.rotations < 1) throw Error("measured_bp_cost: no completed rotations");
  if (bp.dense_macs_per_step < 1) throw Error("measured_bp_cost: dense reference count missing");
  const double denom = static_cast<double>(bp.rotations) * bp.T *
                       static_cast<double>(bp.dense_macs_per_step);
  return static_cast<double>(bp.chunked_macs) / denom;
}

MemorySample sample_memory(int64_t step, RotationScheduler& sched, const ChunkPlan& plan,
                           const std::vector<TensorInfo>& infos, int64_t activation_bytes) {
  MemorySample s;
  s.step = step;
  for (const auto& info : infos)
    s.resident_param_bytes += info.elements() * info.storage_precision;
  s.active_state_bytes = sched.device_state_bytes();
  const int active = sched.active_chunk();
  if (active >= 0 && sched.is_resident(active))
    s.active_state_bytes += plan.chunk_elements(active) * plan.policy.grad_bytes;
  s.activation_bytes = activation_bytes;
  s.transfer_buffer_bytes = sched.transfer_inflight_bytes(step);
  return s;
}

MemoryTrace simulate_memory_trace(const std::vector<TensorInfo>& infos,
                                  const ChunkPlan& plan, ScheduleConfig schedule,
                                  int64_t activation_bytes) {
  RotationScheduler sched(schedule, &plan, nullptr);
  MemoryTrace trace;
  for (int64_t t = 0; t < schedule.total_steps; ++t) {
    sched.step_begin();
    trace.append(sample_memory(t, sched, plan, infos, activation_bytes));
    sched.step_end();
  }
  sched.finish();
  return trace;
}

void write_memory_trace_csv(const MemoryTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << "step,resident_param_bytes,active_state_bytes,activation_bytes,"
         "transfer_buffer_bytes,total\n";
  for (const auto& s : trace.samples) {
    out << s.step << ',' << s.resident_param_bytes << ',' << s.active_state_bytes << ','
        << s.activation_bytes << ',' << s.transfer_buffer_bytes << ',' << s.total() << '\n';
  }
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

std::string cost_report_text(const std::vector<CostReport>& reports) {
  std::ostringstream ss;
  ss << "gradient-generation cost per full-parameter cycle\n";
  for (const auto& r : reports)
    ss << "  " << r.method << ": " << format_double(r.normalized_cost) << "\n";
  return ss.str();
}

}  // namespace chunkft
