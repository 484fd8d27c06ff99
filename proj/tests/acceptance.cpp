// SPDX-License-Identifier: Apache-2.0
//
// Acceptance gate: nine end-to-end checks over the chunk rotation engine.
// Prints one PASS/FAIL line per criterion and exits with the failure count.
// Every tolerance and budget is pinned as a named constant below.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "chunkft/accounting.hpp"
#include "chunkft/autodiff.hpp"
#include "chunkft/convergence.hpp"
#include "chunkft/model.hpp"
#include "chunkft/optimizer.hpp"
#include "chunkft/partition.hpp"
#include "chunkft/runner.hpp"
#include "chunkft/schedule.hpp"
#include "chunkft/trainer.hpp"

using namespace chunkft;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// ---- pinned tolerances and budgets ----
constexpr int kSliceTrials = 200;
constexpr double kSliceRelTol = 1e-10;
constexpr double kSliceBudgetSec = 60.0;
constexpr int64_t kDenseReductionSteps = 100;
constexpr double kJitterBalancedMax = 0.02;
constexpr double kJitterLopsidedMin = 0.2;
// (max - min) / midpoint for endpoint readings of 26.34 and 26.71
constexpr double kEndpointJitter = 0.013949104618284676;
constexpr double kStationaritySlack = 1e-12;  // relative, absorbs round-off
constexpr double kSlopeTol = 0.1;             // about the ideal -1
constexpr double kConvergenceBudgetSec = 120.0;
constexpr double kTrainingRelTol = 0.05;   // chunked vs dense final loss
constexpr double kTrainingLossCeiling = 0.05;  // both runs must actually fit

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string format(const char* fmt, ...) {
  char buf[512];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof buf, fmt, args);
  va_end(args);
  return std::string(buf);
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  if (a.empty()) return true;
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

uint64_t file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("acceptance: cannot open " + path.string());
  uint64_t h = 1469598103934665603ULL;
  char c;
  while (in.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

double full_data_loss(const Model& model, const std::vector<Batch>& batches) {
  double sum = 0.0;
  for (const auto& b : batches) sum += forward(model, b).loss_value();
  return sum / static_cast<double>(batches.size());
}

// ---- criterion 1: chunk-masked gradients equal dense slices ----

struct RandomCase {
  Model model;
  Batch batch;
};

// Random layer stack (well under 10^4 parameters) plus a batch matching its
// input and loss.
RandomCase random_case(std::mt19937_64& rng) {
  auto pick = [&rng](int lo, int hi) {
    return lo + static_cast<int>(rng() % static_cast<uint64_t>(hi - lo + 1));
  };
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  RandomCase rc;
  Model& m = rc.model;
  Batch& b = rc.batch;
  const int batch_size = pick(1, 5);
  int width = 0;
  if (pick(0, 3) == 0) {
    const int vocab = pick(3, 24);
    const int dim = pick(1, 6);
    const int seq = pick(1, 3);
    m.add_embedding(vocab, dim, seq);
    width = seq * dim;
    b.token_batch = batch_size;
    for (int i = 0; i < batch_size * seq; ++i) b.tokens.push_back(pick(0, vocab - 1));
  } else {
    width = pick(1, 10);
    b.x = Matrix(batch_size, width);
    for (double& v : b.x.data) v = unit(rng);
  }
  const int sections = pick(1, 3);
  for (int i = 0; i < sections; ++i) {
    if (pick(0, 2) == 0) m.add_layernorm(width);
    const int out = pick(1, 10);
    m.add_linear(width, out, pick(0, 1) == 1);
    width = out;
    if (pick(0, 1) == 1) m.add_tanh();
  }
  if (width >= 2 && pick(0, 1) == 1) {
    m.loss = LossKind::softmax_ce;
    for (int i = 0; i < batch_size; ++i) b.labels.push_back(pick(0, width - 1));
  } else {
    m.loss = pick(0, 1) == 1 ? LossKind::half_sq : LossKind::squared;
    b.target = Matrix(batch_size, width);
    for (double& v : b.target.data) v = unit(rng);
  }
  m.init_params(rng());
  return rc;
}

bool run_slice_exactness(std::string& detail) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20260822);
  double worst_rel = 0.0;
  for (int trial = 0; trial < kSliceTrials; ++trial) {
    RandomCase rc = random_case(rng);
    if (rc.model.total_parameters() > 10000) {
      detail = format("trial %d exceeds the parameter budget", trial);
      return false;
    }
    const Tape tape = forward(rc.model, rc.batch);
    const GradBag dense = tape.backward_dense();
    const std::vector<double> dense_flat = dense.flatten();

    const auto infos = rc.model.tensor_infos();
    std::vector<int64_t> offset(infos.size() + 1, 0);
    for (size_t i = 0; i < infos.size(); ++i)
      offset[i + 1] = offset[i] + infos[i].elements();

    const int max_k =
        static_cast<int>(std::min<int64_t>(12, rc.model.total_trainable_rows()));
    const int K = 1 + static_cast<int>(rng() % static_cast<uint64_t>(max_k));
    const ChunkPlan plan = partition(infos, K);

    std::vector<double> stitched(dense_flat.size(), 0.0);
    std::vector<uint8_t> seen(dense_flat.size(), 0);
    for (int k = 0; k < plan.K(); ++k) {
      const GradBag bag = tape.backward_chunked(plan.mask_of(k));
      for (const auto& entry : bag.entries()) {
        const SliceRef s = entry.slice;
        const int cols = entry.grad.cols;
        for (int r = 0; r < entry.grad.rows; ++r)
          for (int c = 0; c < cols; ++c) {
            const int64_t flat = offset[s.tensor_id] + (s.row_begin + r) * cols + c;
            const double got = entry.grad.at(r, c);
            worst_rel = std::max(worst_rel, rel_err(got, dense_flat[flat], 1e-300));
            stitched[flat] = got;
            seen[flat] = 1;
          }
      }
    }
    for (size_t i = 0; i < seen.size(); ++i)
      if (!seen[i]) {
        detail = format("trial %d left gradient elements unassembled", trial);
        return false;
      }
    if (!bits_equal(stitched, dense_flat)) {
      detail = format("trial %d reassembly differs from dense", trial);
      return false;
    }
  }
  const double sec = seconds_since(t0);
  detail = format("(%d models, worst rel %.2g, %.2f s)", kSliceTrials, worst_rel, sec);
  return worst_rel <= kSliceRelTol && sec < kSliceBudgetSec;
}

// ---- criterion 2: K=1, T=1 reproduces the dense loop bit for bit ----

Model two_layer_mlp(uint64_t seed) {
  Model m;
  m.add_linear(8, 16);
  m.add_tanh();
  m.add_linear(16, 4);
  m.loss = LossKind::half_sq;
  m.init_params(seed);
  return m;
}

bool run_dense_reduction(std::string& detail) {
  DatasetSpec spec;
  spec.generator = "regression";
  spec.size = 128;
  spec.batch = 16;
  spec.input_dim = 8;
  spec.target_dim = 4;
  spec.seed = 11;
  const std::vector<Batch> batches = make_regression_batches(spec);

  Model chunked = two_layer_mlp(11);
  const ChunkPlan plan = partition(chunked.tensor_infos(), 1);
  SyntheticStream cs(batches);
  TrainOptions opt;
  opt.schedule.K = 1;
  opt.schedule.T = 1;
  opt.schedule.total_steps = kDenseReductionSteps;
  const TrainResult res = run_training(chunked, cs, plan, opt);

  Model dense = two_layer_mlp(11);
  SyntheticStream ds(batches);
  const auto ref = reference::dense_adamw_run(dense, ds, opt.hyper, kDenseReductionSteps);

  if (res.trajectory.size() != static_cast<size_t>(kDenseReductionSteps) ||
      ref.losses.size() != static_cast<size_t>(kDenseReductionSteps)) {
    detail = "step counts differ";
    return false;
  }
  for (size_t i = 0; i < ref.losses.size(); ++i)
    if (res.trajectory[i].loss != ref.losses[i]) {
      detail = format("loss diverges at step %zu", i);
      return false;
    }
  if (res.final_loss != ref.final_loss) {
    detail = "final losses differ";
    return false;
  }
  if (!bits_equal(chunked.snapshot_params(), dense.snapshot_params())) {
    detail = "final parameters differ";
    return false;
  }
  detail = format("(%lld steps, losses and parameters bitwise equal)",
                  static_cast<long long>(kDenseReductionSteps));
  return true;
}

// ---- criterion 3: simulated peak matches the 2M + 16M/K closed form ----

bool run_memory_model(std::string& detail) {
  TensorInfo big;
  big.id = 0;
  big.name = "virtual";
  big.rows = 7'000'000;  // divisible by every K below, so the match is exact
  big.cols = 1000;
  big.storage_precision = 2;
  const std::vector<TensorInfo> infos = {big};
  const double m_elems = static_cast<double>(big.elements());

  for (int K : {1, 4, 8, 64}) {
    const ChunkPlan plan = partition(infos, K);
    ScheduleConfig sched;
    sched.K = K;
    sched.T = 1;
    sched.total_steps = 2LL * K;  // two full rotations
    const MemoryTrace trace = simulate_memory_trace(infos, plan, sched, 0);
    const double peak = static_cast<double>(trace.peak_total());
    const double predicted = 2.0 * m_elems + 16.0 * m_elems / K;
    if (peak != predicted || model_peak_bytes(big.elements(), K) != predicted) {
      detail = format("K=%d peak %.6g vs predicted %.6g", K, peak, predicted);
      return false;
    }
    if (K == 1) {
      // 18 bytes per element: 2 resident + 4 grad + 4 master + 4 + 4 moments
      const MemorySample& s = trace.samples.front();
      if (peak != 18.0 * m_elems || peak != 126e9 ||
          s.resident_param_bytes != 14'000'000'000LL ||
          s.active_state_bytes != 112'000'000'000LL) {
        detail = "K=1 byte decomposition is off";
        return false;
      }
    }
    if (K == 8 && peak != 28e9) {
      detail = format("K=8 peak %.6g vs 28e9", peak);
      return false;
    }
  }
  detail = "(7e9-element virtual tensor, K in {1,4,8,64}, exact)";
  return true;
}

// ---- criterion 4: rotation gradient work equals one dense backward ----

bool run_bp_ratio(std::string& detail) {
  DatasetSpec spec;
  spec.generator = "regression";
  spec.size = 64;
  spec.batch = 8;
  spec.input_dim = 8;
  spec.target_dim = 2;
  spec.seed = 3;
  const std::vector<Batch> batches = make_regression_batches(spec);

  Model m;
  m.add_linear(8, 32);
  m.add_tanh();
  m.add_linear(32, 2);
  m.loss = LossKind::half_sq;
  m.init_params(3);
  const ChunkPlan plan = partition(m.tensor_infos(), 4);
  SyntheticStream stream(batches);
  TrainOptions opt;
  opt.schedule.K = 4;
  opt.schedule.T = 1;
  opt.schedule.total_steps = 8;  // two full rotations
  const TrainResult res = run_training(m, stream, plan, opt);

  const double ratio = measured_bp_cost(res.bp);
  if (ratio != 1.0 ||
      res.bp.chunked_macs != res.bp.rotations * res.bp.dense_macs_per_step) {
    detail = format("measured ratio %.17g", ratio);
    return false;
  }
  const double suffix = suffix_cycle_cost({1.0, 1.0, 1.0, 1.0});
  if (suffix != 2.5) {
    detail = format("uniform 4-layer suffix cost %.17g vs 2.5", suffix);
    return false;
  }
  detail = "(ratio 1 exactly; uniform 4-layer suffix cost 2.5)";
  return true;
}

// ---- criterion 5: byte balance bounds memory jitter ----

bool run_jitter_contrast(std::string& detail) {
  ExperimentConfig balanced = make_preset("mlp-imbalanced-layers");
  balanced.out_dir.clear();
  const RunArtifacts rb = run_experiment(balanced);

  ExperimentConfig lopsided = make_preset("mlp-imbalanced-layers-identity");
  lopsided.out_dir.clear();
  const RunArtifacts rl = run_experiment(lopsided);

  const double endpoint = jitter_from_endpoints(26.34, 26.71);
  detail = format("(balanced %.4f, per-tensor %.3f, endpoint ratio %.6f)",
                  rb.jitter_value, rl.jitter_value, endpoint);
  return rb.jitter_value > 0.0 && rb.jitter_value <= kJitterBalancedMax &&
         rl.jitter_value >= kJitterLopsidedMin && endpoint == kEndpointJitter &&
         std::fabs(endpoint - 0.014) < 1e-4;
}

// ---- criterion 6: descent, stationarity, and rate checks ----

bool run_convergence(std::string& detail) {
  using namespace lab;
  const auto t0 = Clock::now();

  // per-step descent and the averaged bound at eta = 1 / max block L
  {
    DiagQuadratic quad({1.0, 4.0}, {2.0, -1.5});
    const auto blocks = even_blocks(2, 2);
    const auto lip = estimate_block_lipschitz(quad, blocks);
    const double eta = 1.0 / lip.max_value;
    const Trajectory traj = block_gradient_chunkft(quad, blocks, 3, 6, eta);
    const DescentReport rep = check_descent(traj, lip.max_value);
    if (!rep.checked || rep.violations != 0) {
      detail = "quadratic descent check failed";
      return false;
    }
    const StationarityBound sb = stationarity_bound(traj, quad);
    if (sb.lhs > sb.rhs * (1.0 + kStationaritySlack)) {
      detail = "quadratic stationarity bound failed";
      return false;
    }
  }
  {
    LogisticProblem logi(8, 20, 3);
    const auto blocks = even_blocks(8, 4);
    const auto lip = estimate_block_lipschitz(logi, blocks);
    const double eta = 1.0 / lip.max_value;
    const Trajectory traj = block_gradient_chunkft(logi, blocks, 2, 40, eta);
    const DescentReport rep = check_descent(traj, lip.max_value);
    if (!rep.checked || rep.violations != 0) {
      detail = "logistic descent check failed";
      return false;
    }
    const StationarityBound sb = stationarity_bound(traj, logi);
    if (sb.lhs > sb.rhs * (1.0 + kStationaritySlack)) {
      detail = "logistic stationarity bound failed";
      return false;
    }
  }

  // hand-checked equality case: unit quadratic, one rotation at eta 1
  {
    IdentityQuadratic ident({1.0, 1.0});
    const Trajectory traj = block_gradient_chunkft(ident, even_blocks(2, 2), 1, 1, 1.0);
    const StationarityBound sb = stationarity_bound(traj, ident);
    if (sb.lhs != 1.0 || sb.rhs != 1.0) {
      detail = format("equality case lhs %.17g rhs %.17g", sb.lhs, sb.rhs);
      return false;
    }
  }

  // rate: average squared active-block gradient falls like 1 / total steps
  double slope = 0.0;
  {
    RandomPdQuadratic quad(16, 9, 0.5);
    const auto blocks = even_blocks(16, 4);
    std::vector<double> xs, ys;
    for (int rotations : {64, 128, 256, 512}) {
      const Trajectory traj = block_gradient_chunkft(quad, blocks, 2, rotations, 0.05);
      const StationarityBound sb = stationarity_bound(traj, quad);
      xs.push_back(static_cast<double>(rotations) * static_cast<double>(blocks.size()) * 2.0);
      ys.push_back(sb.lhs);
    }
    slope = log_log_slope(xs, ys);
    if (std::fabs(slope - (-1.0)) > kSlopeTol) {
      detail = format("rate slope %.3f outside -1 +/- %.1f", slope, kSlopeTol);
      return false;
    }
  }

  const double sec = seconds_since(t0);
  detail = format("(rate slope %.3f, %.2f s)", slope, sec);
  return sec < kConvergenceBudgetSec;
}

// ---- criterion 7: optimizer state survives the host round trip ----

Model continuity_model(uint64_t seed) {
  Model m;
  m.add_linear(6, 10);
  m.add_tanh();
  m.add_linear(10, 3);
  m.loss = LossKind::half_sq;
  m.init_params(seed);
  return m;
}

bool run_state_continuity(std::string& detail) {
  Model a = continuity_model(5);
  Model b = continuity_model(5);
  const ChunkPlan plan = partition(a.tensor_infos(), 3);
  const int chunk = 1;
  ChunkStates sa = init_chunk_states(plan, chunk, a);
  ChunkStates sb = init_chunk_states(plan, chunk, b);
  load_to_device(sa);
  load_to_device(sb);

  AdamWHyper hyper;
  hyper.eta = 0.01;
  hyper.weight_decay = 0.02;
  std::vector<double> g1(sa.elements), g2(sa.elements);
  for (int64_t i = 0; i < sa.elements; ++i) {
    g1[i] = std::sin(0.3 * static_cast<double>(i) + 0.1);
    g2[i] = std::cos(0.2 * static_cast<double>(i) - 0.4);
  }
  adamw_chunk_step(sa, g1, hyper, plan, a);
  adamw_chunk_step(sb, g1, hyper, plan, b);

  // a does a full host round trip; b stays on the device tier
  offload_to_host(sa);
  const std::vector<uint8_t> blob = sa.host_blob;
  load_to_device(sa);
  if (sa.n != sb.n || !bits_equal(sa.master, sb.master) || !bits_equal(sa.m, sb.m) ||
      !bits_equal(sa.v, sb.v)) {
    detail = "state differs after the round trip";
    return false;
  }
  offload_to_host(sa);
  if (sa.host_blob != blob) {
    detail = "serialized bytes changed across round trips";
    return false;
  }
  load_to_device(sa);

  adamw_chunk_step(sa, g2, hyper, plan, a);
  adamw_chunk_step(sb, g2, hyper, plan, b);
  if (sa.n != sb.n || !bits_equal(sa.master, sb.master) || !bits_equal(sa.m, sb.m) ||
      !bits_equal(sa.v, sb.v) || !bits_equal(a.snapshot_params(), b.snapshot_params())) {
    detail = "post-reload step differs from the uninterrupted one";
    return false;
  }
  detail = "(round trip and follow-up step bitwise equal)";
  return true;
}

// ---- criterion 8: prefetch leaves results untouched ----

bool run_prefetch_transparency(std::string& detail) {
  const fs::path base = fs::temp_directory_path() / "chunkft_acceptance";
  std::error_code ec;
  fs::remove_all(base, ec);
  int checked = 0;
  for (const std::string& name : preset_names()) {
    ExperimentConfig off_cfg = make_preset(name);
    off_cfg.schedule.prefetch = false;
    off_cfg.out_dir = (base / (name + "-off")).string();
    ExperimentConfig on_cfg = make_preset(name);
    on_cfg.schedule.prefetch = true;
    on_cfg.out_dir = (base / (name + "-on")).string();

    const RunArtifacts off_run = run_experiment(off_cfg);
    const RunArtifacts on_run = run_experiment(on_cfg);
    const fs::path off_ck = off_run.out_dir / "checkpoints";
    const fs::path on_ck = on_run.out_dir / "checkpoints";
    std::set<std::string> off_names, on_names;
    for (const auto& e : fs::directory_iterator(off_ck))
      off_names.insert(e.path().filename().string());
    for (const auto& e : fs::directory_iterator(on_ck))
      on_names.insert(e.path().filename().string());
    if (off_names.empty() || off_names != on_names) {
      detail = format("preset %s: checkpoint sets differ", name.c_str());
      return false;
    }
    for (const auto& f : off_names)
      if (file_digest(off_ck / f) != file_digest(on_ck / f)) {
        detail = format("preset %s: %s differs", name.c_str(), f.c_str());
        return false;
      }
    if (off_run.result.final_loss != on_run.result.final_loss) {
      detail = format("preset %s: final losses differ", name.c_str());
      return false;
    }
    ++checked;
  }
  fs::remove_all(base, ec);
  detail = format("(%d presets, checkpoints byte-identical)", checked);
  return checked > 0;
}

// ---- criterion 9: chunked training matches dense quality ----

bool run_training_sanity(std::string& detail) {
  DatasetSpec spec;
  spec.generator = "classification";
  spec.size = 1024;
  spec.batch = 32;
  spec.input_dim = 8;
  spec.classes = 2;
  spec.seed = 7;
  const std::vector<Batch> batches = make_classification_batches(spec);

  auto make_mlp = [] {
    Model m;
    m.add_linear(8, 32);
    m.add_tanh();
    m.add_linear(32, 2);
    m.loss = LossKind::softmax_ce;
    m.init_params(7);
    return m;
  };

  AdamWHyper hyper;
  hyper.eta = 5e-3;
  const int cycles = 10;  // both runs give every parameter T * cycles updates

  Model chunked = make_mlp();
  const ChunkPlan plan = partition(chunked.tensor_infos(), 8);
  SyntheticStream cs(batches);
  TrainOptions opt;
  opt.schedule.K = 8;
  opt.schedule.T = 8;
  opt.schedule.total_steps = 64LL * cycles;
  opt.hyper = hyper;
  run_training(chunked, cs, plan, opt);

  Model dense = make_mlp();
  SyntheticStream ds(batches);
  reference::dense_adamw_run(dense, ds, hyper, 8LL * cycles);

  const double lc = full_data_loss(chunked, batches);
  const double ld = full_data_loss(dense, batches);
  const double rel = std::fabs(lc - ld) / ld;
  detail = format("(chunked %.5f vs dense %.5f, rel %.4f, tol %.2f)", lc, ld, rel,
                  kTrainingRelTol);
  return rel <= kTrainingRelTol && lc < kTrainingLossCeiling && ld < kTrainingLossCeiling;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* title;
    bool (*run)(std::string&);
  };
  const Criterion table[] = {
      {1, "chunk-masked gradients equal dense slices", run_slice_exactness},
      {2, "K=1,T=1 reproduces the dense loop bit for bit", run_dense_reduction},
      {3, "simulated peak matches 2M + 16M/K", run_memory_model},
      {4, "rotation gradient work equals one dense backward", run_bp_ratio},
      {5, "byte balance bounds memory jitter", run_jitter_contrast},
      {6, "descent, stationarity, and rate checks", run_convergence},
      {7, "optimizer state survives the host round trip", run_state_continuity},
      {8, "prefetch leaves results untouched", run_prefetch_transparency},
      {9, "chunked training matches dense quality", run_training_sanity},
  };

  int failures = 0;
  for (const auto& c : table) {
    std::string detail;
    bool pass = false;
    try {
      pass = c.run(detail);
    } catch (const std::exception& e) {
      detail = format("exception: %s", e.what());
    }
    std::printf("[%d] %-50s %s %s\n", c.id, c.title, pass ? "PASS" : "FAIL",
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
  }
  if (failures == 0)
    std::printf("all 9 acceptance criteria passed\n");
  else
    std::printf("%d of 9 acceptance criteria failed\n", failures);
  return failures;
}
