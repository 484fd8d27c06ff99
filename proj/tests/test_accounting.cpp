// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "chunkft/accounting.hpp"

using namespace chunkft;

namespace {

// Frozen endpoint evaluations from tests/oracles/mlp_forward_oracle.py.
constexpr double kJitterNarrow = 0.013949104618284676;  // (26.34, 26.71)
constexpr double kJitterWide = 0.44170380350295352;     // (37.59, 58.90)

TensorInfo make_info(int id, int64_t rows, int64_t cols, int precision = 2) {
  TensorInfo t;
  t.id = id;
  t.name = "t" + std::to_string(id);
  t.rows = rows;
  t.cols = cols;
  t.storage_precision = precision;
  t.reg_order = id;
  return t;
}

MemoryTrace constant_trace(std::initializer_list<int64_t> totals) {
  MemoryTrace trace;
  int64_t step = 0;
  for (int64_t v : totals) {
    MemorySample s;
    s.step = step++;
    s.resident_param_bytes = v;
    trace.append(s);
  }
  return trace;
}

}  // namespace

TEST_CASE("flat traces have zero jitter") {
  CHECK(jitter(constant_trace({10, 10, 10})) == 0.0);
}

TEST_CASE("jitter of reported endpoint pairs") {
  CHECK(jitter_from_endpoints(26.34, 26.71) == kJitterNarrow);
  CHECK(jitter_from_endpoints(37.59, 58.90) == kJitterWide);
  CHECK(kJitterNarrow < 0.02);
  CHECK(kJitterWide > 0.2);
  CHECK_THROWS_AS(jitter_from_endpoints(5.0, 4.0), Error);
  CHECK_THROWS_AS(jitter_from_endpoints(0.0, 4.0), Error);
}

TEST_CASE("trace statistics") {
  const MemoryTrace trace = constant_trace({8, 14, 10});
  CHECK(trace.peak_total() == 14);
  CHECK(trace.min_total() == 8);
  CHECK(trace.mean_total() == doctest::Approx((8.0 + 14.0 + 10.0) / 3.0));
  CHECK(jitter(trace) == doctest::Approx(6.0 / ((8.0 + 14.0 + 10.0) / 3.0)));
}

TEST_CASE("traces reject out-of-order or negative samples") {
  MemoryTrace trace;
  MemorySample s;
  s.step = 3;
  s.resident_param_bytes = 1;
  trace.append(s);
  CHECK_THROWS_AS(trace.append(s), Error);  // same step again
  MemorySample neg;
  neg.step = 4;
  neg.activation_bytes = -1;
  CHECK_THROWS_AS(trace.append(neg), Error);
  CHECK_THROWS_AS(MemoryTrace{}.peak_total(), Error);
}

TEST_CASE("peak memory follows resident-plus-rotating-share") {
  const int64_t M = 7'000'000'000;
  CHECK(model_peak_bytes(M, 1) == 126e9);   // dense: 18 bytes per element
  CHECK(model_peak_bytes(M, 8) == 28e9);    // 2M + 16M/8
  CHECK(model_peak_bytes(M, 4) == 42e9);
  CHECK(model_peak_bytes(M, 64) == 14e9 + 112e9 / 64);
  // the floor: the rotating share vanishes as K grows
  CHECK(model_peak_bytes(M, 1 << 30) < 14e9 + 200.0);
  CHECK(model_peak_bytes(M, 1 << 30) >= 14e9);
  CHECK_THROWS_AS(model_peak_bytes(0, 1), Error);
  CHECK_THROWS_AS(model_peak_bytes(M, 0), Error);
}

TEST_CASE("analytic gradient-generation costs per cycle") {
  CHECK(analytic_bp_cost(Method::adam, 1).normalized_cost == 1.0);
  CHECK(analytic_bp_cost(Method::lomo, 5).normalized_cost == 1.0);
  CHECK(analytic_bp_cost(Method::chunkft, 8).normalized_cost == 1.0);
  CHECK(analytic_bp_cost(Method::badam, 3).normalized_cost == 2.0);
  CHECK(analytic_bp_cost(Method::hift, 3).normalized_cost == 2.0);
  CHECK(analytic_bp_cost(Method::badam, 7).normalized_cost == 4.0);
  CHECK(analytic_bp_cost(Method::lora, 1, 8, 4096).normalized_cost == 8.0 / 4096.0);
  CHECK_THROWS_AS(analytic_bp_cost(Method::lora, 1), Error);
  CHECK_THROWS_AS(analytic_bp_cost(Method::adam, 0), Error);

  const auto text = cost_report_text({analytic_bp_cost(Method::adam, 1),
                                      analytic_bp_cost(Method::badam, 3)});
  CHECK(text.find("Adam: 1") != std::string::npos);
  CHECK(text.find("BAdam: 2") != std::string::npos);
}

TEST_CASE("suffix propagation cost") {
  CHECK(suffix_cycle_cost({1.0, 1.0, 1.0, 1.0}) == 2.5);
  CHECK(suffix_cycle_cost({1.0}) == 1.0);
  // suffix sums 4 then 1, over a total of 4
  CHECK(suffix_cycle_cost({3.0, 1.0}) == doctest::Approx(1.25));
  CHECK_THROWS_AS(suffix_cycle_cost({}), Error);
  CHECK_THROWS_AS(suffix_cycle_cost({1.0, 0.0}), Error);
}

TEST_CASE("measured cost normalizes to one for exact rotations") {
  BpInstrumentation bp;
  bp.rotations = 5;
  bp.K = 4;
  bp.T = 3;
  bp.dense_macs_per_step = 1000;
  bp.chunked_macs = 5 * 3 * 1000;
  CHECK(measured_bp_cost(bp) == 1.0);

  bp.chunked_macs = 5 * 3 * 1500;
  CHECK(measured_bp_cost(bp) == 1.5);

  bp.rotations = 0;
  CHECK_THROWS_AS(measured_bp_cost(bp), Error);
  bp.rotations = 5;
  bp.dense_macs_per_step = 0;
  CHECK_THROWS_AS(measured_bp_cost(bp), Error);
}

TEST_CASE("simulated trace of an exactly divisible model is flat") {
  // one tensor, 64 rows of 16 -> 1024 elements, split 4 ways evenly
  const std::vector<TensorInfo> infos = {make_info(0, 64, 16)};
  const ChunkPlan plan = partition(infos, 4);
  ScheduleConfig cfg;
  cfg.K = 4;
  cfg.T = 2;
  cfg.total_steps = 16;
  const MemoryTrace trace = simulate_memory_trace(infos, plan, cfg, 0);

  REQUIRE(trace.samples.size() == 16);
  const int64_t expect = 1024 * 2 + 1024 / 4 * 16;  // resident + one chunk's share
  for (const auto& s : trace.samples) {
    CHECK(s.resident_param_bytes == 1024 * 2);
    CHECK(s.total() == expect);
  }
  CHECK(jitter(trace) == 0.0);
  CHECK(trace.peak_total() == static_cast<int64_t>(model_peak_bytes(1024, 4)));
}

TEST_CASE("measured jitter stays under the plan-imbalance bound") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 60; ++trial) {
    const int n_tensors = 1 + static_cast<int>(rng() % 4);
    std::vector<TensorInfo> infos;
    int64_t total_rows = 0;
    for (int i = 0; i < n_tensors; ++i) {
      infos.push_back(make_info(i, 1 + static_cast<int64_t>(rng() % 50),
                                1 + static_cast<int64_t>(rng() % 6)));
      total_rows += infos.back().rows;
    }
    const int K = 1 + static_cast<int>(rng() % std::min<int64_t>(total_rows, 6));
    const bool per_tensor = trial % 3 == 0;
    const ChunkPlan plan = per_tensor ? partition_per_tensor(infos) : partition(infos, K);

    ScheduleConfig cfg;
    cfg.K = plan.K();
    cfg.T = 1 + static_cast<int>(rng() % 3);
    cfg.total_steps = static_cast<int64_t>(cfg.K) * cfg.T * 3;
    // bound scope: no in-flight transfer windows, fixed activations
    cfg.bandwidth_bytes_per_step = 0;
    const int64_t act = static_cast<int64_t>(rng() % 512);
    const MemoryTrace trace = simulate_memory_trace(infos, plan, cfg, act);
    CHECK(jitter(trace) <= jitter_bound(plan, trace.mean_total()) + 1e-12);
  }
}

TEST_CASE("deliberately imbalanced plans show large jitter") {
  // one heavy tensor, one light one
  const std::vector<TensorInfo> infos = {make_info(0, 96, 8), make_info(1, 4, 2)};
  const ChunkPlan balanced = partition(infos, 2);
  const ChunkPlan lopsided = partition_per_tensor(infos);
  ScheduleConfig cfg;
  cfg.K = 2;
  cfg.T = 1;
  cfg.total_steps = 8;
  const double j_balanced = jitter(simulate_memory_trace(infos, balanced, cfg, 0));
  const double j_lopsided = jitter(simulate_memory_trace(infos, lopsided, cfg, 0));
  CHECK(j_lopsided > 10.0 * j_balanced);
  CHECK(j_lopsided > 0.2);
}

TEST_CASE("activation model bytes") {
  CHECK(activation_model_bytes(32, 64, 3) == 32 * 64 * 3 * 4);
  CHECK(activation_model_bytes(0, 64, 3) == 0);
  CHECK_THROWS_AS(activation_model_bytes(-1, 2, 2), Error);
}

TEST_CASE("memory trace csv layout") {
  MemoryTrace trace;
  MemorySample s;
  s.step = 0;
  s.resident_param_bytes = 100;
  s.active_state_bytes = 40;
  s.activation_bytes = 8;
  s.transfer_buffer_bytes = 2;
  trace.append(s);
  const auto path = std::filesystem::temp_directory_path() / "chunkft_trace_test.csv";
  write_memory_trace_csv(trace, path);
  std::ifstream in(path);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  std::filesystem::remove(path);
  REQUIRE(lines.size() == 2);
  CHECK(lines[0] ==
        "step,resident_param_bytes,active_state_bytes,activation_bytes,"
        "transfer_buffer_bytes,total");
  CHECK(lines[1] == "0,100,40,8,2,150");
}
