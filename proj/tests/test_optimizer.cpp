// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <random>

#include "chunkft/optimizer.hpp"

using namespace chunkft;

namespace {

// Frozen hand-evaluated single steps (cross-checked against the numpy oracle
// in tests/oracles/mlp_forward_oracle.py).
constexpr double kFreshStepTheta = 0.90000000199999997;
constexpr double kDecayOnlyTheta = 0.98999999999999999;

struct Scalar {
  Model model;
  ChunkPlan plan;
  ChunkStates states;

  explicit Scalar(double theta) {
    model.add_linear(1, 1, false);
    model.tensors()[0].values[0] = theta;
    plan = partition(model.tensor_infos(), 1);
    states = init_chunk_states(plan, 0, model);
    load_to_device(states);
  }
};

// Straight-line restatement of the update rule for one element, kept
// deliberately separate from the production loop.
struct RefAdamW {
  double m = 0.0, v = 0.0;
  uint64_t n = 0;
  double step(double theta, double g, const AdamWHyper& h) {
    n += 1;
    m = h.beta1 * m + (1.0 - h.beta1) * g;
    v = h.beta2 * v + (1.0 - h.beta2) * g * g;
    const double mhat = m / (1.0 - std::pow(h.beta1, static_cast<double>(n)));
    const double vhat = v / (1.0 - std::pow(h.beta2, static_cast<double>(n)));
    return theta - h.eta * (mhat / (std::sqrt(vhat) + h.epsilon) + h.weight_decay * theta);
  }
};

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

std::filesystem::path temp_dir() {
  auto dir = std::filesystem::temp_directory_path() / "chunkft_opt_test";
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("first step from theta=1 with g=0.5 lands just under 0.9") {
  Scalar s(1.0);
  AdamWHyper h;
  h.eta = 0.1;
  adamw_chunk_step(s.states, {0.5}, h, s.plan, s.model);
  CHECK(s.states.master[0] == kFreshStepTheta);
  CHECK(s.model.tensors()[0].values[0] == kFreshStepTheta);
  CHECK(s.states.n == 1);
  CHECK(std::fabs(s.states.master[0] - 0.9) < 1e-8);
}

TEST_CASE("decay-only step multiplies theta by 1 - eta*lambda") {
  Scalar s(1.0);
  AdamWHyper h;
  h.eta = 0.1;
  h.weight_decay = 0.1;
  adamw_chunk_step(s.states, {0.0}, h, s.plan, s.model);
  CHECK(s.states.master[0] == kDecayOnlyTheta);
  CHECK(std::fabs(s.states.master[0] - 0.99) < 1e-15);
}

TEST_CASE("zero gradient without decay leaves parameters untouched") {
  Scalar s(0.37);
  AdamWHyper h;
  for (int i = 0; i < 5; ++i) adamw_chunk_step(s.states, {0.0}, h, s.plan, s.model);
  CHECK(s.states.master[0] == 0.37);
  CHECK(s.model.tensors()[0].values[0] == 0.37);
  CHECK(s.states.n == 5);
}

TEST_CASE("non-finite gradients are rejected with context") {
  Scalar s(1.0);
  AdamWHyper h;
  CHECK_THROWS_WITH_AS(
      adamw_chunk_step(s.states, {std::numeric_limits<double>::quiet_NaN()}, h, s.plan, s.model),
      doctest::Contains("non-finite gradient"), Error);
  CHECK(s.states.n == 0);  // failed step must not advance the counter
  CHECK_THROWS_AS(
      adamw_chunk_step(s.states, {std::numeric_limits<double>::infinity()}, h, s.plan, s.model),
      Error);
}

TEST_CASE("hyperparameter validation") {
  AdamWHyper h;
  h.eta = 0.0;
  CHECK_THROWS_AS(h.validate(), Error);
  h = AdamWHyper{};
  h.beta1 = 1.0;
  CHECK_THROWS_AS(h.validate(), Error);
  h = AdamWHyper{};
  h.weight_decay = -0.1;
  CHECK_THROWS_AS(h.validate(), Error);
}

TEST_CASE("fresh states start zeroed on the host tier") {
  Model m;
  m.add_linear(4, 6);
  m.init_params(3);
  const ChunkPlan plan = partition(m.tensor_infos(), 2);
  for (int k = 0; k < 2; ++k) {
    ChunkStates s = init_chunk_states(plan, k, m);
    CHECK(s.chunk_index == k);
    CHECK(s.n == 0);
    CHECK(s.tier == Tier::host);
    CHECK(s.elements == plan.chunk_elements(k));
    load_to_device(s);
    REQUIRE(static_cast<int64_t>(s.m.size()) == s.elements);
    for (double x : s.m) CHECK(x == 0.0);
    for (double x : s.v) CHECK(x == 0.0);
  }
}

TEST_CASE("masters copy params exactly and write back bit-identical") {
  Model m;
  m.add_linear(5, 7);
  m.init_params(11);
  const std::vector<double> before = m.snapshot_params();
  const ChunkPlan plan = partition(m.tensor_infos(), 3);
  auto states = init_all_chunk_states(plan, m);

  // clobber the tensors, then restore every chunk from its master
  for (auto& t : m.tensors())
    for (double& v : t.values) v = -99.0;
  for (auto& s : states) {
    load_to_device(s);
    write_back(s, plan, m);
    offload_to_host(s);
  }
  CHECK(same_bits(m.snapshot_params(), before));
}

TEST_CASE("chunks of a split tensor hold disjoint rows") {
  Model m;
  m.add_linear(10, 100, false);  // one 100x10 weight
  m.init_params(5);
  const ChunkPlan plan = partition(m.tensor_infos(), 2);
  ChunkStates s0 = init_chunk_states(plan, 0, m);
  ChunkStates s1 = init_chunk_states(plan, 1, m);
  load_to_device(s0);
  load_to_device(s1);
  CHECK(s0.elements + s1.elements == m.total_parameters());
  // chunk 0 = rows [0,50), chunk 1 = rows [50,100)
  const auto& w = m.tensors()[0];
  for (int i = 0; i < s0.elements; ++i) CHECK(s0.master[i] == w.values[i]);
  for (int i = 0; i < s1.elements; ++i) CHECK(s1.master[i] == w.values[s0.elements + i]);
}

TEST_CASE("accumulating one bag is a passthrough") {
  Model m;
  m.add_linear(3, 4);
  m.init_params_formula();
  m.loss = LossKind::sum;
  Batch b;
  b.x = Matrix(2, 3, 0.5);
  const ChunkPlan plan = partition(m.tensor_infos(), 1);
  ChunkStates s = init_chunk_states(plan, 0, m);
  load_to_device(s);

  const Tape tape = forward(m, b);
  const GradBag bag = tape.backward_chunked(plan.mask_of(0));
  accumulate_grad(s, plan, bag);
  const std::vector<double> g = take_mean_grad(s);
  CHECK(same_bits(g, bag.flatten()));
  CHECK(s.accum_count == 0);  // taking the mean clears the accumulator
}

TEST_CASE("two identical micro-grads average to the same gradient") {
  Model m;
  m.add_linear(3, 4);
  m.init_params_formula();
  m.loss = LossKind::sum;
  Batch b;
  b.x = Matrix(2, 3, 0.5);
  const ChunkPlan plan = partition(m.tensor_infos(), 1);
  ChunkStates s = init_chunk_states(plan, 0, m);
  load_to_device(s);

  const Tape tape = forward(m, b);
  const GradBag bag = tape.backward_chunked(plan.mask_of(0));
  accumulate_grad(s, plan, bag);
  accumulate_grad(s, plan, bag);
  const std::vector<double> g = take_mean_grad(s);
  const std::vector<double> expect = bag.flatten();
  REQUIRE(g.size() == expect.size());
  for (size_t i = 0; i < g.size(); ++i) CHECK(rel_err(g[i], expect[i]) <= 1e-15);
}

TEST_CASE("four random micro-grads step like dense AdamW on their mean") {
  Model m;
  m.add_linear(2, 3);
  m.init_params(17);
  m.loss = LossKind::half_sq;
  const ChunkPlan plan = partition(m.tensor_infos(), 1);
  ChunkStates s = init_chunk_states(plan, 0, m);
  load_to_device(s);
  const std::vector<double> theta0 = s.master;

  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<std::vector<double>> grads;
  for (int mb = 0; mb < 4; ++mb) {
    Batch b;
    b.x = Matrix(3, 2);
    b.target = Matrix(3, 3);
    for (double& v : b.x.data) v = dist(rng);
    for (double& v : b.target.data) v = dist(rng);
    const Tape tape = forward(m, b);
    const GradBag bag = tape.backward_chunked(plan.mask_of(0));
    accumulate_grad(s, plan, bag);
    grads.push_back(bag.flatten());
  }
  AdamWHyper h;
  h.eta = 0.05;
  h.weight_decay = 0.01;
  const std::vector<double> g = take_mean_grad(s);
  adamw_chunk_step(s, g, h, plan, m);

  for (size_t i = 0; i < theta0.size(); ++i) {
    double mean = 0.0;
    for (const auto& gm : grads) mean += gm[i];
    mean /= 4.0;
    RefAdamW ref;
    const double expect = ref.step(theta0[i], mean, h);
    CHECK(rel_err(s.master[i], expect) <= 1e-12);
  }
}

TEST_CASE("moment arrays keep v nonnegative and updates bounded") {
  Scalar s(2.0);
  AdamWHyper h;
  h.eta = 0.01;
  h.weight_decay = 0.05;
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> dist(-10.0, 10.0);
  for (int i = 0; i < 300; ++i) {
    const double before = s.states.master[0];
    adamw_chunk_step(s.states, {dist(rng)}, h, s.plan, s.model);
    CHECK(s.states.v[0] >= 0.0);
    const double bound = h.eta * (1.0 / (1.0 - h.beta1) + h.weight_decay * std::fabs(before));
    CHECK(std::fabs(s.states.master[0] - before) <= bound + 1e-12);
  }
}

TEST_CASE("bias correction uses the chunk-local counter") {
  // A chunk that sat through many rotations before its first update must
  // step exactly like one updated immediately.
  Scalar fresh(1.0);
  Scalar idle(1.0);
  for (int r = 0; r < 40; ++r) {  // simulated rotations while inactive
    offload_to_host(idle.states);
    load_to_device(idle.states);
  }
  AdamWHyper h;
  h.eta = 0.1;
  adamw_chunk_step(fresh.states, {0.5}, h, fresh.plan, fresh.model);
  adamw_chunk_step(idle.states, {0.5}, h, idle.plan, idle.model);
  CHECK(idle.states.master[0] == fresh.states.master[0]);
  CHECK(idle.states.n == 1);
  CHECK(idle.states.master[0] == kFreshStepTheta);
}

TEST_CASE("tier round trip preserves every array bit for bit") {
  Model m;
  m.add_linear(4, 5);
  m.init_params(13);
  m.loss = LossKind::sum;
  const ChunkPlan plan = partition(m.tensor_infos(), 1);
  ChunkStates s = init_chunk_states(plan, 0, m);
  load_to_device(s);
  AdamWHyper h;
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> g(static_cast<size_t>(s.elements));
  for (int step = 0; step < 3; ++step) {
    for (double& x : g) x = dist(rng);
    adamw_chunk_step(s, g, h, plan, m);
  }
  const auto master = s.master, mm = s.m, vv = s.v;
  const uint64_t n = s.n;

  offload_to_host(s);
  CHECK(s.tier == Tier::host);
  CHECK(s.master.empty());  // device arrays dropped while on host
  load_to_device(s);
  CHECK(s.tier == Tier::device);
  CHECK(same_bits(s.master, master));
  CHECK(same_bits(s.m, mm));
  CHECK(same_bits(s.v, vv));
  CHECK(s.n == n);
}

TEST_CASE("a reload between steps changes nothing") {
  Model m1, m2;
  for (Model* m : {&m1, &m2}) {
    m->add_linear(3, 3);
    m->init_params(7);
    m->loss = LossKind::sum;
  }
  const ChunkPlan plan = partition(m1.tensor_infos(), 1);
  ChunkStates a = init_chunk_states(plan, 0, m1);
  ChunkStates b = init_chunk_states(plan, 0, m2);
  load_to_device(a);
  load_to_device(b);

  std::mt19937_64 rng(53);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> g1(static_cast<size_t>(a.elements)), g2 = g1;
  for (double& x : g1) x = dist(rng);
  for (double& x : g2) x = dist(rng);

  AdamWHyper h;
  adamw_chunk_step(a, g1, h, plan, m1);
  adamw_chunk_step(a, g2, h, plan, m1);

  adamw_chunk_step(b, g1, h, plan, m2);
  offload_to_host(b);
  load_to_device(b);
  adamw_chunk_step(b, g2, h, plan, m2);

  CHECK(same_bits(a.master, b.master));
  CHECK(same_bits(a.m, b.m));
  CHECK(same_bits(a.v, b.v));
  CHECK(same_bits(m1.snapshot_params(), m2.snapshot_params()));
}

TEST_CASE("offload refuses to drop pending accumulation") {
  Model m;
  m.add_linear(2, 2);
  m.init_params_formula();
  m.loss = LossKind::sum;
  Batch b;
  b.x = Matrix(1, 2, 1.0);
  const ChunkPlan plan = partition(m.tensor_infos(), 1);
  ChunkStates s = init_chunk_states(plan, 0, m);
  load_to_device(s);
  const Tape tape = forward(m, b);
  accumulate_grad(s, plan, tape.backward_chunked(plan.mask_of(0)));
  CHECK_THROWS_WITH_AS(offload_to_host(s), doctest::Contains("accumulation still pending"), Error);
  clear_accum(s);
  CHECK_NOTHROW(offload_to_host(s));
}

TEST_CASE("accumulate rejects a bag from the wrong chunk") {
  Model m;
  m.add_linear(4, 8, false);
  m.init_params(19);
  m.loss = LossKind::sum;
  Batch b;
  b.x = Matrix(1, 4, 1.0);
  const ChunkPlan plan = partition(m.tensor_infos(), 2);
  ChunkStates s = init_chunk_states(plan, 0, m);
  load_to_device(s);
  const Tape tape = forward(m, b);
  const GradBag wrong = tape.backward_chunked(plan.mask_of(1));
  CHECK_THROWS_AS(accumulate_grad(s, plan, wrong), Error);
}

TEST_CASE("checkpoints round trip and refuse foreign plans") {
  Model m;
  m.add_linear(3, 6);
  m.init_params(29);
  m.loss = LossKind::sum;
  const ChunkPlan plan = partition(m.tensor_infos(), 2);
  const uint64_t hash = plan_hash(plan);

  ChunkStates s = init_chunk_states(plan, 1, m);
  load_to_device(s);
  AdamWHyper h;
  std::vector<double> g(static_cast<size_t>(s.elements), 0.25);
  adamw_chunk_step(s, g, h, plan, m);
  adamw_chunk_step(s, g, h, plan, m);
  offload_to_host(s);

  const auto path = temp_dir() / "chunk_0001.bin";
  write_chunk_checkpoint(s, hash, path);
  ChunkStates back = read_chunk_checkpoint(path, hash);
  CHECK(back.chunk_index == s.chunk_index);
  CHECK(back.tier == Tier::host);
  load_to_device(back);
  load_to_device(s);
  CHECK(back.n == s.n);
  CHECK(same_bits(back.master, s.master));
  CHECK(same_bits(back.m, s.m));
  CHECK(same_bits(back.v, s.v));

  CHECK_THROWS_WITH_AS(read_chunk_checkpoint(path, hash + 1),
                       doctest::Contains("plan hash mismatch"), Error);
  offload_to_host(s);
  std::filesystem::remove(path);
}

TEST_CASE("checkpointing a device-resident chunk is an error") {
  Model m;
  m.add_linear(2, 2);
  m.init_params(1);
  const ChunkPlan plan = partition(m.tensor_infos(), 1);
  ChunkStates s = init_chunk_states(plan, 0, m);
  load_to_device(s);
  CHECK_THROWS_AS(write_chunk_checkpoint(s, 0, temp_dir() / "never.bin"), Error);
}

TEST_CASE("plain gradient step subtracts eta times grad exactly") {
  Scalar s(1.0);
  sgd_chunk_step(s.states, {0.25}, 0.5, s.plan, s.model);
  CHECK(s.states.master[0] == 1.0 - 0.5 * 0.25);
  CHECK(s.model.tensors()[0].values[0] == 0.875);
  CHECK(s.states.n == 1);
}
