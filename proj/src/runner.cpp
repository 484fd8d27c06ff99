// SPDX-License-Identifier: Apache-2.0
#include "chunkft/runner.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "chunkft/accounting.hpp"
#include "chunkft/csvio.hpp"

namespace chunkft {

namespace {

LayerSpec linear_spec(int in, int out, bool bias = true) {
  LayerSpec l;
  l.type = LayerSpec::Type::linear;
  l.in = in;
  l.out = out;
  l.bias = bias;
  return l;
}

LayerSpec embedding_spec(int vocab, int dim, int seq) {
  LayerSpec l;
  l.type = LayerSpec::Type::embedding;
  l.vocab = vocab;
  l.dim = dim;
  l.seq = seq;
  return l;
}

LayerSpec tanh_spec() {
  LayerSpec l;
  l.type = LayerSpec::Type::tanh_act;
  return l;
}

ExperimentConfig preset_quadratic_k2() {
  ExperimentConfig cfg;
  // Single square linear on an identity batch: the loss is exactly
  // 0.5 * ||W||^2, so the plain block update with eta near 1 contracts the
  // active rows hard and one rotation touches every parameter once.
  cfg.model.layers.push_back(linear_spec(8, 8, false));
  cfg.model.loss = LossKind::half_sq;
  cfg.dataset.generator = "identity";
  cfg.dataset.input_dim = 8;
  cfg.dataset.target_dim = 8;
  cfg.dataset.size = 8;
  cfg.dataset.batch = 8;
  cfg.schedule.K = 2;
  cfg.schedule.T = 1;
  cfg.schedule.total_steps = 8;
  cfg.optim = OptimKind::plain;
  cfg.hyper.eta = 0.5;
  cfg.init = InitKind::formula;
  return cfg;
}

ExperimentConfig preset_mlp_imbalanced(bool per_tensor_plan) {
  ExperimentConfig cfg;
  // One dominant embedding table next to a small head. Byte-balanced chunks
  // slice the table across chunks; the per-tensor plan makes chunk = tensor
  // and the step totals swing with the table.
  cfg.model.layers.push_back(embedding_spec(512, 16, 4));
  cfg.model.layers.push_back(linear_spec(64, 4));
  cfg.model.loss = LossKind::softmax_ce;
  cfg.dataset.generator = "tokens";
  cfg.dataset.vocab = 512;
  cfg.dataset.seq = 4;
  cfg.dataset.batch = 8;
  cfg.dataset.size = 64;
  cfg.schedule.T = 1;
  if (per_tensor_plan) {
    cfg.plan = PlanKind::per_tensor;
    cfg.schedule.K = 3;  // snapped to the tensor count anyway
    cfg.schedule.total_steps = 15;
  } else {
    cfg.plan = PlanKind::byte_balanced;
    cfg.schedule.K = 4;
    cfg.schedule.total_steps = 16;
  }
  cfg.hyper.eta = 1e-3;
  return cfg;
}

ExperimentConfig preset_dense_reduction() {
  ExperimentConfig cfg;
  cfg.model.layers.push_back(linear_spec(8, 16));
  cfg.model.layers.push_back(tanh_spec());
  cfg.model.layers.push_back(linear_spec(16, 1));
  cfg.model.loss = LossKind::half_sq;
  cfg.dataset.generator = "regression";
  cfg.dataset.input_dim = 8;
  cfg.dataset.target_dim = 1;
  cfg.dataset.batch = 16;
  cfg.dataset.size = 128;
  cfg.schedule.K = 1;
  cfg.schedule.T = 1;
  cfg.schedule.total_steps = 32;
  cfg.hyper.eta = 1e-3;
  return cfg;
}

ExperimentConfig preset_classification_sanity() {
  ExperimentConfig cfg;
  cfg.model.layers.push_back(linear_spec(8, 32));
  cfg.model.layers.push_back(tanh_spec());
  cfg.model.layers.push_back(linear_spec(32, 2));
  cfg.model.loss = LossKind::softmax_ce;
  cfg.dataset.generator = "classification";
  cfg.dataset.input_dim = 8;
  cfg.dataset.classes = 2;
  cfg.dataset.size = 1024;
  cfg.dataset.batch = 32;
  cfg.schedule.K = 8;
  cfg.schedule.T = 8;
  cfg.schedule.total_steps = 640;  // 10 full rotations
  cfg.hyper.eta = 5e-3;
  return cfg;
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"quadratic-k2", "mlp-imbalanced-layers", "mlp-imbalanced-layers-identity",
          "dense-reduction", "classification-sanity"};
}

ExperimentConfig make_preset(const std::string& name) {
  if (name == "quadratic-k2") return preset_quadratic_k2();
  if (name == "mlp-imbalanced-layers") return preset_mlp_imbalanced(false);
  if (name == "mlp-imbalanced-layers-identity") return preset_mlp_imbalanced(true);
  if (name == "dense-reduction") return preset_dense_reduction();
  if (name == "classification-sanity") return preset_classification_sanity();
  std::ostringstream os;
  os << "unknown preset '" << name << "' (known:";
  for (const auto& p : preset_names()) os << ' ' << p;
  os << ')';
  throw Error(os.str());
}

RunArtifacts run_experiment(const ExperimentConfig& config) {
  RunArtifacts art;
  art.config = config;

  Model model = build_model(config);
  art.plan = build_plan(model, config);
  // the per-tensor plan decides its own chunk count
  art.config.schedule.K = art.plan.K();

  std::unique_ptr<DataStream> stream = make_stream(config.dataset, model);

  TrainOptions options;
  options.schedule = art.config.schedule;
  options.hyper = config.hyper;
  options.optim = config.optim;
  options.micro_batches = config.micro_batches;
  options.activation_bytes = config.activation_bytes;
  art.result = run_training(model, *stream, art.plan, options);

  art.initial_loss =
      art.result.trajectory.empty() ? 0.0 : art.result.trajectory.front().loss;
  art.peak_bytes = static_cast<double>(art.result.memory.peak_total());
  art.mean_total_bytes = art.result.memory.mean_total();
  art.jitter_value = jitter(art.result.memory);
  art.jitter_upper_bound =
      art.mean_total_bytes > 0.0 ? jitter_bound(art.plan, art.mean_total_bytes) : 0.0;
  art.measured_bp_ratio = measured_bp_cost(art.result.bp);

  if (!config.out_dir.empty()) {
    const std::filesystem::path out(config.out_dir);
    std::error_code ec;
    std::filesystem::create_directories(out / "checkpoints", ec);
    if (ec) throw Error("run: cannot create output directory " + out.string());
    write_memory_trace_csv(art.result.memory, out / "memory_trace.csv");
    write_transfer_log_csv(art.result.transfers, out / "transfer_log.csv");
    write_trajectory_csv(art.result.trajectory, out / "trajectory.csv");
    write_text_file(out / "plan.json", plan_to_json(art.plan, model.tensor_infos()) + "\n");
    write_text_file(out / "effective_config.json", config_to_json(art.config).dump(2) + "\n");
    const uint64_t hash = plan_hash(art.plan);
    for (const ChunkStates& s : art.result.states) {
      char name[32];
      std::snprintf(name, sizeof(name), "chunk_%04d.bin", s.chunk_index);
      write_chunk_checkpoint(s, hash, out / "checkpoints" / name);
    }
    art.out_dir = out;
    write_text_file(out / "summary.txt", summary_text(art));
  }
  return art;
}

std::string summary_text(const RunArtifacts& art) {
  std::ostringstream os;
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016" PRIx64, plan_hash(art.plan));
  os << "steps " << art.config.schedule.total_steps << '\n';
  os << "chunks " << art.plan.K() << '\n';
  os << "rotation_interval " << art.config.schedule.T << '\n';
  os << "plan_hash " << hash << '\n';
  os << "peak_bytes " << format_double(art.peak_bytes) << '\n';
  os << "mean_total_bytes " << format_double(art.mean_total_bytes) << '\n';
  os << "jitter " << format_double(art.jitter_value) << '\n';
  os << "jitter_bound " << format_double(art.jitter_upper_bound) << '\n';
  os << "measured_bp_ratio " << format_double(art.measured_bp_ratio) << '\n';
  os << "noop_loads " << art.result.noop_loads << '\n';
  os << "transfer_events " << art.result.transfers.size() << '\n';
  os << "initial_loss " << format_double(art.initial_loss) << '\n';
  os << "final_loss " << format_double(art.result.final_loss) << '\n';
  return os.str();
}

int run_preset_checks(std::ostream& os) {
  int failures = 0;
  auto report = [&](const std::string& name, const std::string& what, bool ok) {
    os << "check " << name << ": " << what << (ok ? " ... ok" : " ... FAIL") << '\n';
    if (!ok) ++failures;
  };

  {
    const RunArtifacts a = run_experiment(make_preset("quadratic-k2"));
    std::ostringstream what;
    what << "jitter " << format_double(a.jitter_value) << " == 0";
    report("quadratic-k2", what.str(), a.jitter_value == 0.0);
    std::ostringstream what2;
    what2 << "measured_bp_ratio " << format_double(a.measured_bp_ratio) << " == 1";
    report("quadratic-k2", what2.str(), a.measured_bp_ratio == 1.0);
  }
  {
    const RunArtifacts a = run_experiment(make_preset("mlp-imbalanced-layers"));
    std::ostringstream what;
    what << "jitter " << format_double(a.jitter_value) << " <= 0.02";
    report("mlp-imbalanced-layers", what.str(), a.jitter_value <= 0.02);
  }
  {
    const RunArtifacts a = run_experiment(make_preset("mlp-imbalanced-layers-identity"));
    std::ostringstream what;
    what << "jitter " << format_double(a.jitter_value) << " >= 0.2";
    report("mlp-imbalanced-layers-identity", what.str(), a.jitter_value >= 0.2);
  }
  {
    const RunArtifacts a = run_experiment(make_preset("dense-reduction"));
    std::ostringstream what;
    what << "measured_bp_ratio " << format_double(a.measured_bp_ratio) << " == 1";
    report("dense-reduction", what.str(), a.measured_bp_ratio == 1.0);
    std::ostringstream what2;
    what2 << "jitter " << format_double(a.jitter_value) << " == 0";
    report("dense-reduction", what2.str(), a.jitter_value == 0.0);
  }
  {
    const RunArtifacts a = run_experiment(make_preset("classification-sanity"));
    std::ostringstream what;
    what << "final_loss " << format_double(a.result.final_loss) << " < initial "
         << format_double(a.initial_loss);
    report("classification-sanity", what.str(),
           std::isfinite(a.result.final_loss) && a.result.final_loss < a.initial_loss);
  }
  return failures;
}

}  // namespace chunkft
