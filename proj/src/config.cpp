// SPDX-License-Identifier: Apache-2.0
#include "chunkft/config.hpp"

#include <fstream>
#include <sstream>

namespace chunkft {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw Error(where + ": " + what);
}

void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) fail(where, "expected an object");
}

void reject_unknown(const json& j, const std::string& where,
                    std::initializer_list<const char*> allowed) {
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* key : allowed)
      if (item.key() == key) {
        ok = true;
        break;
      }
    if (!ok) fail(where, "unknown key '" + item.key() + "'");
  }
}

std::int64_t get_int(const json& j, const std::string& where, const char* key,
                     std::int64_t fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer()) fail(where + "." + key, "expected an integer");
  return v.get<std::int64_t>();
}

double get_double(const json& j, const std::string& where, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number()) fail(where + "." + key, "expected a number");
  return v.get<double>();
}

bool get_bool(const json& j, const std::string& where, const char* key, bool fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_boolean()) fail(where + "." + key, "expected a boolean");
  return v.get<bool>();
}

std::string get_string(const json& j, const std::string& where, const char* key,
                       const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_string()) fail(where + "." + key, "expected a string");
  return v.get<std::string>();
}

LossKind parse_loss(const std::string& s, const std::string& where) {
  if (s == "sum") return LossKind::sum;
  if (s == "squared") return LossKind::squared;
  if (s == "half_sq") return LossKind::half_sq;
  if (s == "softmax_ce") return LossKind::softmax_ce;
  fail(where, "unknown loss '" + s + "' (sum, squared, half_sq, softmax_ce)");
}

const char* loss_name(LossKind k) {
  switch (k) {
    case LossKind::sum: return "sum";
    case LossKind::squared: return "squared";
    case LossKind::half_sq: return "half_sq";
    case LossKind::softmax_ce: return "softmax_ce";
  }
  return "?";
}

LayerSpec parse_layer(const json& j, const std::string& where) {
  require_object(j, where);
  const std::string type = get_string(j, where, "type", "");
  LayerSpec spec;
  if (type == "linear") {
    spec.type = LayerSpec::Type::linear;
    reject_unknown(j, where, {"type", "in", "out", "bias"});
    spec.in = static_cast<int>(get_int(j, where, "in", 0));
    spec.out = static_cast<int>(get_int(j, where, "out", 0));
    spec.bias = get_bool(j, where, "bias", true);
    if (spec.in < 1) fail(where + ".in", "must be >= 1");
    if (spec.out < 1) fail(where + ".out", "must be >= 1");
  } else if (type == "embedding") {
    spec.type = LayerSpec::Type::embedding;
    reject_unknown(j, where, {"type", "vocab", "dim", "seq"});
    spec.vocab = static_cast<int>(get_int(j, where, "vocab", 0));
    spec.dim = static_cast<int>(get_int(j, where, "dim", 0));
    spec.seq = static_cast<int>(get_int(j, where, "seq", 1));
    if (spec.vocab < 1) fail(where + ".vocab", "must be >= 1");
    if (spec.dim < 1) fail(where + ".dim", "must be >= 1");
    if (spec.seq < 1) fail(where + ".seq", "must be >= 1");
  } else if (type == "layernorm") {
    spec.type = LayerSpec::Type::layernorm;
    reject_unknown(j, where, {"type", "dim"});
    spec.dim = static_cast<int>(get_int(j, where, "dim", 0));
    if (spec.dim < 1) fail(where + ".dim", "must be >= 1");
  } else if (type == "tanh") {
    spec.type = LayerSpec::Type::tanh_act;
    reject_unknown(j, where, {"type"});
  } else {
    fail(where + ".type", "unknown layer type '" + type +
                              "' (linear, embedding, layernorm, tanh)");
  }
  return spec;
}

std::int64_t trainable_rows(const ModelSpec& model) {
  // mirrors the tensor shapes the model registers: bias and norm parameters
  // are column vectors, so each scalar is its own row
  std::int64_t rows = 0;
  for (const LayerSpec& l : model.layers) {
    switch (l.type) {
      case LayerSpec::Type::linear:
        rows += l.out;                 // weight rows
        if (l.bias) rows += l.out;     // bias is out x 1
        break;
      case LayerSpec::Type::embedding: rows += l.vocab; break;
      case LayerSpec::Type::layernorm: rows += 2 * l.dim; break;
      case LayerSpec::Type::tanh_act: break;
    }
  }
  return rows;
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  require_object(doc, "config");
  reject_unknown(doc, "config",
                 {"model", "dataset", "schedule", "optimizer", "policy", "plan", "init",
                  "micro_batches", "activation_bytes", "out_dir", "seed"});

  ExperimentConfig cfg;

  if (!doc.contains("model")) fail("config.model", "required");
  {
    const json& m = doc.at("model");
    require_object(m, "config.model");
    reject_unknown(m, "config.model", {"layers", "loss"});
    if (!m.contains("layers")) fail("config.model.layers", "required");
    const json& layers = m.at("layers");
    if (!layers.is_array() || layers.empty())
      fail("config.model.layers", "expected a non-empty array");
    for (size_t i = 0; i < layers.size(); ++i) {
      std::ostringstream where;
      where << "config.model.layers[" << i << "]";
      cfg.model.layers.push_back(parse_layer(layers[i], where.str()));
    }
    cfg.model.loss = parse_loss(get_string(m, "config.model", "loss", "half_sq"),
                                "config.model.loss");
  }

  if (doc.contains("dataset")) {
    const json& d = doc.at("dataset");
    require_object(d, "config.dataset");
    reject_unknown(d, "config.dataset",
                   {"generator", "size", "batch", "input_dim", "target_dim", "classes",
                    "vocab", "seq", "seed"});
    cfg.dataset.generator = get_string(d, "config.dataset", "generator", "regression");
    if (cfg.dataset.generator != "regression" && cfg.dataset.generator != "classification" &&
        cfg.dataset.generator != "tokens" && cfg.dataset.generator != "identity")
      fail("config.dataset.generator",
           "unknown generator '" + cfg.dataset.generator +
               "' (regression, classification, tokens, identity)");
    cfg.dataset.size = static_cast<int>(get_int(d, "config.dataset", "size", cfg.dataset.size));
    cfg.dataset.batch = static_cast<int>(get_int(d, "config.dataset", "batch", cfg.dataset.batch));
    cfg.dataset.input_dim =
        static_cast<int>(get_int(d, "config.dataset", "input_dim", cfg.dataset.input_dim));
    cfg.dataset.target_dim =
        static_cast<int>(get_int(d, "config.dataset", "target_dim", cfg.dataset.target_dim));
    cfg.dataset.classes =
        static_cast<int>(get_int(d, "config.dataset", "classes", cfg.dataset.classes));
    cfg.dataset.vocab = static_cast<int>(get_int(d, "config.dataset", "vocab", cfg.dataset.vocab));
    cfg.dataset.seq = static_cast<int>(get_int(d, "config.dataset", "seq", cfg.dataset.seq));
    cfg.dataset.seed = static_cast<std::uint64_t>(
        get_int(d, "config.dataset", "seed", static_cast<std::int64_t>(cfg.dataset.seed)));
    if (cfg.dataset.size < 1) fail("config.dataset.size", "must be >= 1");
    if (cfg.dataset.batch < 1) fail("config.dataset.batch", "must be >= 1");
    if (cfg.dataset.batch > cfg.dataset.size)
      fail("config.dataset.batch", "must not exceed dataset size");
  }

  if (!doc.contains("schedule")) fail("config.schedule", "required");
  {
    const json& s = doc.at("schedule");
    require_object(s, "config.schedule");
    reject_unknown(s, "config.schedule",
                   {"K", "T", "steps", "prefetch", "bandwidth_bytes_per_step"});
    cfg.schedule.K = static_cast<int>(get_int(s, "config.schedule", "K", 8));
    if (cfg.schedule.K < 1) fail("config.schedule.K", "must be >= 1");
    // T defaults to K: one inner step per chunk slot keeps rotation and data
    // epochs aligned
    cfg.schedule.T = static_cast<int>(get_int(s, "config.schedule", "T", cfg.schedule.K));
    if (cfg.schedule.T < 1) fail("config.schedule.T", "must be >= 1");
    if (!s.contains("steps")) fail("config.schedule.steps", "required");
    cfg.schedule.total_steps = get_int(s, "config.schedule", "steps", 0);
    if (cfg.schedule.total_steps < 1) fail("config.schedule.steps", "must be >= 1");
    cfg.schedule.prefetch = get_bool(s, "config.schedule", "prefetch", false);
    cfg.schedule.bandwidth_bytes_per_step =
        get_int(s, "config.schedule", "bandwidth_bytes_per_step", 0);
    if (cfg.schedule.bandwidth_bytes_per_step < 0)
      fail("config.schedule.bandwidth_bytes_per_step", "must be >= 0");
  }

  if (doc.contains("optimizer")) {
    const json& o = doc.at("optimizer");
    require_object(o, "config.optimizer");
    reject_unknown(o, "config.optimizer",
                   {"kind", "eta", "beta1", "beta2", "epsilon", "weight_decay"});
    const std::string kind = get_string(o, "config.optimizer", "kind", "adamw");
    if (kind == "adamw")
      cfg.optim = OptimKind::adamw;
    else if (kind == "plain")
      cfg.optim = OptimKind::plain;
    else
      fail("config.optimizer.kind", "unknown kind '" + kind + "' (adamw, plain)");
    cfg.hyper.eta = get_double(o, "config.optimizer", "eta", cfg.hyper.eta);
    cfg.hyper.beta1 = get_double(o, "config.optimizer", "beta1", cfg.hyper.beta1);
    cfg.hyper.beta2 = get_double(o, "config.optimizer", "beta2", cfg.hyper.beta2);
    cfg.hyper.epsilon = get_double(o, "config.optimizer", "epsilon", cfg.hyper.epsilon);
    cfg.hyper.weight_decay =
        get_double(o, "config.optimizer", "weight_decay", cfg.hyper.weight_decay);
    try {
      cfg.hyper.validate();
    } catch (const Error& e) {
      fail("config.optimizer", e.what());
    }
  }

  if (doc.contains("policy")) {
    const json& p = doc.at("policy");
    require_object(p, "config.policy");
    reject_unknown(p, "config.policy",
                   {"param_bytes", "grad_bytes", "master_bytes", "moment1_bytes",
                    "moment2_bytes"});
    cfg.policy.param_bytes =
        static_cast<int>(get_int(p, "config.policy", "param_bytes", cfg.policy.param_bytes));
    cfg.policy.grad_bytes =
        static_cast<int>(get_int(p, "config.policy", "grad_bytes", cfg.policy.grad_bytes));
    cfg.policy.master_bytes =
        static_cast<int>(get_int(p, "config.policy", "master_bytes", cfg.policy.master_bytes));
    cfg.policy.moment1_bytes = static_cast<int>(
        get_int(p, "config.policy", "moment1_bytes", cfg.policy.moment1_bytes));
    cfg.policy.moment2_bytes = static_cast<int>(
        get_int(p, "config.policy", "moment2_bytes", cfg.policy.moment2_bytes));
    try {
      cfg.policy.validate();
    } catch (const Error& e) {
      fail("config.policy", e.what());
    }
  }

  const std::string plan = get_string(doc, "config", "plan", "byte_balanced");
  if (plan == "byte_balanced")
    cfg.plan = PlanKind::byte_balanced;
  else if (plan == "per_tensor")
    cfg.plan = PlanKind::per_tensor;
  else
    fail("config.plan", "unknown plan '" + plan + "' (byte_balanced, per_tensor)");

  const std::string init = get_string(doc, "config", "init", "random");
  if (init == "random")
    cfg.init = InitKind::random;
  else if (init == "formula")
    cfg.init = InitKind::formula;
  else
    fail("config.init", "unknown init '" + init + "' (random, formula)");

  cfg.micro_batches = static_cast<int>(get_int(doc, "config", "micro_batches", 1));
  if (cfg.micro_batches < 1) fail("config.micro_batches", "must be >= 1");
  cfg.activation_bytes = get_int(doc, "config", "activation_bytes", 0);
  if (cfg.activation_bytes < 0) fail("config.activation_bytes", "must be >= 0");
  cfg.out_dir = get_string(doc, "config", "out_dir", "");
  cfg.seed = static_cast<std::uint64_t>(
      get_int(doc, "config", "seed", static_cast<std::int64_t>(7)));

  // cross-module granularity rule: a plan cannot have more chunks than the
  // model has trainable rows
  const std::int64_t rows = trainable_rows(cfg.model);
  if (cfg.schedule.K > rows) {
    std::ostringstream os;
    os << "chunk count exceeds row granularity (K=" << cfg.schedule.K << ", trainable rows="
       << rows << ")";
    fail("config.schedule.K", os.str());
  }
  return cfg;
}

ExperimentConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("config: cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error("config: " + path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  json layers = json::array();
  for (const LayerSpec& l : cfg.model.layers) {
    json j;
    switch (l.type) {
      case LayerSpec::Type::linear:
        j = {{"type", "linear"}, {"in", l.in}, {"out", l.out}, {"bias", l.bias}};
        break;
      case LayerSpec::Type::embedding:
        j = {{"type", "embedding"}, {"vocab", l.vocab}, {"dim", l.dim}, {"seq", l.seq}};
        break;
      case LayerSpec::Type::layernorm:
        j = {{"type", "layernorm"}, {"dim", l.dim}};
        break;
      case LayerSpec::Type::tanh_act:
        j = {{"type", "tanh"}};
        break;
    }
    layers.push_back(std::move(j));
  }
  return json{
      {"model", {{"layers", layers}, {"loss", loss_name(cfg.model.loss)}}},
      {"dataset",
       {{"generator", cfg.dataset.generator},
        {"size", cfg.dataset.size},
        {"batch", cfg.dataset.batch},
        {"input_dim", cfg.dataset.input_dim},
        {"target_dim", cfg.dataset.target_dim},
        {"classes", cfg.dataset.classes},
        {"vocab", cfg.dataset.vocab},
        {"seq", cfg.dataset.seq},
        {"seed", cfg.dataset.seed}}},
      {"schedule",
       {{"K", cfg.schedule.K},
        {"T", cfg.schedule.T},
        {"steps", cfg.schedule.total_steps},
        {"prefetch", cfg.schedule.prefetch},
        {"bandwidth_bytes_per_step", cfg.schedule.bandwidth_bytes_per_step}}},
      {"optimizer",
       {{"kind", cfg.optim == OptimKind::adamw ? "adamw" : "plain"},
        {"eta", cfg.hyper.eta},
        {"beta1", cfg.hyper.beta1},
        {"beta2", cfg.hyper.beta2},
        {"epsilon", cfg.hyper.epsilon},
        {"weight_decay", cfg.hyper.weight_decay}}},
      {"policy",
       {{"param_bytes", cfg.policy.param_bytes},
        {"grad_bytes", cfg.policy.grad_bytes},
        {"master_bytes", cfg.policy.master_bytes},
        {"moment1_bytes", cfg.policy.moment1_bytes},
        {"moment2_bytes", cfg.policy.moment2_bytes}}},
      {"plan", cfg.plan == PlanKind::byte_balanced ? "byte_balanced" : "per_tensor"},
      {"init", cfg.init == InitKind::random ? "random" : "formula"},
      {"micro_batches", cfg.micro_batches},
      {"activation_bytes", cfg.activation_bytes},
      {"out_dir", cfg.out_dir},
      {"seed", cfg.seed}};
}

Model build_model(const ExperimentConfig& cfg) {
  Model model;
  for (const LayerSpec& l : cfg.model.layers) {
    switch (l.type) {
      case LayerSpec::Type::linear: model.add_linear(l.in, l.out, l.bias); break;
      case LayerSpec::Type::embedding: model.add_embedding(l.vocab, l.dim, l.seq); break;
      case LayerSpec::Type::layernorm: model.add_layernorm(l.dim); break;
      case LayerSpec::Type::tanh_act: model.add_tanh(); break;
    }
  }
  model.loss = cfg.model.loss;
  if (cfg.init == InitKind::random)
    model.init_params(cfg.seed);
  else
    model.init_params_formula();
  for (ParamTensor& t : model.tensors()) t.storage_precision = cfg.policy.param_bytes;
  return model;
}

ChunkPlan build_plan(const Model& model, const ExperimentConfig& cfg) {
  const std::vector<TensorInfo> infos = model.tensor_infos();
  if (cfg.plan == PlanKind::per_tensor) return partition_per_tensor(infos, cfg.policy);
  return partition(infos, cfg.schedule.K, cfg.policy);
}

}  // namespace chunkft
