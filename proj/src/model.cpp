// SPDX-License-Identifier: Apache-2.0

#include "chunkft/model.hpp"

#include <cmath>

namespace chunkft {

int Model::add_tensor(const std::string& name, int rows, int cols, int storage_precision) {
  if (rows <= 0 || cols <= 0) throw Error("tensor '" + name + "': non-positive shape");
  const int id = static_cast<int>(tensors_.size());
  ParamTensor t(id, name, rows, cols);
  t.storage_precision = storage_precision;
  t.reg_order = id;
  tensors_.push_back(std::move(t));
  return id;
}

ParamTensor& Model::tensor(int id) {
  if (id < 0 || id >= static_cast<int>(tensors_.size()))
    throw Error("tensor id out of range: " + std::to_string(id));
  return tensors_[id];
}

const ParamTensor& Model::tensor(int id) const {
  return const_cast<Model*>(this)->tensor(id);
}

const ParamTensor* Model::find_tensor(int id) const {
  if (id < 0 || id >= static_cast<int>(tensors_.size())) return nullptr;
  return &tensors_[id];
}

std::vector<TensorInfo> Model::tensor_infos() const {
  std::vector<TensorInfo> infos;
  infos.reserve(tensors_.size());
  for (const auto& t : tensors_) infos.push_back(info_of(t));
  return infos;
}

int64_t Model::total_parameters() const {
  int64_t n = 0;
  for (const auto& t : tensors_)
    if (t.trainable) n += t.elements();
  return n;
}

int64_t Model::total_trainable_rows() const {
  int64_t n = 0;
  for (const auto& t : tensors_)
    if (t.trainable) n += t.rows;
  return n;
}

int Model::output_dim() const {
  if (layers_.empty()) throw Error("model has no layers");
  int dim = -1;
  for (const auto& layer : layers_) {
    if (const auto* lin = std::get_if<LinearLayer>(&layer)) dim = lin->out_dim;
    else if (const auto* emb = std::get_if<EmbeddingLayer>(&layer)) dim = emb->dim * emb->seq;
    // layernorm/tanh preserve width
  }
  if (dim < 0) throw Error("model output width undetermined");
  return dim;
}

void Model::add_linear(int in_dim, int out_dim, bool bias) {
  LinearLayer l;
  l.in_dim = in_dim;
  l.out_dim = out_dim;
  const int idx = static_cast<int>(layers_.size());
  l.weight_id = add_tensor("linear" + std::to_string(idx) + ".weight", out_dim, in_dim);
  if (bias) l.bias_id = add_tensor("linear" + std::to_string(idx) + ".bias", out_dim, 1);
  layers_.push_back(l);
}

void Model::add_embedding(int vocab, int dim, int seq) {
  EmbeddingLayer e;
  e.vocab = vocab;
  e.dim = dim;
  e.seq = seq;
  const int idx = static_cast<int>(layers_.size());
  e.table_id = add_tensor("embedding" + std::to_string(idx) + ".table", vocab, dim);
  layers_.push_back(e);
}

void Model::add_layernorm(int dim, double epsilon) {
  LayerNormLayer n;
  n.dim = dim;
  n.epsilon = epsilon;
  const int idx = static_cast<int>(layers_.size());
  n.gamma_id = add_tensor("layernorm" + std::to_string(idx) + ".gamma", dim, 1);
  n.beta_id = add_tensor("layernorm" + std::to_string(idx) + ".beta", dim, 1);
  layers_.push_back(n);
}

void Model::add_tanh() { layers_.push_back(TanhLayer{}); }

void Model::init_params(uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-0.5, 0.5);
  for (auto& t : tensors_) {
    const bool is_gamma = t.name.find(".gamma") != std::string::npos;
    const bool is_beta = t.name.find(".beta") != std::string::npos;
    const bool is_bias = t.name.find(".bias") != std::string::npos;
    if (is_gamma) {
      for (auto& v : t.values) v = 1.0;
      continue;
    }
    if (is_beta || is_bias) {
      for (auto& v : t.values) v = 0.0;
      continue;
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(t.cols));
    for (auto& v : t.values) v = uni(rng) * scale;
  }
}

void Model::init_params_formula() {
  for (size_t i = 0; i < tensors_.size(); ++i) {
    ParamTensor& t = tensors_[i];
    const bool is_gamma = t.name.find(".gamma") != std::string::npos;
    for (size_t k = 0; k < t.values.size(); ++k) {
      const double v = 0.1 * std::sin(0.7 * static_cast<double>(i) + 0.3 * static_cast<double>(k));
      t.values[k] = is_gamma ? 1.0 + v : v;
    }
  }
}

std::vector<double> Model::snapshot_params() const {
  std::vector<double> flat;
  for (const auto& t : tensors_) flat.insert(flat.end(), t.values.begin(), t.values.end());
  return flat;
}

void Model::restore_params(const std::vector<double>& flat) {
  size_t off = 0;
  for (auto& t : tensors_) {
    if (off + t.values.size() > flat.size()) throw Error("restore_params: size mismatch");
    std::copy(flat.begin() + off, flat.begin() + off + t.values.size(), t.values.begin());
    off += t.values.size();
  }
  if (off != flat.size()) throw Error("restore_params: size mismatch");
}

// ---- data ----

SyntheticStream::SyntheticStream(std::vector<Batch> batches) : batches_(std::move(batches)) {
  if (batches_.empty()) throw Error("empty dataset");
}

const Batch& SyntheticStream::next() {
  const Batch& b = batches_[cursor_];
  cursor_ = (cursor_ + 1) % batches_.size();
  return b;
}

void SyntheticStream::reset() { cursor_ = 0; }

int SyntheticStream::batch_size() const { return batches_.front().size(); }

std::vector<Batch> make_regression_batches(const DatasetSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  // Fixed random teacher so targets are a learnable function of the inputs.
  Matrix teacher(spec.target_dim, spec.input_dim);
  for (auto& v : teacher.data) v = gauss(rng) / std::sqrt(static_cast<double>(spec.input_dim));

  const int nbatches = std::max(1, spec.size / spec.batch);
  std::vector<Batch> out;
  for (int n = 0; n < nbatches; ++n) {
    Batch b;
    b.x = Matrix(spec.batch, spec.input_dim);
    for (auto& v : b.x.data) v = gauss(rng);
    b.target = Matrix(spec.batch, spec.target_dim);
    for (int r = 0; r < spec.batch; ++r)
      for (int c = 0; c < spec.target_dim; ++c) {
        double acc = 0.0;
        for (int i = 0; i < spec.input_dim; ++i) acc += teacher.at(c, i) * b.x.at(r, i);
        b.target.at(r, c) = std::tanh(acc);
      }
    out.push_back(std::move(b));
  }
  return out;
}

std::vector<Batch> make_classification_batches(const DatasetSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> pick_class(0, spec.classes - 1);
  // Class centers on a circle in the first two feature dims.
  std::vector<std::vector<double>> centers(spec.classes, std::vector<double>(spec.input_dim, 0.0));
  for (int c = 0; c < spec.classes; ++c) {
    const double ang = 2.0 * 3.14159265358979323846 * c / spec.classes;
    centers[c][0] = 2.0 * std::cos(ang);
    if (spec.input_dim > 1) centers[c][1] = 2.0 * std::sin(ang);
  }
  const int nbatches = std::max(1, spec.size / spec.batch);
  std::vector<Batch> out;
  for (int n = 0; n < nbatches; ++n) {
    Batch b;
    b.x = Matrix(spec.batch, spec.input_dim);
    b.labels.resize(spec.batch);
    for (int r = 0; r < spec.batch; ++r) {
      const int cls = pick_class(rng);
      b.labels[r] = cls;
      for (int i = 0; i < spec.input_dim; ++i)
        b.x.at(r, i) = centers[cls][i] + 0.4 * gauss(rng);
    }
    out.push_back(std::move(b));
  }
  return out;
}

std::vector<Batch> make_token_batches(const DatasetSpec& spec, int target_dim,
                                      LossKind loss, int classes) {
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<int> pick_token(0, spec.vocab - 1);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int nbatches = std::max(1, spec.size / spec.batch);
  std::vector<Batch> out;
  for (int n = 0; n < nbatches; ++n) {
    Batch b;
    b.token_batch = spec.batch;
    b.tokens.resize(static_cast<size_t>(spec.batch) * spec.seq);
    for (auto& t : b.tokens) t = pick_token(rng);
    if (loss == LossKind::softmax_ce) {
      std::uniform_int_distribution<int> pick_label(0, classes - 1);
      b.labels.resize(spec.batch);
      for (auto& l : b.labels) l = pick_label(rng);
    } else if (loss != LossKind::sum) {
      b.target = Matrix(spec.batch, target_dim);
      for (auto& v : b.target.data) v = gauss(rng);
    }
    out.push_back(std::move(b));
  }
  return out;
}

std::vector<Batch> make_identity_batches(const DatasetSpec& spec) {
  // One fixed batch: X = I, zero targets. A single square linear layer with
  // the half-squared loss then sees exactly 0.5 * ||W||^2.
  Batch b;
  b.x = Matrix(spec.input_dim, spec.input_dim);
  for (int i = 0; i < spec.input_dim; ++i) b.x.at(i, i) = 1.0;
  b.target = Matrix(spec.input_dim, spec.target_dim);
  std::vector<Batch> out;
  out.push_back(std::move(b));
  return out;
}

std::unique_ptr<DataStream> make_stream(const DatasetSpec& spec, const Model& model) {
  std::vector<Batch> batches;
  if (spec.generator == "regression") {
    batches = make_regression_batches(spec);
  } else if (spec.generator == "classification") {
    batches = make_classification_batches(spec);
  } else if (spec.generator == "tokens") {
    batches = make_token_batches(spec, model.output_dim(), model.loss, model.output_dim());
  } else if (spec.generator == "identity") {
    batches = make_identity_batches(spec);
  } else {
    throw Error("unknown data generator '" + spec.generator + "'");
  }
  return std::make_unique<SyntheticStream>(std::move(batches));
}

}  // namespace chunkft
