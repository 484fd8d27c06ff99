// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "chunkft/matrix.hpp"
#include "chunkft/tensor.hpp"

namespace chunkft {

// Layers reference parameters by tensor id; the Model owns the tensors.

struct LinearLayer {
  int weight_id = -1;
  int bias_id = -1;  // -1 when bias-free
  int in_dim = 0;
  int out_dim = 0;
};

struct EmbeddingLayer {
  int table_id = -1;
  int vocab = 0;
  int dim = 0;
  int seq = 1;  // output is batch x (seq*dim)
};

struct LayerNormLayer {
  int gamma_id = -1;
  int beta_id = -1;
  int dim = 0;
  double epsilon = 1e-5;
};

struct TanhLayer {};

using Layer = std::variant<LinearLayer, EmbeddingLayer, LayerNormLayer, TanhLayer>;

enum class LossKind {
  sum,         // L = sum of outputs (linear probe, handy for gradient identities)
  squared,     // L = sum((y - target)^2)
  half_sq,     // L = 0.5 * sum((y - target)^2)
  softmax_ce,  // mean cross-entropy over rows, integer labels
};

struct Batch {
  Matrix x;                 // dense input (unused when the model starts with an embedding)
  std::vector<int> tokens;  // flattened batch*seq token ids
  int token_batch = 0;      // samples in the token batch
  Matrix target;            // regression targets
  std::vector<int> labels;  // classification labels
  int size() const { return token_batch > 0 ? token_batch : x.rows; }
};

class Model {
 public:
  // Registration order fixes both tensor ids and the canonical planning order.
  int add_tensor(const std::string& name, int rows, int cols, int storage_precision = 2);
  ParamTensor& tensor(int id);
  const ParamTensor& tensor(int id) const;
  const ParamTensor* find_tensor(int id) const;

  std::vector<ParamTensor>& tensors() { return tensors_; }
  const std::vector<ParamTensor>& tensors() const { return tensors_; }
  std::vector<TensorInfo> tensor_infos() const;

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  LossKind loss = LossKind::squared;

  int64_t total_parameters() const;
  int64_t total_trainable_rows() const;
  int output_dim() const;  // columns produced by the last layer

  // Convenience builders; each registers the needed tensors.
  void add_linear(int in_dim, int out_dim, bool bias = true);
  void add_embedding(int vocab, int dim, int seq = 1);
  void add_layernorm(int dim, double epsilon = 1e-5);
  void add_tanh();

  // Deterministic parameter init: uniform in [-0.5, 0.5] scaled by
  // 1/sqrt(fan-in), gamma = 1, beta = 0.
  void init_params(uint64_t seed);

  // Deterministic data-free init used by cross-language oracles:
  // element k of tensor i gets 0.1 * sin(0.7 * i + 0.3 * k), gamma 1 + that.
  void init_params_formula();

  std::vector<double> snapshot_params() const;
  void restore_params(const std::vector<double>& flat);

 private:
  std::vector<ParamTensor> tensors_;
  std::vector<Layer> layers_;
};

// ---- Synthetic datasets ----

struct DatasetSpec {
  std::string generator = "regression";  // regression | classification | tokens
  int size = 256;
  int batch = 32;
  int input_dim = 8;    // regression/classification feature width
  int target_dim = 1;   // regression target width
  int classes = 2;      // classification
  int vocab = 16;       // tokens
  int seq = 1;          // tokens
  uint64_t seed = 7;
};

class DataStream {
 public:
  virtual ~DataStream() = default;
  virtual const Batch& next() = 0;  // advances every call, cycling the dataset
  virtual void reset() = 0;
  virtual int batch_size() const = 0;
};

// Pre-generates size/batch batches and cycles through them.
class SyntheticStream : public DataStream {
 public:
  explicit SyntheticStream(std::vector<Batch> batches);
  const Batch& next() override;
  void reset() override;
  int batch_size() const override;

 private:
  std::vector<Batch> batches_;
  size_t cursor_ = 0;
};

std::vector<Batch> make_regression_batches(const DatasetSpec& spec);
std::vector<Batch> make_classification_batches(const DatasetSpec& spec);
std::vector<Batch> make_token_batches(const DatasetSpec& spec, int target_dim,
                                      LossKind loss, int classes);
std::vector<Batch> make_identity_batches(const DatasetSpec& spec);
std::unique_ptr<DataStream> make_stream(const DatasetSpec& spec, const Model& model);

}  // namespace chunkft
