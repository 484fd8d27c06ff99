// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "chunkft/kernels.hpp"
#include "chunkft/matrix.hpp"
#include "chunkft/tensor.hpp"

namespace chunkft::ops {

// Running tally of multiply-accumulates that produce parameter gradients
// (dW, dTable, dGamma, dBeta). Input-gradient work is deliberately excluded:
// activation gradients must flow through every layer no matter which rows are
// active, so their cost is identical for chunked and dense backwards.
struct FlopCounter {
  int64_t param_grad_macs = 0;
};

// ---- Linear: y = x W^T + b, W is out_dim x in_dim, b optional ----

struct LinearCtx {
  const ParamTensor* weight = nullptr;
  const ParamTensor* bias = nullptr;  // null when the layer has no bias
  Matrix x;                           // saved input, batch x in_dim
};

Matrix linear_forward(const LinearCtx& ctx);

struct LinearGrads {
  std::optional<Matrix> dw;  // (rows in range) x in_dim, present iff rows requested
  std::optional<Matrix> db;  // (rows in range) x 1
  Matrix dx;                 // batch x in_dim, always full
};

// Computes dx unconditionally and dW/db only for rows of W (and entries of b)
// inside the given ranges. Either range may be absent. Gradient rows are
// accumulated in the same per-element order as a full backward restricted to
// the range, so slices of a dense result match bit for bit.
LinearGrads linear_backward_chunked(const LinearCtx& ctx, const Matrix& dy,
                                    std::optional<RowRange> weight_rows,
                                    std::optional<RowRange> bias_rows,
                                    FlopCounter* flops = nullptr);

// ---- Embedding: y[p,:] = table[tokens[p],:] over flattened positions ----

struct EmbeddingCtx {
  const ParamTensor* table = nullptr;  // vocab x dim
  std::vector<int> tokens;             // flattened batch*seq
};

Matrix embedding_forward(const EmbeddingCtx& ctx);

struct EmbeddingGrads {
  std::optional<Matrix> dtable;  // (rows in range) x dim
  int64_t matched_positions = 0;
};

// There is no input gradient; the table rows outside the range are untouched.
EmbeddingGrads embedding_backward_chunked(const EmbeddingCtx& ctx, const Matrix& dy,
                                          std::optional<RowRange> table_rows,
                                          FlopCounter* flops = nullptr);

// ---- LayerNorm over the last dimension, with per-dim gamma/beta ----

struct LayerNormCtx {
  const ParamTensor* gamma = nullptr;  // dim x 1
  const ParamTensor* beta = nullptr;   // dim x 1
  Matrix x;                            // saved input, batch x dim
  std::vector<double> mean;            // per sample
  std::vector<double> inv_std;         // per sample
  double epsilon = 1e-5;
};

Matrix layernorm_forward(LayerNormCtx& ctx);

struct LayerNormGrads {
  std::optional<Matrix> dgamma;  // (rows in range) x 1
  std::optional<Matrix> dbeta;   // (rows in range) x 1
  Matrix dx;                     // batch x dim, always full
};

LayerNormGrads layernorm_backward_chunked(const LayerNormCtx& ctx, const Matrix& dy,
                                          std::optional<RowRange> gamma_rows,
                                          std::optional<RowRange> beta_rows,
                                          FlopCounter* flops = nullptr);

// ---- Tanh ----

Matrix tanh_forward(const Matrix& x);
Matrix tanh_backward(const Matrix& dy, const Matrix& y);

}  // namespace chunkft::ops
