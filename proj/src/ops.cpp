// SPDX-License-Identifier: Apache-2.0

#include "chunkft/ops.hpp"

namespace chunkft::ops {

Matrix linear_forward(const LinearCtx& ctx) {
  const int batch = ctx.x.rows;
  const int in_dim = ctx.x.cols;
  const int out_dim = ctx.weight->rows;
  if (ctx.weight->cols != in_dim) throw Error("linear: weight/input dim mismatch");
  Matrix y(batch, out_dim);
  kernels::linear_forward(ctx.x.data.data(), batch, in_dim, ctx.weight->values.data(),
                          out_dim, ctx.bias ? ctx.bias->values.data() : nullptr,
                          y.data.data());
  return y;
}

LinearGrads linear_backward_chunked(const LinearCtx& ctx, const Matrix& dy,
                                    std::optional<RowRange> weight_rows,
                                    std::optional<RowRange> bias_rows,
                                    FlopCounter* flops) {
  const int batch = ctx.x.rows;
  const int in_dim = ctx.x.cols;
  const int out_dim = ctx.weight->rows;
  if (dy.rows != batch || dy.cols != out_dim) throw Error("linear backward: dy shape mismatch");

  LinearGrads g;
  g.dx = Matrix(batch, in_dim);
  kernels::linear_dinput(dy.data.data(), batch, out_dim, ctx.weight->values.data(),
                         in_dim, g.dx.data.data());

  if (weight_rows) {
    const RowRange r = *weight_rows;
    g.dw = Matrix(static_cast<int>(r.count()), in_dim);
    kernels::linear_dweight(dy.data.data(), batch, out_dim, ctx.x.data.data(), in_dim,
                            r.begin, r.end, g.dw->data.data());
    if (flops) flops->param_grad_macs += r.count() * in_dim * batch;
  }
  if (bias_rows) {
    if (!ctx.bias) throw Error("linear backward: bias rows requested for bias-free layer");
    const RowRange r = *bias_rows;
    g.db = Matrix(static_cast<int>(r.count()), 1);
    kernels::linear_dbias(dy.data.data(), batch, out_dim, r.begin, r.end, g.db->data.data());
    if (flops) flops->param_grad_macs += r.count() * batch;
  }
  return g;
}

Matrix embedding_forward(const EmbeddingCtx& ctx) {
  const int positions = static_cast<int>(ctx.tokens.size());
  const int dim = ctx.table->cols;
  for (int t : ctx.tokens)
    if (t < 0 || t >= ctx.table->rows) throw Error("embedding: token id out of range");
  Matrix y(positions, dim);
  kernels::embedding_gather(ctx.table->values.data(), dim, ctx.tokens.data(), positions,
                            y.data.data());
  return y;
}

EmbeddingGrads embedding_backward_chunked(const EmbeddingCtx& ctx, const Matrix& dy,
                                          std::optional<RowRange> table_rows,
                                          FlopCounter* flops) {
  const int positions = static_cast<int>(ctx.tokens.size());
  const int dim = ctx.table->cols;
  if (dy.rows != positions || dy.cols != dim) throw Error("embedding backward: dy shape mismatch");

  EmbeddingGrads g;
  if (table_rows) {
    const RowRange r = *table_rows;
    g.dtable = Matrix(static_cast<int>(r.count()), dim);
    g.matched_positions = kernels::embedding_scatter(dy.data.data(), dim, ctx.tokens.data(),
                                                     positions, r.begin, r.end,
                                                     g.dtable->data.data());
    if (flops) flops->param_grad_macs += g.matched_positions * dim;
  }
  return g;
}

Matrix layernorm_forward(LayerNormCtx& ctx) {
  const int batch = ctx.x.rows;
  const int dim = ctx.x.cols;
  if (ctx.gamma->rows != dim || ctx.beta->rows != dim)
    throw Error("layernorm: gamma/beta length mismatch");
  Matrix y(batch, dim);
  ctx.mean.assign(batch, 0.0);
  ctx.inv_std.assign(batch, 0.0);
  kernels::layernorm_forward(ctx.x.data.data(), batch, dim, ctx.gamma->values.data(),
                             ctx.beta->values.data(), ctx.epsilon, y.data.data(),
                             ctx.mean.data(), ctx.inv_std.data());
  return y;
}

LayerNormGrads layernorm_backward_chunked(const LayerNormCtx& ctx, const Matrix& dy,
                                          std::optional<RowRange> gamma_rows,
                                          std::optional<RowRange> beta_rows,
                                          FlopCounter* flops) {
  const int batch = ctx.x.rows;
  const int dim = ctx.x.cols;
  if (dy.rows != batch || dy.cols != dim) throw Error("layernorm backward: dy shape mismatch");

  LayerNormGrads g;
  g.dx = Matrix(batch, dim);
  kernels::layernorm_dinput(dy.data.data(), ctx.x.data.data(), ctx.mean.data(),
                            ctx.inv_std.data(), ctx.gamma->values.data(), batch, dim,
                            g.dx.data.data());
  if (gamma_rows) {
    const RowRange r = *gamma_rows;
    g.dgamma = Matrix(static_cast<int>(r.count()), 1);
    kernels::layernorm_dgamma(dy.data.data(), ctx.x.data.data(), ctx.mean.data(),
                              ctx.inv_std.data(), batch, dim, r.begin, r.end,
                              g.dgamma->data.data());
    if (flops) flops->param_grad_macs += r.count() * batch;
  }
  if (beta_rows) {
    const RowRange r = *beta_rows;
    g.dbeta = Matrix(static_cast<int>(r.count()), 1);
    kernels::layernorm_dbeta(dy.data.data(), batch, dim, r.begin, r.end, g.dbeta->data.data());
    if (flops) flops->param_grad_macs += r.count() * batch;
  }
  return g;
}

Matrix tanh_forward(const Matrix& x) {
  Matrix y(x.rows, x.cols);
  kernels::tanh_forward(x.data.data(), static_cast<int64_t>(x.size()), y.data.data());
  return y;
}

Matrix tanh_backward(const Matrix& dy, const Matrix& y) {
  if (!dy.same_shape(y)) throw Error("tanh backward: shape mismatch");
  Matrix dx(dy.rows, dy.cols);
  kernels::tanh_dinput(dy.data.data(), y.data.data(), static_cast<int64_t>(y.size()),
                       dx.data.data());
  return dx;
}

}  // namespace chunkft::ops
