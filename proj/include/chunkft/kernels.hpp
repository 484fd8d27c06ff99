// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace chunkft::kernels {

// Two interchangeable kernel backends. The OpenMP variants parallelize only
// over independent output rows/elements and keep every per-element reduction
// in the same fixed order as the serial code, so results are bit-identical
// for any thread count. Scalar reductions (loss sums, norms) stay serial
// everywhere for the same reason.
enum class Backend { serial, openmp };

Backend backend();
void set_backend(Backend b);
bool openmp_compiled_in();
int openmp_max_threads();

// y[b,o] = sum_i x[b,i] * w[o,i] (+ bias[o]); w is out_dim x in_dim.
void linear_forward(const double* x, int batch, int in_dim, const double* w,
                    int out_dim, const double* bias, double* y);

// dx[b,i] += sum_o dy[b,o] * w[o,i]
void linear_dinput(const double* dy, int batch, int out_dim, const double* w,
                   int in_dim, double* dx);

// dw[o-row_begin,i] += sum_b dy[b,o] * x[b,i] for o in [row_begin,row_end)
void linear_dweight(const double* dy, int batch, int out_dim, const double* x,
                    int in_dim, int64_t row_begin, int64_t row_end, double* dw);

// db[o-row_begin] += sum_b dy[b,o] for o in [row_begin,row_end)
void linear_dbias(const double* dy, int batch, int out_dim, int64_t row_begin,
                  int64_t row_end, double* db);

// y[p,:] = table[tokens[p],:]
void embedding_gather(const double* table, int dim, const int* tokens,
                      int positions, double* y);

// dtable[tokens[p]-row_begin,:] += dy[p,:] for tokens in [row_begin,row_end).
// Returns the number of positions that landed in the range.
int64_t embedding_scatter(const double* dy, int dim, const int* tokens,
                          int positions, int64_t row_begin, int64_t row_end,
                          double* dtable);

// Per-sample normalization over the last dimension, then scale/shift.
void layernorm_forward(const double* x, int batch, int dim, const double* gamma,
                       const double* beta, double eps, double* y, double* mean,
                       double* inv_std);

void layernorm_dinput(const double* dy, const double* x, const double* mean,
                      const double* inv_std, const double* gamma, int batch,
                      int dim, double* dx);

// dgamma[j-row_begin] += sum_b dy[b,j] * xhat[b,j] for j in [row_begin,row_end)
void layernorm_dgamma(const double* dy, const double* x, const double* mean,
                      const double* inv_std, int batch, int dim,
                      int64_t row_begin, int64_t row_end, double* dgamma);

// dbeta[j-row_begin] += sum_b dy[b,j] for j in [row_begin,row_end)
void layernorm_dbeta(const double* dy, int batch, int dim, int64_t row_begin,
                     int64_t row_end, double* dbeta);

void tanh_forward(const double* x, int64_t n, double* y);
void tanh_dinput(const double* dy, const double* y, int64_t n, double* dx);

}  // namespace chunkft::kernels
