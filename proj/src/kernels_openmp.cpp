// SPDX-License-Identifier: Apache-2.0
// OpenMP kernel variants. Parallel loops run only over independent outputs
// (rows, samples, elements); inner reductions keep the serial order, so every
// output double matches the serial backend exactly.

#include <cmath>
#include <cstdint>

#include "chunkft/kernels.hpp"

namespace chunkft::kernels::detail {

void linear_forward_omp(const double* x, int batch, int in_dim, const double* w,
                        int out_dim, const double* bias, double* y) {
#pragma omp parallel for schedule(static)
  for (int b = 0; b < batch; ++b) {
    const double* xb = x + static_cast<size_t>(b) * in_dim;
    double* yb = y + static_cast<size_t>(b) * out_dim;
    for (int o = 0; o < out_dim; ++o) {
      const double* wo = w + static_cast<size_t>(o) * in_dim;
      double acc = bias ? bias[o] : 0.0;
      for (int i = 0; i < in_dim; ++i) acc += xb[i] * wo[i];
      yb[o] = acc;
    }
  }
}

void linear_dinput_omp(const double* dy, int batch, int out_dim, const double* w,
                       int in_dim, double* dx) {
#pragma omp parallel for schedule(static)
  for (int b = 0; b < batch; ++b) {
    const double* dyb = dy + static_cast<size_t>(b) * out_dim;
    double* dxb = dx + static_cast<size_t>(b) * in_dim;
    for (int i = 0; i < in_dim; ++i) {
      double acc = 0.0;
      for (int o = 0; o < out_dim; ++o) acc += dyb[o] * w[static_cast<size_t>(o) * in_dim + i];
      dxb[i] += acc;
    }
  }
}

void linear_dweight_omp(const double* dy, int batch, int out_dim, const double* x,
                        int in_dim, int64_t row_begin, int64_t row_end, double* dw) {
#pragma omp parallel for schedule(static)
  for (int64_t o = row_begin; o < row_end; ++o) {
    double* dwo = dw + static_cast<size_t>(o - row_begin) * in_dim;
    for (int b = 0; b < batch; ++b) {
      const double g = dy[static_cast<size_t>(b) * out_dim + o];
      const double* xb = x + static_cast<size_t>(b) * in_dim;
      for (int i = 0; i < in_dim; ++i) dwo[i] += g * xb[i];
    }
  }
}

void linear_dbias_omp(const double* dy, int batch, int out_dim, int64_t row_begin,
                      int64_t row_end, double* db) {
#pragma omp parallel for schedule(static)
  for (int64_t o = row_begin; o < row_end; ++o) {
    double acc = 0.0;
    for (int b = 0; b < batch; ++b) acc += dy[static_cast<size_t>(b) * out_dim + o];
    db[o - row_begin] += acc;
  }
}

void embedding_gather_omp(const double* table, int dim, const int* tokens,
                          int positions, double* y) {
#pragma omp parallel for schedule(static)
  for (int p = 0; p < positions; ++p) {
    const double* src = table + static_cast<size_t>(tokens[p]) * dim;
    double* dst = y + static_cast<size_t>(p) * dim;
    for (int j = 0; j < dim; ++j) dst[j] = src[j];
  }
}

int64_t embedding_scatter_omp(const double* dy, int dim, const int* tokens,
                              int positions, int64_t row_begin, int64_t row_end,
                              double* dtable) {
  int64_t matched = 0;
#pragma omp parallel for schedule(static) reduction(+ : matched)
  for (int64_t r = row_begin; r < row_end; ++r) {
    double* dst = dtable + static_cast<size_t>(r - row_begin) * dim;
    for (int p = 0; p < positions; ++p) {
      if (tokens[p] != r) continue;
      const double* src = dy + static_cast<size_t>(p) * dim;
      for (int j = 0; j < dim; ++j) dst[j] += src[j];
      ++matched;
    }
  }
  return matched;
}

void layernorm_forward_omp(const double* x, int batch, int dim, const double* gamma,
                           const double* beta, double eps, double* y, double* mean,
                           double* inv_std) {
#pragma omp parallel for schedule(static)
  for (int b = 0; b < batch; ++b) {
    const double* xb = x + static_cast<size_t>(b) * dim;
    double* yb = y + static_cast<size_t>(b) * dim;
    double mu = 0.0;
    for (int j = 0; j < dim; ++j) mu += xb[j];
    mu /= dim;
    double var = 0.0;
    for (int j = 0; j < dim; ++j) {
      const double d = xb[j] - mu;
      var += d * d;
    }
    var /= dim;
    const double istd = 1.0 / std::sqrt(var + eps);
    mean[b] = mu;
    inv_std[b] = istd;
    for (int j = 0; j < dim; ++j) yb[j] = gamma[j] * ((xb[j] - mu) * istd) + beta[j];
  }
}

void layernorm_dinput_omp(const double* dy, const double* x, const double* mean,
                          const double* inv_std, const double* gamma, int batch,
                          int dim, double* dx) {
#pragma omp parallel for schedule(static)
  for (int b = 0; b < batch; ++b) {
    const double* dyb = dy + static_cast<size_t>(b) * dim;
    const double* xb = x + static_cast<size_t>(b) * dim;
    double* dxb = dx + static_cast<size_t>(b) * dim;
    const double mu = mean[b];
    const double istd = inv_std[b];
    double sum_g = 0.0;
    double sum_gx = 0.0;
    for (int j = 0; j < dim; ++j) {
      const double xhat = (xb[j] - mu) * istd;
      sum_g += gamma[j] * dyb[j];
      sum_gx += gamma[j] * dyb[j] * xhat;
    }
    for (int j = 0; j < dim; ++j) {
      const double xhat = (xb[j] - mu) * istd;
      dxb[j] += istd * (gamma[j] * dyb[j] - (sum_g + xhat * sum_gx) / dim);
    }
  }
}

void layernorm_dgamma_omp(const double* dy, const double* x, const double* mean,
                          const double* inv_std, int batch, int dim,
                          int64_t row_begin, int64_t row_end, double* dgamma) {
#pragma omp parallel for schedule(static)
  for (int64_t j = row_begin; j < row_end; ++j) {
    double acc = 0.0;
    for (int b = 0; b < batch; ++b) {
      const double xhat = (x[static_cast<size_t>(b) * dim + j] - mean[b]) * inv_std[b];
      acc += dy[static_cast<size_t>(b) * dim + j] * xhat;
    }
    dgamma[j - row_begin] += acc;
  }
}

void layernorm_dbeta_omp(const double* dy, int batch, int dim, int64_t row_begin,
                         int64_t row_end, double* dbeta) {
#pragma omp parallel for schedule(static)
  for (int64_t j = row_begin; j < row_end; ++j) {
    double acc = 0.0;
    for (int b = 0; b < batch; ++b) acc += dy[static_cast<size_t>(b) * dim + j];
    dbeta[j - row_begin] += acc;
  }
}

void tanh_forward_omp(const double* x, int64_t n, double* y) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
}

void tanh_dinput_omp(const double* dy, const double* y, int64_t n, double* dx) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) dx[i] += dy[i] * (1.0 - y[i] * y[i]);
}

}  // namespace chunkft::kernels::detail
