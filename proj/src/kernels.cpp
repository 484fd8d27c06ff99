// SPDX-License-Identifier: Apache-2.0

#include "chunkft/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace chunkft::kernels {

namespace detail {
#define CHUNKFT_DECL_PAIR(ret, name, ...) \
  ret name##_serial(__VA_ARGS__);         \
  ret name##_omp(__VA_ARGS__);

CHUNKFT_DECL_PAIR(void, linear_forward, const double*, int, int, const double*, int,
                  const double*, double*)
CHUNKFT_DECL_PAIR(void, linear_dinput, const double*, int, int, const double*, int, double*)
CHUNKFT_DECL_PAIR(void, linear_dweight, const double*, int, int, const double*, int,
                  int64_t, int64_t, double*)
CHUNKFT_DECL_PAIR(void, linear_dbias, const double*, int, int, int64_t, int64_t, double*)
CHUNKFT_DECL_PAIR(void, embedding_gather, const double*, int, const int*, int, double*)
CHUNKFT_DECL_PAIR(int64_t, embedding_scatter, const double*, int, const int*, int,
                  int64_t, int64_t, double*)
CHUNKFT_DECL_PAIR(void, layernorm_forward, const double*, int, int, const double*,
                  const double*, double, double*, double*, double*)
CHUNKFT_DECL_PAIR(void, layernorm_dinput, const double*, const double*, const double*,
                  const double*, const double*, int, int, double*)
CHUNKFT_DECL_PAIR(void, layernorm_dgamma, const double*, const double*, const double*,
                  const double*, int, int, int64_t, int64_t, double*)
CHUNKFT_DECL_PAIR(void, layernorm_dbeta, const double*, int, int, int64_t, int64_t, double*)
CHUNKFT_DECL_PAIR(void, tanh_forward, const double*, int64_t, double*)
CHUNKFT_DECL_PAIR(void, tanh_dinput, const double*, const double*, int64_t, double*)
#undef CHUNKFT_DECL_PAIR
}  // namespace detail

namespace {
Backend g_backend =
#ifdef _OPENMP
    Backend::openmp;
#else
    Backend::serial;
#endif
}

Backend backend() { return g_backend; }
void set_backend(Backend b) { g_backend = b; }

bool openmp_compiled_in() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

int openmp_max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

#define CHUNKFT_DISPATCH(name, ...)                                \
  if (g_backend == Backend::openmp && openmp_compiled_in())        \
    return detail::name##_omp(__VA_ARGS__);                        \
  return detail::name##_serial(__VA_ARGS__)

void linear_forward(const double* x, int batch, int in_dim, const double* w,
                    int out_dim, const double* bias, double* y) {
  CHUNKFT_DISPATCH(linear_forward, x, batch, in_dim, w, out_dim, bias, y);
}

void linear_dinput(const double* dy, int batch, int out_dim, const double* w,
                   int in_dim, double* dx) {
  CHUNKFT_DISPATCH(linear_dinput, dy, batch, out_dim, w, in_dim, dx);
}

void linear_dweight(const double* dy, int batch, int out_dim, const double* x,
                    int in_dim, int64_t row_begin, int64_t row_end, double* dw) {
  CHUNKFT_DISPATCH(linear_dweight, dy, batch, out_dim, x, in_dim, row_begin, row_end, dw);
}

void linear_dbias(const double* dy, int batch, int out_dim, int64_t row_begin,
                  int64_t row_end, double* db) {
  CHUNKFT_DISPATCH(linear_dbias, dy, batch, out_dim, row_begin, row_end, db);
}

void embedding_gather(const double* table, int dim, const int* tokens,
                      int positions, double* y) {
  CHUNKFT_DISPATCH(embedding_gather, table, dim, tokens, positions, y);
}

int64_t embedding_scatter(const double* dy, int dim, const int* tokens,
                          int positions, int64_t row_begin, int64_t row_end,
                          double* dtable) {
  CHUNKFT_DISPATCH(embedding_scatter, dy, dim, tokens, positions, row_begin, row_end, dtable);
}

void layernorm_forward(const double* x, int batch, int dim, const double* gamma,
                       const double* beta, double eps, double* y, double* mean,
                       double* inv_std) {
  CHUNKFT_DISPATCH(layernorm_forward, x, batch, dim, gamma, beta, eps, y, mean, inv_std);
}

void layernorm_dinput(const double* dy, const double* x, const double* mean,
                      const double* inv_std, const double* gamma, int batch,
                      int dim, double* dx) {
  CHUNKFT_DISPATCH(layernorm_dinput, dy, x, mean, inv_std, gamma, batch, dim, dx);
}

void layernorm_dgamma(const double* dy, const double* x, const double* mean,
                      const double* inv_std, int batch, int dim,
                      int64_t row_begin, int64_t row_end, double* dgamma) {
  CHUNKFT_DISPATCH(layernorm_dgamma, dy, x, mean, inv_std, batch, dim, row_begin, row_end, dgamma);
}

void layernorm_dbeta(const double* dy, int batch, int dim, int64_t row_begin,
                     int64_t row_end, double* dbeta) {
  CHUNKFT_DISPATCH(layernorm_dbeta, dy, batch, dim, row_begin, row_end, dbeta);
}

void tanh_forward(const double* x, int64_t n, double* y) {
  CHUNKFT_DISPATCH(tanh_forward, x, n, y);
}

void tanh_dinput(const double* dy, const double* y, int64_t n, double* dx) {
  CHUNKFT_DISPATCH(tanh_dinput, dy, y, n, dx);
}

#undef CHUNKFT_DISPATCH

}  // namespace chunkft::kernels
