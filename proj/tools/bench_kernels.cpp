// SPDX-License-Identifier: Apache-2.0
// Compares the serial and OpenMP kernel backends on the shapes the training
// loop actually hits. Times are medians over repeated runs; the two backends
// must agree bit-for-bit, which is asserted before timing.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <random>
#include <string>
#include <vector>

#include "chunkft/kernels.hpp"

namespace {

using chunkft::kernels::Backend;

double median_ms(const std::vector<double>& samples) {
  std::vector<double> s = samples;
  std::sort(s.begin(), s.end());
  return s[s.size() / 2];
}

template <class Fn>
double time_ms(Fn&& fn, int reps) {
  std::vector<double> samples;
  samples.reserve(static_cast<size_t>(reps));
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    samples.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return median_ms(samples);
}

void fill(std::vector<double>& v, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& x : v) x = u(rng);
}

struct Row {
  std::string name;
  double serial_ms = 0.0;
  double omp_ms = 0.0;
  bool identical = false;
};

void print_row(const Row& r) {
  std::printf("%-22s %10.3f %10.3f %8.2fx   %s\n", r.name.c_str(), r.serial_ms, r.omp_ms,
              r.omp_ms > 0.0 ? r.serial_ms / r.omp_ms : 0.0,
              r.identical ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  int reps = 7;
  int scale = 1;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--reps") == 0 && i + 1 < argc) reps = std::atoi(argv[++i]);
    if (std::strcmp(argv[i], "--scale") == 0 && i + 1 < argc) scale = std::atoi(argv[++i]);
  }
  if (reps < 1) reps = 1;
  if (scale < 1) scale = 1;

  std::printf("threads available: %d (openmp %s)\n", chunkft::kernels::openmp_max_threads(),
              chunkft::kernels::openmp_compiled_in() ? "on" : "off");
  std::printf("%-22s %10s %10s %9s\n", "kernel", "serial ms", "omp ms", "speedup");

  std::mt19937_64 rng(42);
  const int batch = 64 * scale;
  const int in_dim = 256;
  const int out_dim = 256;

  std::vector<double> x(static_cast<size_t>(batch) * in_dim);
  std::vector<double> w(static_cast<size_t>(out_dim) * in_dim);
  std::vector<double> bias(static_cast<size_t>(out_dim));
  std::vector<double> dy(static_cast<size_t>(batch) * out_dim);
  fill(x, rng);
  fill(w, rng);
  fill(bias, rng);
  fill(dy, rng);

  std::vector<double> out_a(static_cast<size_t>(batch) * out_dim);
  std::vector<double> out_b(out_a.size());

  auto bench = [&](const std::string& name, auto&& fn, std::vector<double>& a,
                   std::vector<double>& b) {
    Row row;
    row.name = name;
    chunkft::kernels::set_backend(Backend::serial);
    std::fill(a.begin(), a.end(), 0.0);
    fn(a.data());
    row.serial_ms = time_ms([&] { fn(a.data()); }, reps);
    chunkft::kernels::set_backend(Backend::openmp);
    std::fill(b.begin(), b.end(), 0.0);
    fn(b.data());
    row.omp_ms = time_ms([&] { fn(b.data()); }, reps);
    row.identical = std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
    print_row(row);
    return row.identical;
  };

  bool all_ok = true;

  all_ok &= bench(
      "linear_forward",
      [&](double* out) {
        chunkft::kernels::linear_forward(x.data(), batch, in_dim, w.data(), out_dim,
                                         bias.data(), out);
      },
      out_a, out_b);

  {
    std::vector<double> dx_a(x.size()), dx_b(x.size());
    all_ok &= bench(
        "linear_dinput",
        [&](double* out) {
          std::fill(out, out + x.size(), 0.0);
          chunkft::kernels::linear_dinput(dy.data(), batch, out_dim, w.data(), in_dim, out);
        },
        dx_a, dx_b);
  }
  {
    std::vector<double> dw_a(w.size()), dw_b(w.size());
    all_ok &= bench(
        "linear_dweight",
        [&](double* out) {
          std::fill(out, out + w.size(), 0.0);
          chunkft::kernels::linear_dweight(dy.data(), batch, out_dim, x.data(), in_dim, 0,
                                           out_dim, out);
        },
        dw_a, dw_b);
  }
  {
    const int vocab = 4096;
    const int dim = 128;
    const int positions = 8192 * scale;
    std::vector<double> table(static_cast<size_t>(vocab) * dim);
    fill(table, rng);
    std::vector<int> tokens(static_cast<size_t>(positions));
    std::uniform_int_distribution<int> tok(0, vocab - 1);
    for (int& t : tokens) t = tok(rng);
    std::vector<double> gy(static_cast<size_t>(positions) * dim);
    fill(gy, rng);
    std::vector<double> ga(static_cast<size_t>(positions) * dim), gb(ga.size());
    all_ok &= bench(
        "embedding_gather",
        [&](double* out) {
          chunkft::kernels::embedding_gather(table.data(), dim, tokens.data(), positions, out);
        },
        ga, gb);
    std::vector<double> ta(table.size()), tb(table.size());
    all_ok &= bench(
        "embedding_scatter",
        [&](double* out) {
          std::fill(out, out + table.size(), 0.0);
          chunkft::kernels::embedding_scatter(gy.data(), dim, tokens.data(), positions, 0,
                                              vocab, out);
        },
        ta, tb);
  }
  {
    const int dim = 512;
    std::vector<double> gamma(static_cast<size_t>(dim)), beta(static_cast<size_t>(dim));
    fill(gamma, rng);
    fill(beta, rng);
    std::vector<double> xin(static_cast<size_t>(batch) * dim);
    fill(xin, rng);
    std::vector<double> ya(xin.size()), yb(xin.size());
    std::vector<double> mean(static_cast<size_t>(batch)), inv_std(static_cast<size_t>(batch));
    all_ok &= bench(
        "layernorm_forward",
        [&](double* out) {
          chunkft::kernels::layernorm_forward(xin.data(), batch, dim, gamma.data(),
                                              beta.data(), 1e-5, out, mean.data(),
                                              inv_std.data());
        },
        ya, yb);
  }
  {
    std::vector<double> big(static_cast<size_t>(1 << 22) * scale);
    fill(big, rng);
    std::vector<double> ta(big.size()), tb(big.size());
    all_ok &= bench(
        "tanh_forward",
        [&](double* out) {
          chunkft::kernels::tanh_forward(big.data(), static_cast<int64_t>(big.size()), out);
        },
        ta, tb);
  }

  chunkft::kernels::set_backend(chunkft::kernels::openmp_compiled_in() ? Backend::openmp
                                                                       : Backend::serial);
  if (!all_ok) {
    std::printf("backend mismatch detected\n");
    return 1;
  }
  return 0;
}
