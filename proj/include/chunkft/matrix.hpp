// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace chunkft {

struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Dense row-major matrix of doubles. All engine math runs in double; the
// half/single storage widths configured elsewhere only affect byte accounting.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<size_t>(r) * static_cast<size_t>(c), fill) {}

  static Matrix from(std::initializer_list<std::initializer_list<double>> vals) {
    Matrix m(static_cast<int>(vals.size()),
             vals.size() ? static_cast<int>(vals.begin()->size()) : 0);
    int r = 0;
    for (const auto& row : vals) {
      if (static_cast<int>(row.size()) != m.cols) throw Error("ragged initializer");
      int c = 0;
      for (double v : row) m.at(r, c++) = v;
      ++r;
    }
    return m;
  }

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
  double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }
  size_t size() const { return data.size(); }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

struct IntMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<int> data;

  IntMatrix() = default;
  IntMatrix(int r, int c, int fill = 0)
      : rows(r), cols(c), data(static_cast<size_t>(r) * static_cast<size_t>(c), fill) {}

  int& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  int at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
  size_t size() const { return data.size(); }
};

inline bool bitwise_equal(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) return false;
  if (a.data.empty()) return true;
  return std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

// Relative error with a denominator floor. With the default floor of 1.0 the
// check is relative for large values and absolute for small ones, which keeps
// near-zero gradient entries from blowing up the ratio.
inline double rel_err(double a, double b, double floor = 1.0) {
  double denom = std::max({std::fabs(a), std::fabs(b), floor});
  return std::fabs(a - b) / denom;
}

inline double max_rel_err(const Matrix& a, const Matrix& b, double floor = 1.0) {
  if (!a.same_shape(b)) throw Error("max_rel_err: shape mismatch");
  double worst = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i)
    worst = std::max(worst, rel_err(a.data[i], b.data[i], floor));
  return worst;
}

}  // namespace chunkft
