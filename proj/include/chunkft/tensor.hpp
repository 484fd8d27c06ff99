// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "chunkft/matrix.hpp"

namespace chunkft {

// A trainable 2-D parameter array. Slicing granularity is whole rows: a row of
// a weight matrix, one embedding vector, or a single element of a 1-D vector
// parameter (stored rows x 1).
struct ParamTensor {
  int id = -1;
  std::string name;
  int rows = 0;
  int cols = 1;
  int storage_precision = 2;  // bytes per stored element (2 or 4), accounting only
  int reg_order = 0;
  bool trainable = true;
  std::vector<double> values;  // row-major, rows*cols

  ParamTensor() = default;
  ParamTensor(int id_, std::string name_, int rows_, int cols_)
      : id(id_), name(std::move(name_)), rows(rows_), cols(cols_),
        values(static_cast<size_t>(rows_) * cols_, 0.0) {}

  int64_t elements() const { return static_cast<int64_t>(rows) * cols; }
  double* row(int r) { return values.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return values.data() + static_cast<size_t>(r) * cols; }
  double& at(int r, int c) { return values[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return values[static_cast<size_t>(r) * cols + c]; }
};

// Shape-and-bookkeeping view of a parameter, enough for planning and byte
// accounting without allocating values (used for virtual models too large to
// materialize).
struct TensorInfo {
  int id = -1;
  std::string name;
  int64_t rows = 0;
  int64_t cols = 1;
  int storage_precision = 2;
  int reg_order = 0;
  bool trainable = true;

  int64_t elements() const { return rows * cols; }
};

inline TensorInfo info_of(const ParamTensor& p) {
  return TensorInfo{p.id, p.name, p.rows, p.cols, p.storage_precision, p.reg_order, p.trainable};
}

struct RowRange {
  int64_t begin = 0;
  int64_t end = 0;  // exclusive
  int64_t count() const { return end - begin; }
};

// Half-open row interval of one tensor.
struct SliceRef {
  int tensor_id = -1;
  int64_t row_begin = 0;
  int64_t row_end = 0;  // exclusive

  int64_t row_count() const { return row_end - row_begin; }
  bool operator==(const SliceRef& o) const {
    return tensor_id == o.tensor_id && row_begin == o.row_begin && row_end == o.row_end;
  }
};

// The set of parameter slices whose gradients a backward pass materializes.
// Slices must be non-empty and pairwise disjoint per tensor.
struct ActiveMask {
  std::vector<SliceRef> slices;

  static ActiveMask single(int tensor_id, int64_t row_begin, int64_t row_end) {
    ActiveMask m;
    m.slices.push_back(SliceRef{tensor_id, row_begin, row_end});
    return m;
  }

  // Sorts by (tensor, row_begin) and checks disjointness and bounds against
  // the given tensors. Throws on overlap, empty slice, out-of-range rows, or
  // a reference to an unknown or non-trainable tensor.
  template <class TensorSeq>
  void validate(const TensorSeq& tensors) {
    std::sort(slices.begin(), slices.end(), [](const SliceRef& a, const SliceRef& b) {
      if (a.tensor_id != b.tensor_id) return a.tensor_id < b.tensor_id;
      return a.row_begin < b.row_begin;
    });
    for (size_t i = 0; i < slices.size(); ++i) {
      const SliceRef& s = slices[i];
      const auto* t = find_tensor(tensors, s.tensor_id);
      if (!t) throw Error("active mask references unknown tensor id " + std::to_string(s.tensor_id));
      if (!t->trainable)
        throw Error("active mask references non-trainable tensor '" + t->name + "'");
      if (s.row_begin < 0 || s.row_end > static_cast<int64_t>(t->rows) || s.row_begin >= s.row_end)
        throw Error("active mask slice out of range for tensor '" + t->name + "'");
      if (i > 0 && slices[i - 1].tensor_id == s.tensor_id &&
          slices[i - 1].row_end > s.row_begin)
        throw Error("active mask slices overlap on tensor '" + t->name + "'");
    }
  }

  int64_t total_rows() const {
    int64_t n = 0;
    for (const auto& s : slices) n += s.row_count();
    return n;
  }

 private:
  template <class TensorSeq>
  static auto find_tensor(const TensorSeq& tensors, int id) -> decltype(&tensors[0]) {
    for (const auto& t : tensors)
      if (t.id == id) return &t;
    return nullptr;
  }
};

}  // namespace chunkft
