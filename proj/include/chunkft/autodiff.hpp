// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "chunkft/matrix.hpp"
#include "chunkft/model.hpp"
#include "chunkft/ops.hpp"
#include "chunkft/tensor.hpp"

namespace chunkft {

// Every gradient buffer allocation for parameter slices is recorded here, so
// tests (and the accounting layer) can assert that a chunked backward never
// allocates storage for rows outside the active mask. Buffers are accounted
// at 4 bytes per element to match the planner's gradient width.
struct GradAllocationLog {
  int64_t bytes = 0;
  int64_t buffers = 0;
};
GradAllocationLog& grad_allocation_log();
void reset_grad_allocation_log();
inline constexpr int kGradBytesPerElement = 4;

// Gradients for exactly the slices of one active mask, nothing more. Entry
// order is the mask's canonical order: (tensor id, row_begin) ascending.
class GradBag {
 public:
  struct Entry {
    SliceRef slice;
    Matrix grad;  // slice rows x tensor cols
  };

  GradBag() = default;
  static GradBag allocate(const ActiveMask& mask, const Model& model);

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  std::vector<Entry*> entries_for(int tensor_id);
  const Matrix* find(int tensor_id, int64_t row_begin, int64_t row_end) const;

  int64_t total_elements() const;
  double norm_sq() const;                // fixed entry order, serial
  std::vector<double> flatten() const;   // entries concatenated in order

 private:
  std::vector<Entry> entries_;
};

class TapeNode {
 public:
  virtual ~TapeNode() = default;
  // Consumes the gradient of the loss w.r.t. this node's output, adds any
  // requested parameter-gradient slices into the bag, and returns the
  // gradient w.r.t. the node's input (empty for source nodes). Activation
  // gradients are always computed in full; the bag only gates parameter rows.
  virtual Matrix backward(const Matrix& dy, GradBag& bag, ops::FlopCounter* flops) const = 0;
  // Parameter-gradient multiply-accumulates a full (unmasked) backward of
  // this node would perform.
  virtual int64_t dense_param_grad_macs() const { return 0; }
};

struct LossResult {
  double value = 0.0;
  Matrix dy;  // dL/d(final activations)
};

LossResult eval_loss(LossKind kind, const Matrix& y, const Batch& batch);

// Record of one forward pass. Borrows the model: keep it alive and structurally
// unchanged, and run backward before any parameter update touches the values
// the forward saw.
class Tape {
 public:
  Tape(const Model* model, double loss, Matrix output, Matrix loss_dy,
       std::vector<std::unique_ptr<TapeNode>> nodes, int batch_size);

  double loss_value() const { return loss_; }
  const Matrix& output() const { return output_; }
  int batch_size() const { return batch_size_; }

  // Materializes parameter gradients only for the mask's slices. Allocation
  // for those buffers is slice_elements * 4 bytes, recorded in the
  // allocation log. Accumulation order per element is independent of the
  // mask, so any slice equals the same rows of a dense backward bit for bit.
  GradBag backward_chunked(const ActiveMask& mask, ops::FlopCounter* flops = nullptr) const;

  // Full-mask backward through the identical code path.
  GradBag backward_dense(ops::FlopCounter* flops = nullptr) const;

  ActiveMask full_mask() const;
  int64_t dense_param_grad_macs() const;

 private:
  const Model* model_;
  double loss_ = 0.0;
  Matrix output_;
  Matrix loss_dy_;
  std::vector<std::unique_ptr<TapeNode>> nodes_;
  int batch_size_ = 0;
};

Tape forward(const Model& model, const Batch& batch);

// Central-difference derivative of the loss w.r.t. one parameter element.
double finite_difference_grad(Model& model, const Batch& batch, int tensor_id,
                              int64_t flat_index, double h = 1e-5);

}  // namespace chunkft
