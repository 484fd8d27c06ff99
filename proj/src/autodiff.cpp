// SPDX-License-Identifier: Apache-2.0

#include "chunkft/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace chunkft {

namespace {
GradAllocationLog g_alloc_log;
}

GradAllocationLog& grad_allocation_log() { return g_alloc_log; }
void reset_grad_allocation_log() { g_alloc_log = GradAllocationLog{}; }

GradBag GradBag::allocate(const ActiveMask& mask, const Model& model) {
  ActiveMask sorted = mask;
  sorted.validate(model.tensors());
  GradBag bag;
  for (const SliceRef& s : sorted.slices) {
    const ParamTensor& t = model.tensor(s.tensor_id);
    Entry e;
    e.slice = s;
    e.grad = Matrix(static_cast<int>(s.row_count()), t.cols);
    g_alloc_log.bytes += s.row_count() * t.cols * kGradBytesPerElement;
    g_alloc_log.buffers += 1;
    bag.entries_.push_back(std::move(e));
  }
  return bag;
}

std::vector<GradBag::Entry*> GradBag::entries_for(int tensor_id) {
  std::vector<Entry*> out;
  for (auto& e : entries_)
    if (e.slice.tensor_id == tensor_id) out.push_back(&e);
  return out;
}

const Matrix* GradBag::find(int tensor_id, int64_t row_begin, int64_t row_end) const {
  for (const auto& e : entries_)
    if (e.slice.tensor_id == tensor_id && e.slice.row_begin == row_begin &&
        e.slice.row_end == row_end)
      return &e.grad;
  return nullptr;
}

int64_t GradBag::total_elements() const {
  int64_t n = 0;
  for (const auto& e : entries_) n += static_cast<int64_t>(e.grad.size());
  return n;
}

double GradBag::norm_sq() const {
  double acc = 0.0;
  for (const auto& e : entries_)
    for (double v : e.grad.data) acc += v * v;
  return acc;
}

std::vector<double> GradBag::flatten() const {
  std::vector<double> flat;
  flat.reserve(static_cast<size_t>(total_elements()));
  for (const auto& e : entries_)
    flat.insert(flat.end(), e.grad.data.begin(), e.grad.data.end());
  return flat;
}

namespace {

void add_into(Matrix& dst, const Matrix& src) {
  for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

RowRange entry_range(const GradBag::Entry* e) {
  return RowRange{e->slice.row_begin, e->slice.row_end};
}

struct LinearNode : TapeNode {
  ops::LinearCtx ctx;
  int weight_id = -1;
  int bias_id = -1;

  Matrix backward(const Matrix& dy, GradBag& bag, ops::FlopCounter* flops) const override {
    auto wslices = bag.entries_for(weight_id);
    auto bslices = bias_id >= 0 ? bag.entries_for(bias_id)
                                : std::vector<GradBag::Entry*>{};
    std::optional<RowRange> w0 = wslices.empty() ? std::nullopt
                                                 : std::optional<RowRange>(entry_range(wslices[0]));
    std::optional<RowRange> b0 = bslices.empty() ? std::nullopt
                                                 : std::optional<RowRange>(entry_range(bslices[0]));
    ops::LinearGrads g = ops::linear_backward_chunked(ctx, dy, w0, b0, flops);
    if (g.dw) add_into(wslices[0]->grad, *g.dw);
    if (g.db) add_into(bslices[0]->grad, *g.db);
    // Hand-built masks may split one tensor into several slices; chunk plans
    // never do. The duplicate dx computed here is discarded.
    for (size_t i = 1; i < wslices.size(); ++i) {
      auto extra = ops::linear_backward_chunked(ctx, dy, entry_range(wslices[i]), std::nullopt, flops);
      add_into(wslices[i]->grad, *extra.dw);
    }
    for (size_t i = 1; i < bslices.size(); ++i) {
      auto extra = ops::linear_backward_chunked(ctx, dy, std::nullopt, entry_range(bslices[i]), flops);
      add_into(bslices[i]->grad, *extra.db);
    }
    return g.dx;
  }

  int64_t dense_param_grad_macs() const override {
    const int64_t batch = ctx.x.rows;
    int64_t macs = static_cast<int64_t>(ctx.weight->rows) * ctx.weight->cols * batch;
    if (ctx.bias) macs += static_cast<int64_t>(ctx.bias->rows) * batch;
    return macs;
  }
};

struct EmbeddingNode : TapeNode {
  ops::EmbeddingCtx ctx;
  int table_id = -1;
  int out_rows = 0;  // batch
  int out_cols = 0;  // seq*dim

  Matrix backward(const Matrix& dy, GradBag& bag, ops::FlopCounter* flops) const override {
    // dy arrives as batch x (seq*dim); the table sees it as positions x dim.
    Matrix dy_pos = dy;
    dy_pos.rows = static_cast<int>(ctx.tokens.size());
    dy_pos.cols = ctx.table->cols;
    for (auto* e : bag.entries_for(table_id)) {
      auto g = ops::embedding_backward_chunked(ctx, dy_pos, entry_range(e), flops);
      add_into(e->grad, *g.dtable);
    }
    return Matrix();  // source node: no input gradient
  }

  int64_t dense_param_grad_macs() const override {
    return static_cast<int64_t>(ctx.tokens.size()) * ctx.table->cols;
  }
};

struct LayerNormNode : TapeNode {
  ops::LayerNormCtx ctx;
  int gamma_id = -1;
  int beta_id = -1;

  Matrix backward(const Matrix& dy, GradBag& bag, ops::FlopCounter* flops) const override {
    auto gslices = bag.entries_for(gamma_id);
    auto bslices = bag.entries_for(beta_id);
    std::optional<RowRange> g0 = gslices.empty() ? std::nullopt
                                                 : std::optional<RowRange>(entry_range(gslices[0]));
    std::optional<RowRange> b0 = bslices.empty() ? std::nullopt
                                                 : std::optional<RowRange>(entry_range(bslices[0]));
    ops::LayerNormGrads g = ops::layernorm_backward_chunked(ctx, dy, g0, b0, flops);
    if (g.dgamma) add_into(gslices[0]->grad, *g.dgamma);
    if (g.dbeta) add_into(bslices[0]->grad, *g.dbeta);
    for (size_t i = 1; i < gslices.size(); ++i) {
      auto extra = ops::layernorm_backward_chunked(ctx, dy, entry_range(gslices[i]), std::nullopt, flops);
      add_into(gslices[i]->grad, *extra.dgamma);
    }
    for (size_t i = 1; i < bslices.size(); ++i) {
      auto extra = ops::layernorm_backward_chunked(ctx, dy, std::nullopt, entry_range(bslices[i]), flops);
      add_into(bslices[i]->grad, *extra.dbeta);
    }
    return g.dx;
  }

  int64_t dense_param_grad_macs() const override {
    return 2 * static_cast<int64_t>(ctx.gamma->rows) * ctx.x.rows;
  }
};

struct TanhNode : TapeNode {
  Matrix y;  // saved output

  Matrix backward(const Matrix& dy, GradBag&, ops::FlopCounter*) const override {
    return ops::tanh_backward(dy, y);
  }
};

}  // namespace

LossResult eval_loss(LossKind kind, const Matrix& y, const Batch& batch) {
  LossResult r;
  r.dy = Matrix(y.rows, y.cols);
  switch (kind) {
    case LossKind::sum: {
      double acc = 0.0;
      for (double v : y.data) acc += v;
      r.value = acc;
      for (auto& v : r.dy.data) v = 1.0;
      break;
    }
    case LossKind::squared:
    case LossKind::half_sq: {
      if (!y.same_shape(batch.target)) throw Error("loss: target shape mismatch");
      const double scale = kind == LossKind::squared ? 1.0 : 0.5;
      double acc = 0.0;
      for (size_t i = 0; i < y.data.size(); ++i) {
        const double d = y.data[i] - batch.target.data[i];
        acc += d * d;
      }
      r.value = scale * acc;
      for (size_t i = 0; i < y.data.size(); ++i)
        r.dy.data[i] = 2.0 * scale * (y.data[i] - batch.target.data[i]);
      break;
    }
    case LossKind::softmax_ce: {
      if (static_cast<int>(batch.labels.size()) != y.rows)
        throw Error("loss: label count mismatch");
      const double inv_b = 1.0 / y.rows;
      double acc = 0.0;
      for (int b = 0; b < y.rows; ++b) {
        const int label = batch.labels[b];
        if (label < 0 || label >= y.cols) throw Error("loss: label out of range");
        double mx = y.at(b, 0);
        for (int c = 1; c < y.cols; ++c) mx = std::max(mx, y.at(b, c));
        double z = 0.0;
        for (int c = 0; c < y.cols; ++c) z += std::exp(y.at(b, c) - mx);
        acc += -(y.at(b, label) - mx - std::log(z));
        for (int c = 0; c < y.cols; ++c) {
          const double p = std::exp(y.at(b, c) - mx) / z;
          r.dy.at(b, c) = (p - (c == label ? 1.0 : 0.0)) * inv_b;
        }
      }
      r.value = acc * inv_b;
      break;
    }
  }
  return r;
}

Tape::Tape(const Model* model, double loss, Matrix output, Matrix loss_dy,
           std::vector<std::unique_ptr<TapeNode>> nodes, int batch_size)
    : model_(model), loss_(loss), output_(std::move(output)), loss_dy_(std::move(loss_dy)),
      nodes_(std::move(nodes)), batch_size_(batch_size) {}

Tape forward(const Model& model, const Batch& batch) {
  if (model.layers().empty()) throw Error("forward: model has no layers");
  std::vector<std::unique_ptr<TapeNode>> nodes;
  Matrix cur;
  bool have_input = false;

  for (size_t li = 0; li < model.layers().size(); ++li) {
    const Layer& layer = model.layers()[li];
    if (const auto* emb = std::get_if<EmbeddingLayer>(&layer)) {
      if (li != 0) throw Error("forward: embedding must be the first layer");
      auto node = std::make_unique<EmbeddingNode>();
      node->ctx.table = &model.tensor(emb->table_id);
      node->ctx.tokens = batch.tokens;
      node->table_id = emb->table_id;
      if (batch.token_batch <= 0) throw Error("forward: token batch required");
      if (static_cast<int>(batch.tokens.size()) != batch.token_batch * emb->seq)
        throw Error("forward: token count does not match batch*seq");
      Matrix y = ops::embedding_forward(node->ctx);
      // reshape positions x dim -> batch x (seq*dim)
      y.rows = batch.token_batch;
      y.cols = emb->seq * emb->dim;
      node->out_rows = y.rows;
      node->out_cols = y.cols;
      cur = std::move(y);
      have_input = true;
      nodes.push_back(std::move(node));
    } else if (const auto* lin = std::get_if<LinearLayer>(&layer)) {
      if (!have_input) {
        cur = batch.x;
        have_input = true;
      }
      if (cur.cols != lin->in_dim) throw Error("forward: linear input width mismatch");
      auto node = std::make_unique<LinearNode>();
      node->ctx.weight = &model.tensor(lin->weight_id);
      node->ctx.bias = lin->bias_id >= 0 ? &model.tensor(lin->bias_id) : nullptr;
      node->ctx.x = cur;
      node->weight_id = lin->weight_id;
      node->bias_id = lin->bias_id;
      cur = ops::linear_forward(node->ctx);
      nodes.push_back(std::move(node));
    } else if (const auto* ln = std::get_if<LayerNormLayer>(&layer)) {
      if (!have_input) {
        cur = batch.x;
        have_input = true;
      }
      if (cur.cols != ln->dim) throw Error("forward: layernorm width mismatch");
      auto node = std::make_unique<LayerNormNode>();
      node->ctx.gamma = &model.tensor(ln->gamma_id);
      node->ctx.beta = &model.tensor(ln->beta_id);
      node->ctx.epsilon = ln->epsilon;
      node->ctx.x = cur;
      node->gamma_id = ln->gamma_id;
      node->beta_id = ln->beta_id;
      cur = ops::layernorm_forward(node->ctx);
      nodes.push_back(std::move(node));
    } else if (std::get_if<TanhLayer>(&layer)) {
      if (!have_input) {
        cur = batch.x;
        have_input = true;
      }
      auto node = std::make_unique<TanhNode>();
      cur = ops::tanh_forward(cur);
      node->y = cur;
      nodes.push_back(std::move(node));
    }
  }

  LossResult loss = eval_loss(model.loss, cur, batch);
  const int bs = batch.size();
  return Tape(&model, loss.value, std::move(cur), std::move(loss.dy), std::move(nodes), bs);
}

GradBag Tape::backward_chunked(const ActiveMask& mask, ops::FlopCounter* flops) const {
  GradBag bag = GradBag::allocate(mask, *model_);
  Matrix dy = loss_dy_;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
    dy = (*it)->backward(dy, bag, flops);
  return bag;
}

ActiveMask Tape::full_mask() const {
  ActiveMask mask;
  for (const auto& t : model_->tensors())
    if (t.trainable) mask.slices.push_back(SliceRef{t.id, 0, t.rows});
  return mask;
}

GradBag Tape::backward_dense(ops::FlopCounter* flops) const {
  return backward_chunked(full_mask(), flops);
}

int64_t Tape::dense_param_grad_macs() const {
  int64_t macs = 0;
  for (const auto& n : nodes_) macs += n->dense_param_grad_macs();
  return macs;
}

double finite_difference_grad(Model& model, const Batch& batch, int tensor_id,
                              int64_t flat_index, double h) {
  ParamTensor& t = model.tensor(tensor_id);
  const double saved = t.values[static_cast<size_t>(flat_index)];
  t.values[static_cast<size_t>(flat_index)] = saved + h;
  const double up = forward(model, batch).loss_value();
  t.values[static_cast<size_t>(flat_index)] = saved - h;
  const double down = forward(model, batch).loss_value();
  t.values[static_cast<size_t>(flat_index)] = saved;
  return (up - down) / (2.0 * h);
}

}  // namespace chunkft
