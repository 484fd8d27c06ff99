// SPDX-License-Identifier: Apache-2.0

#include "chunkft/optimizer.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace chunkft {

void AdamWHyper::validate() const {
  if (eta <= 0.0) throw Error("optimizer: eta must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0) throw Error("optimizer: beta1 must be in [0,1)");
  if (beta2 < 0.0 || beta2 >= 1.0) throw Error("optimizer: beta2 must be in [0,1)");
  if (epsilon <= 0.0) throw Error("optimizer: epsilon must be positive");
  if (weight_decay < 0.0) throw Error("optimizer: weight_decay must be non-negative");
}

namespace {

// Walks a chunk's slices in plan order together with the flat state offset.
template <class Fn>
void for_each_slice(const ChunkPlan& plan, int chunk_index, const Model& model, Fn&& fn) {
  int64_t off = 0;
  for (const SliceRef& s : plan.chunks.at(chunk_index).slices) {
    const ParamTensor& t = model.tensor(s.tensor_id);
    const int64_t count = s.row_count() * t.cols;
    fn(s, t, off, count);
    off += count;
  }
}

constexpr char kCheckpointMagic[4] = {'C', 'K', 'F', 'T'};
constexpr uint32_t kCheckpointVersion = 1;

void put_bytes(std::vector<uint8_t>& out, const void* p, size_t n) {
  const auto* b = static_cast<const uint8_t*>(p);
  out.insert(out.end(), b, b + n);
}

// Serialized payload shared by the host blob and the checkpoint body:
// n (u64), elements (i64), then master, m, v as raw doubles. Host byte order
// is little-endian on every supported target; asserted in checkpoint I/O.
std::vector<uint8_t> serialize_states(const ChunkStates& s) {
  std::vector<uint8_t> blob;
  blob.reserve(16 + 3 * sizeof(double) * static_cast<size_t>(s.elements));
  put_bytes(blob, &s.n, sizeof(s.n));
  put_bytes(blob, &s.elements, sizeof(s.elements));
  put_bytes(blob, s.master.data(), sizeof(double) * s.master.size());
  put_bytes(blob, s.m.data(), sizeof(double) * s.m.size());
  put_bytes(blob, s.v.data(), sizeof(double) * s.v.size());
  return blob;
}

void deserialize_states(const std::vector<uint8_t>& blob, ChunkStates& s) {
  if (blob.size() < 16) throw Error("chunk state blob truncated");
  std::memcpy(&s.n, blob.data(), sizeof(s.n));
  int64_t elements = 0;
  std::memcpy(&elements, blob.data() + 8, sizeof(elements));
  const size_t expect = 16 + 3 * sizeof(double) * static_cast<size_t>(elements);
  if (blob.size() != expect) throw Error("chunk state blob size mismatch");
  s.elements = elements;
  s.master.resize(static_cast<size_t>(elements));
  s.m.resize(static_cast<size_t>(elements));
  s.v.resize(static_cast<size_t>(elements));
  const uint8_t* p = blob.data() + 16;
  std::memcpy(s.master.data(), p, sizeof(double) * s.master.size());
  p += sizeof(double) * s.master.size();
  std::memcpy(s.m.data(), p, sizeof(double) * s.m.size());
  p += sizeof(double) * s.m.size();
  std::memcpy(s.v.data(), p, sizeof(double) * s.v.size());
}

}  // namespace

ChunkStates init_chunk_states(const ChunkPlan& plan, int chunk_index, const Model& model) {
  ChunkStates s;
  s.chunk_index = chunk_index;
  s.elements = plan.chunk_elements(chunk_index);
  s.master.assign(static_cast<size_t>(s.elements), 0.0);
  s.m.assign(static_cast<size_t>(s.elements), 0.0);
  s.v.assign(static_cast<size_t>(s.elements), 0.0);
  for_each_slice(plan, chunk_index, model,
                 [&](const SliceRef& sl, const ParamTensor& t, int64_t off, int64_t count) {
                   std::memcpy(s.master.data() + off, t.row(static_cast<int>(sl.row_begin)),
                               sizeof(double) * static_cast<size_t>(count));
                 });
  s.tier = Tier::device;
  offload_to_host(s);
  return s;
}

std::vector<ChunkStates> init_all_chunk_states(const ChunkPlan& plan, const Model& model) {
  std::vector<ChunkStates> all;
  all.reserve(plan.K());
  for (int k = 0; k < plan.K(); ++k) all.push_back(init_chunk_states(plan, k, model));
  return all;
}

void offload_to_host(ChunkStates& s) {
  if (s.tier == Tier::host) throw Error("offload: chunk already on host tier");
  if (s.accum_count != 0) throw Error("offload: gradient accumulation still pending");
  s.host_blob = serialize_states(s);
  s.master.clear();
  s.master.shrink_to_fit();
  s.m.clear();
  s.m.shrink_to_fit();
  s.v.clear();
  s.v.shrink_to_fit();
  s.accum.clear();
  s.accum.shrink_to_fit();
  s.tier = Tier::host;
}

void load_to_device(ChunkStates& s) {
  if (s.tier == Tier::device) throw Error("load: chunk already on device tier");
  deserialize_states(s.host_blob, s);
  s.host_blob.clear();
  s.host_blob.shrink_to_fit();
  s.tier = Tier::device;
}

void write_back(const ChunkStates& s, const ChunkPlan& plan, Model& model) {
  if (s.tier != Tier::device) throw Error("write_back: chunk not on device tier");
  for_each_slice(plan, s.chunk_index, model,
                 [&](const SliceRef& sl, const ParamTensor& t, int64_t off, int64_t count) {
                   std::memcpy(model.tensor(sl.tensor_id).row(static_cast<int>(sl.row_begin)),
                               s.master.data() + off,
                               sizeof(double) * static_cast<size_t>(count));
                 });
}

void accumulate_grad(ChunkStates& s, const ChunkPlan& plan, const GradBag& bag) {
  if (s.tier != Tier::device) throw Error("accumulate: chunk not on device tier");
  if (s.accum.empty()) s.accum.assign(static_cast<size_t>(s.elements), 0.0);
  int64_t off = 0;
  for (const SliceRef& sl : plan.chunks.at(s.chunk_index).slices) {
    const Matrix* g = bag.find(sl.tensor_id, sl.row_begin, sl.row_end);
    if (!g) throw Error("accumulate: gradient bag does not match the chunk's slices");
    for (size_t i = 0; i < g->data.size(); ++i) s.accum[static_cast<size_t>(off) + i] += g->data[i];
    off += static_cast<int64_t>(g->data.size());
  }
  if (off != s.elements) throw Error("accumulate: gradient bag does not match the chunk's slices");
  s.accum_count += 1;
}

std::vector<double> take_mean_grad(ChunkStates& s) {
  if (s.accum_count == 0) throw Error("take_mean_grad: nothing accumulated");
  std::vector<double> mean = std::move(s.accum);
  const double inv = 1.0 / s.accum_count;
  for (auto& v : mean) v *= inv;
  s.accum = {};
  s.accum_count = 0;
  return mean;
}

void clear_accum(ChunkStates& s) {
  s.accum.clear();
  s.accum_count = 0;
}

void adamw_chunk_step(ChunkStates& s, const std::vector<double>& grad,
                      const AdamWHyper& hyper, const ChunkPlan& plan, Model& model) {
  if (s.tier != Tier::device) throw Error("step: chunk not on device tier");
  if (static_cast<int64_t>(grad.size()) != s.elements)
    throw Error("step: gradient length does not match chunk");
  hyper.validate();
  for (size_t i = 0; i < grad.size(); ++i)
    if (!std::isfinite(grad[i]))
      throw Error("step: non-finite gradient at element " + std::to_string(i) +
                  " (chunk " + std::to_string(s.chunk_index) + ", local step " +
                  std::to_string(s.n + 1) + ")");

  s.n += 1;
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(s.n));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(s.n));
  double pmin = 0.0, pmax = 0.0;
  for (size_t i = 0; i < grad.size(); ++i) {
    const double g = grad[i];
    s.m[i] = hyper.beta1 * s.m[i] + (1.0 - hyper.beta1) * g;
    s.v[i] = hyper.beta2 * s.v[i] + (1.0 - hyper.beta2) * g * g;
    const double mhat = s.m[i] / bc1;
    const double vhat = s.v[i] / bc2;
    const double denom = std::sqrt(vhat) + hyper.epsilon;
    s.master[i] -= hyper.eta * (mhat / denom + hyper.weight_decay * s.master[i]);
    const double precond = 1.0 / denom;  // diagnostics only, never in the update path
    if (i == 0) {
      pmin = pmax = precond;
    } else {
      pmin = std::min(pmin, precond);
      pmax = std::max(pmax, precond);
    }
  }
  s.last_precond_min = pmin;
  s.last_precond_max = pmax;
  write_back(s, plan, model);
}

void sgd_chunk_step(ChunkStates& s, const std::vector<double>& grad, double eta,
                    const ChunkPlan& plan, Model& model) {
  if (s.tier != Tier::device) throw Error("step: chunk not on device tier");
  if (static_cast<int64_t>(grad.size()) != s.elements)
    throw Error("step: gradient length does not match chunk");
  s.n += 1;
  for (size_t i = 0; i < grad.size(); ++i) s.master[i] -= eta * grad[i];
  write_back(s, plan, model);
}

void write_chunk_checkpoint(const ChunkStates& s, uint64_t plan_hash,
                            const std::filesystem::path& path) {
  static_assert(std::endian::native == std::endian::little,
                "checkpoint format assumes a little-endian host");
  if (s.tier != Tier::host) throw Error("checkpoint: flush chunk to host tier first");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("checkpoint: cannot open '" + path.string() + "' for writing");
  out.write(kCheckpointMagic, 4);
  out.write(reinterpret_cast<const char*>(&kCheckpointVersion), 4);
  out.write(reinterpret_cast<const char*>(&plan_hash), 8);
  int32_t chunk = s.chunk_index;
  out.write(reinterpret_cast<const char*>(&chunk), 4);
  out.write(reinterpret_cast<const char*>(s.host_blob.data()),
            static_cast<std::streamsize>(s.host_blob.size()));
  if (!out) throw Error("checkpoint: write failed for '" + path.string() + "'");
}

ChunkStates read_chunk_checkpoint(const std::filesystem::path& path,
                                  uint64_t expected_plan_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("checkpoint: cannot open '" + path.string() + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw Error("checkpoint: bad magic in '" + path.string() + "'");
  uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  if (version != kCheckpointVersion) throw Error("checkpoint: unsupported version");
  uint64_t hash = 0;
  in.read(reinterpret_cast<char*>(&hash), 8);
  if (hash != expected_plan_hash)
    throw Error("checkpoint: plan hash mismatch (checkpoint belongs to a different plan)");
  int32_t chunk = -1;
  in.read(reinterpret_cast<char*>(&chunk), 4);
  ChunkStates s;
  s.chunk_index = chunk;
  s.tier = Tier::host;
  s.host_blob.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  if (s.host_blob.size() < 16) throw Error("checkpoint: truncated payload");
  std::memcpy(&s.elements, s.host_blob.data() + 8, sizeof(s.elements));
  return s;
}

}  // namespace chunkft
