// SPDX-License-Identifier: Apache-2.0

#include "chunkft/partition.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace chunkft {

void CostPolicy::validate() const {
  auto check = [](int v, const char* name) {
    if (v <= 0) throw Error(std::string("cost policy: ") + name + " must be positive");
  };
  check(param_bytes, "param_bytes");
  check(grad_bytes, "grad_bytes");
  check(master_bytes, "master_bytes");
  check(moment1_bytes, "moment1_bytes");
  check(moment2_bytes, "moment2_bytes");
}

ByteCost estimate_byte_cost(const TensorInfo& info, const CostPolicy& policy) {
  policy.validate();
  ByteCost c;
  c.mutable_bytes = info.elements() * policy.mutable_bytes_per_element();
  c.resident_bytes = info.elements() * policy.param_bytes;
  return c;
}

ActiveMask ChunkPlan::mask_of(int chunk) const {
  if (chunk < 0 || chunk >= K()) throw Error("chunk index out of range");
  ActiveMask m;
  m.slices = chunks[chunk].slices;
  return m;
}

void ChunkPlan::validate(const std::vector<TensorInfo>& infos) const {
  if (chunks.empty()) throw Error("plan has no chunks");
  // rows covered per tensor, checked against shape
  struct Cover {
    int64_t rows = 0;
    std::vector<std::pair<int64_t, int64_t>> ranges;
  };
  std::vector<std::pair<int, Cover>> covers;
  auto cover_of = [&](int id) -> Cover& {
    for (auto& [tid, c] : covers)
      if (tid == id) return c;
    covers.push_back({id, Cover{}});
    return covers.back().second;
  };
  for (const auto& ch : chunks) {
    if (ch.slices.empty()) throw Error("plan contains an empty chunk");
    for (const auto& s : ch.slices) {
      if (s.row_begin >= s.row_end) throw Error("plan contains an empty slice");
      Cover& c = cover_of(s.tensor_id);
      c.rows += s.row_count();
      c.ranges.push_back({s.row_begin, s.row_end});
    }
  }
  for (const auto& info : infos) {
    if (!info.trainable) continue;
    Cover* c = nullptr;
    for (auto& [tid, cv] : covers)
      if (tid == info.id) c = &cv;
    if (!c || c->rows != info.rows)
      throw Error("plan does not cover tensor '" + info.name + "' exactly");
    std::sort(c->ranges.begin(), c->ranges.end());
    int64_t expect = 0;
    for (const auto& [b, e] : c->ranges) {
      if (b != expect) throw Error("plan has overlap or gap on tensor '" + info.name + "'");
      expect = e;
    }
    if (expect != info.rows)
      throw Error("plan has overlap or gap on tensor '" + info.name + "'");
  }
  for (const auto& [tid, c] : covers) {
    bool known = false;
    for (const auto& info : infos)
      if (info.id == tid && info.trainable) known = true;
    if (!known) throw Error("plan references unknown tensor id " + std::to_string(tid));
  }
}

namespace {

struct RowWalk {
  const TensorInfo* info;
  int64_t row_cost;  // mutable bytes per row
};

std::vector<RowWalk> trainable_in_order(const std::vector<TensorInfo>& infos,
                                        const CostPolicy& policy) {
  std::vector<const TensorInfo*> sorted;
  for (const auto& i : infos)
    if (i.trainable) sorted.push_back(&i);
  std::sort(sorted.begin(), sorted.end(), [](const TensorInfo* a, const TensorInfo* b) {
    if (a->reg_order != b->reg_order) return a->reg_order < b->reg_order;
    return a->id < b->id;
  });
  std::vector<RowWalk> walk;
  for (const auto* i : sorted)
    walk.push_back(RowWalk{i, i->cols * policy.mutable_bytes_per_element()});
  return walk;
}

void finalize(ChunkPlan& plan, const std::vector<RowWalk>& walk) {
  for (auto& ch : plan.chunks) {
    ch.byte_cost = 0;
    ch.elements = 0;
    for (const auto& s : ch.slices) {
      for (const auto& w : walk) {
        if (w.info->id != s.tensor_id) continue;
        ch.byte_cost += s.row_count() * w.row_cost;
        ch.elements += s.row_count() * w.info->cols;
      }
    }
    plan.total_mutable_bytes += ch.byte_cost;
  }
  for (const auto& w : walk) plan.max_row_cost = std::max(plan.max_row_cost, w.row_cost);
}

}  // namespace

ChunkPlan partition(const std::vector<TensorInfo>& infos, int K, const CostPolicy& policy) {
  policy.validate();
  if (K < 1) throw Error("partition: K must be at least 1");
  auto walk = trainable_in_order(infos, policy);
  if (walk.empty()) throw Error("partition: no trainable parameters");
  int64_t total_rows = 0;
  int64_t total_cost = 0;
  for (const auto& w : walk) {
    total_rows += w.info->rows;
    total_cost += w.info->rows * w.row_cost;
  }
  if (K > total_rows) throw Error("partition: chunk count exceeds row granularity");

  ChunkPlan plan;
  plan.policy = policy;
  plan.chunks.resize(K);

  const double mean = static_cast<double>(total_cost) / K;
  size_t wi = 0;          // tensor cursor
  int64_t row = 0;        // row cursor within walk[wi]
  int64_t rows_used = 0;  // rows assigned so far
  int64_t cum = 0;        // cost assigned so far

  for (int c = 0; c < K; ++c) {
    auto& chunk = plan.chunks[c];
    const double target = mean * (c + 1);
    // Leave at least one row for every chunk after this one.
    const int64_t max_rows_total = total_rows - (K - 1 - c);
    bool last = c == K - 1;
    while (wi < walk.size()) {
      const RowWalk& w = walk[wi];
      int64_t take = w.info->rows - row;
      if (!last) {
        if (cum >= target && rows_used > 0 && !chunk.slices.empty()) break;
        // Rows until the running cost first reaches the target; the boundary
        // row lands in this chunk.
        const int64_t need =
            static_cast<int64_t>(std::ceil((target - static_cast<double>(cum)) / w.row_cost));
        take = std::min(take, std::max<int64_t>(need, 1));
        take = std::min(take, max_rows_total - rows_used);
        if (take <= 0) break;
      }
      if (!chunk.slices.empty() && chunk.slices.back().tensor_id == w.info->id &&
          chunk.slices.back().row_end == row) {
        chunk.slices.back().row_end = row + take;
      } else {
        chunk.slices.push_back(SliceRef{w.info->id, row, row + take});
      }
      cum += take * w.row_cost;
      rows_used += take;
      row += take;
      if (row == w.info->rows) {
        ++wi;
        row = 0;
      }
      if (!last && (cum >= target || rows_used == max_rows_total)) break;
    }
  }

  finalize(plan, walk);
  plan.validate(infos);
  return plan;
}

ChunkPlan partition_by_budget(const std::vector<TensorInfo>& infos, int64_t budget_bytes,
                              const CostPolicy& policy) {
  policy.validate();
  if (budget_bytes <= 0) throw Error("partition: budget must be positive");
  int64_t total_cost = 0;
  for (const auto& w : trainable_in_order(infos, policy))
    total_cost += w.info->rows * w.row_cost;
  const int64_t K = (total_cost + budget_bytes - 1) / budget_bytes;
  return partition(infos, static_cast<int>(std::max<int64_t>(K, 1)), policy);
}

ChunkPlan partition_per_tensor(const std::vector<TensorInfo>& infos, const CostPolicy& policy) {
  policy.validate();
  auto walk = trainable_in_order(infos, policy);
  if (walk.empty()) throw Error("partition: no trainable parameters");
  ChunkPlan plan;
  plan.policy = policy;
  for (const auto& w : walk) {
    ChunkPlan::ChunkEntry e;
    e.slices.push_back(SliceRef{w.info->id, 0, w.info->rows});
    plan.chunks.push_back(std::move(e));
  }
  finalize(plan, walk);
  plan.validate(infos);
  return plan;
}

std::string plan_to_json(const ChunkPlan& plan, const std::vector<TensorInfo>& infos) {
  auto name_of = [&](int id) -> std::string {
    for (const auto& i : infos)
      if (i.id == id) return i.name;
    throw Error("plan references unknown tensor id " + std::to_string(id));
  };
  nlohmann::json j;
  j["chunk_count"] = plan.K();
  j["total_mutable_bytes"] = plan.total_mutable_bytes;
  j["hash"] = plan_hash(plan);
  j["chunks"] = nlohmann::json::array();
  for (int c = 0; c < plan.K(); ++c) {
    nlohmann::json jc;
    jc["chunk"] = c;
    jc["byte_cost"] = plan.chunks[c].byte_cost;
    jc["elements"] = plan.chunks[c].elements;
    jc["slices"] = nlohmann::json::array();
    for (const auto& s : plan.chunks[c].slices) {
      jc["slices"].push_back({{"tensor", name_of(s.tensor_id)},
                              {"tensor_id", s.tensor_id},
                              {"row_begin", s.row_begin},
                              {"row_end", s.row_end}});
    }
    j["chunks"].push_back(std::move(jc));
  }
  return j.dump(2);
}

ChunkPlan plan_from_json(const std::string& text, const std::vector<TensorInfo>& infos) {
  nlohmann::json j = nlohmann::json::parse(text);
  ChunkPlan plan;
  for (const auto& jc : j.at("chunks")) {
    ChunkPlan::ChunkEntry e;
    for (const auto& js : jc.at("slices"))
      e.slices.push_back(SliceRef{js.at("tensor_id").get<int>(),
                                  js.at("row_begin").get<int64_t>(),
                                  js.at("row_end").get<int64_t>()});
    plan.chunks.push_back(std::move(e));
  }
  auto walk = trainable_in_order(infos, plan.policy);
  finalize(plan, walk);
  plan.validate(infos);
  if (j.contains("hash") && j.at("hash").get<uint64_t>() != plan_hash(plan))
    throw Error("plan hash mismatch");
  return plan;
}

uint64_t plan_hash(const ChunkPlan& plan) {
  uint64_t h = 1469598103934665603ull;  // FNV-1a
  auto mix = [&h](uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 1099511628211ull;
    }
  };
  mix(static_cast<uint64_t>(plan.K()));
  for (const auto& ch : plan.chunks) {
    mix(static_cast<uint64_t>(ch.slices.size()));
    for (const auto& s : ch.slices) {
      mix(static_cast<uint64_t>(s.tensor_id));
      mix(static_cast<uint64_t>(s.row_begin));
      mix(static_cast<uint64_t>(s.row_end));
    }
  }
  return h;
}

}  // namespace chunkft
