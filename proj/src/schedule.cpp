// SPDX-License-Identifier: Apache-2.0

#include "chunkft/schedule.hpp"

#include <algorithm>
#include <fstream>

namespace chunkft {

void ScheduleConfig::validate() const {
  if (K < 1) throw Error("schedule: K must be at least 1");
  if (T < 1) throw Error("schedule: T must be at least 1");
  if (total_steps < 1) throw Error("schedule: total_steps must be at least 1");
  if (bandwidth_bytes_per_step < 0) throw Error("schedule: bandwidth must be non-negative");
}

RotationScheduler::RotationScheduler(ScheduleConfig config, const ChunkPlan* plan,
                                     std::vector<ChunkStates>* states)
    : config_(config), plan_(plan), states_(states) {
  config_.validate();
  if (!plan_) throw Error("scheduler: plan required");
  if (plan_->K() != config_.K) throw Error("scheduler: plan chunk count does not match K");
  if (states_ && static_cast<int>(states_->size()) != config_.K)
    throw Error("scheduler: states size does not match K");
  virtual_device_.assign(static_cast<size_t>(config_.K), false);
}

int64_t RotationScheduler::state_bytes_of(int chunk) const {
  return plan_->chunk_elements(chunk) * plan_->policy.state_bytes_per_element();
}

int64_t RotationScheduler::latency_of(int64_t bytes) const {
  if (config_.bandwidth_bytes_per_step <= 0) return 0;
  return (bytes + config_.bandwidth_bytes_per_step - 1) / config_.bandwidth_bytes_per_step;
}

bool RotationScheduler::chunk_on_device(int chunk) const {
  if (states_) return (*states_)[static_cast<size_t>(chunk)].tier == Tier::device;
  return virtual_device_[static_cast<size_t>(chunk)];
}

void RotationScheduler::physical_load(int chunk) {
  if (states_) load_to_device((*states_)[static_cast<size_t>(chunk)]);
  virtual_device_[static_cast<size_t>(chunk)] = true;
  device_state_bytes_ += state_bytes_of(chunk);
}

void RotationScheduler::physical_offload(int chunk) {
  if (states_) offload_to_host((*states_)[static_cast<size_t>(chunk)]);
  virtual_device_[static_cast<size_t>(chunk)] = false;
  device_state_bytes_ -= state_bytes_of(chunk);
}

bool RotationScheduler::is_resident(int chunk) const { return chunk_on_device(chunk); }

std::vector<int> RotationScheduler::resident_chunks() const {
  std::vector<int> out;
  for (int k = 0; k < config_.K; ++k)
    if (chunk_on_device(k)) out.push_back(k);
  return out;
}

int RotationScheduler::step_begin() {
  if (t_ >= config_.total_steps) throw Error("scheduler: step_begin past total_steps");
  if (t_ % config_.T == 0) {
    active_ = static_cast<int>(I_ % config_.K);
    const int64_t bytes = state_bytes_of(active_);
    if (chunk_on_device(active_)) {
      // Idempotent: the chunk never left the device (K=1, or a back-to-back
      // activation); nothing moves.
      noop_loads_ += 1;
    } else {
      physical_load(active_);
      if (pending_prefetch_chunk_ == active_) {
        // The prefetch event already covers this transfer.
        pending_prefetch_chunk_ = -1;
      } else {
        events_.push_back(TransferEvent{t_, active_, TransferEvent::Dir::load, bytes,
                                        latency_of(bytes)});
        // Synchronous load: the chunk must be usable within this step, so no
        // in-flight window extends past it.
      }
    }
    if (config_.prefetch && config_.K > 1) {
      const int next = static_cast<int>((I_ + 1) % config_.K);
      if (next != active_ && pending_prefetch_chunk_ != next) {
        const int64_t nbytes = state_bytes_of(next);
        const int64_t lat = latency_of(nbytes);
        const int64_t activation = t_ + config_.T;
        const int64_t issue = std::max(t_, activation - lat);
        events_.push_back(
            TransferEvent{issue, next, TransferEvent::Dir::load, nbytes, lat});
        if (lat > 0) windows_.push_back(Window{issue, issue + lat, nbytes});
        pending_prefetch_chunk_ = next;
      }
    }
  }
  return active_;
}

void RotationScheduler::step_end() {
  if (active_ < 0) throw Error("scheduler: step_end before step_begin");
  if (t_ % config_.T == config_.T - 1) {
    const int next = static_cast<int>((I_ + 1) % config_.K);
    if (next != active_) {
      const int64_t bytes = state_bytes_of(active_);
      const int64_t lat = latency_of(bytes);
      physical_offload(active_);
      events_.push_back(
          TransferEvent{t_, active_, TransferEvent::Dir::offload, bytes, lat});
      if (lat > 0) windows_.push_back(Window{t_ + 1, t_ + 1 + lat, bytes});
    }
    I_ += 1;
  }
  t_ += 1;
}

void RotationScheduler::finish() {
  for (int k = 0; k < config_.K; ++k) {
    if (!chunk_on_device(k)) continue;
    const int64_t bytes = state_bytes_of(k);
    physical_offload(k);
    events_.push_back(TransferEvent{std::max<int64_t>(t_ - 1, 0), k,
                                    TransferEvent::Dir::offload, bytes, latency_of(bytes)});
  }
  pending_prefetch_chunk_ = -1;
}

int64_t RotationScheduler::transfer_inflight_bytes(int64_t step) {
  while (!windows_.empty() && windows_.front().end <= step) windows_.pop_front();
  int64_t bytes = 0;
  for (const Window& w : windows_)
    if (w.begin <= step && step < w.end) bytes += w.bytes;
  return bytes;
}

void write_transfer_log_csv(const std::vector<TransferEvent>& events,
                            const std::filesystem::path& path) {
  std::vector<TransferEvent> sorted = events;
  std::stable_sort(sorted.begin(), sorted.end(), [](const TransferEvent& a, const TransferEvent& b) {
    if (a.step != b.step) return a.step < b.step;
    if (a.chunk != b.chunk) return a.chunk < b.chunk;
    return static_cast<int>(a.dir) < static_cast<int>(b.dir);
  });
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << "step,chunk,direction,bytes,latency_steps\n";
  for (const auto& e : sorted) {
    out << e.step << ',' << e.chunk << ','
        << (e.dir == TransferEvent::Dir::load ? "load" : "offload") << ',' << e.bytes << ','
        << e.latency_steps << '\n';
  }
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

}  // namespace chunkft
