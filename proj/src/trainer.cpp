// SPDX-License-Identifier: Apache-2.0

#include "chunkft/trainer.hpp"

#include <cmath>
#include <fstream>

#include "chunkft/csvio.hpp"

namespace chunkft {

TrainResult run_training(Model& model, DataStream& data, const ChunkPlan& plan,
                         const TrainOptions& options) {
  options.schedule.validate();
  if (options.micro_batches < 1) throw Error("trainer: micro_batches must be at least 1");
  plan.validate(model.tensor_infos());

  TrainResult result;
  result.states = init_all_chunk_states(plan, model);
  RotationScheduler sched(options.schedule, &plan, &result.states);

  AdamWStepper adamw(options.hyper, &plan, &model);
  PlainGradStepper plain(options.hyper.eta, &plan, &model);
  ChunkStepper& stepper =
      options.optim == OptimKind::adamw ? static_cast<ChunkStepper&>(adamw)
                                        : static_cast<ChunkStepper&>(plain);

  const auto infos = model.tensor_infos();
  const int T = options.schedule.T;
  const int K = options.schedule.K;
  result.bp.K = K;
  result.bp.T = T;
  int64_t rotation_macs = 0;
  int64_t dense_macs = 0;

  for (int64_t t = 0; t < options.schedule.total_steps; ++t) {
    int active = -1;
    try {
      active = sched.step_begin();
      ChunkStates& states = result.states[static_cast<size_t>(active)];
      const ActiveMask mask = plan.mask_of(active);

      double step_loss = 0.0;
      ops::FlopCounter flops;
      for (int mb = 0; mb < options.micro_batches; ++mb) {
        const Batch& batch = data.next();
        Tape tape = forward(model, batch);
        if (!std::isfinite(tape.loss_value()))
          throw Error("non-finite loss");
        step_loss += tape.loss_value();
        GradBag bag = tape.backward_chunked(mask, options.instrument_flops ? &flops : nullptr);
        accumulate_grad(states, plan, bag);
        if (options.instrument_flops && dense_macs == 0)
          dense_macs = tape.dense_param_grad_macs();
      }
      step_loss /= options.micro_batches;

      const std::vector<double> grad = take_mean_grad(states);
      double gsq = 0.0;
      for (double g : grad) gsq += g * g;

      if (options.record_memory)
        result.memory.append(sample_memory(t, sched, plan, infos, options.activation_bytes));

      stepper.step(states, grad);

      TrainTrajectoryEntry entry;
      entry.step = t;
      entry.chunk_epoch = sched.active_index_counter() / K;
      entry.inner_step = static_cast<int>(t % T);
      entry.chunk = active;
      entry.loss = step_loss;
      entry.grad_norm_sq = gsq;
      result.trajectory.push_back(entry);
      result.final_loss = step_loss;

      if (options.instrument_flops) {
        rotation_macs += flops.param_grad_macs;
        // A rotation completes when the index counter wraps back to chunk 0.
        const bool boundary = (t % T) == T - 1;
        sched.step_end();
        if (boundary && sched.active_index_counter() % K == 0) {
          result.bp.chunked_macs += rotation_macs;
          result.bp.rotations += 1;
          rotation_macs = 0;
        }
      } else {
        sched.step_end();
      }
    } catch (const Error& e) {
      throw Error("step " + std::to_string(t) + ", chunk " + std::to_string(active) + ": " +
                  e.what());
    }
  }

  sched.finish();
  result.transfers = sched.events();
  result.noop_loads = sched.noop_loads();
  result.bp.dense_macs_per_step = dense_macs;
  return result;
}

void write_trajectory_csv(const std::vector<TrainTrajectoryEntry>& trajectory,
                          const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << "step,chunk_epoch,inner_step,chunk,loss,grad_norm_sq\n";
  for (const auto& e : trajectory) {
    out << e.step << ',' << e.chunk_epoch << ',' << e.inner_step << ',' << e.chunk << ','
        << format_double(e.loss) << ',' << format_double(e.grad_norm_sq) << '\n';
  }
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

namespace reference {

DenseResult dense_adamw_run(Model& model, DataStream& data, const AdamWHyper& hyper,
                            int64_t steps, int micro_batches) {
  hyper.validate();
  if (micro_batches < 1) throw Error("reference: micro_batches must be at least 1");

  // Flat state in tensor registration order, matching the chunked engine's
  // slice layout for a single all-covering chunk.
  int64_t total = 0;
  for (const auto& t : model.tensors())
    if (t.trainable) total += t.elements();
  std::vector<double> master(static_cast<size_t>(total));
  std::vector<double> m(static_cast<size_t>(total), 0.0);
  std::vector<double> v(static_cast<size_t>(total), 0.0);
  {
    size_t off = 0;
    for (const auto& t : model.tensors()) {
      if (!t.trainable) continue;
      std::copy(t.values.begin(), t.values.end(), master.begin() + off);
      off += t.values.size();
    }
  }

  DenseResult result;
  uint64_t n = 0;
  for (int64_t step = 0; step < steps; ++step) {
    double step_loss = 0.0;
    std::vector<double> grad(static_cast<size_t>(total), 0.0);
    for (int mb = 0; mb < micro_batches; ++mb) {
      const Batch& batch = data.next();
      Tape tape = forward(model, batch);
      step_loss += tape.loss_value();
      GradBag bag = tape.backward_dense();
      const std::vector<double> flat = bag.flatten();
      for (size_t i = 0; i < flat.size(); ++i) grad[i] += flat[i];
    }
    step_loss /= micro_batches;
    const double inv = 1.0 / micro_batches;
    for (auto& g : grad) g *= inv;

    n += 1;
    const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(n));
    const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(n));
    for (size_t i = 0; i < grad.size(); ++i) {
      const double g = grad[i];
      m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g;
      v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      master[i] -= hyper.eta * (mhat / (std::sqrt(vhat) + hyper.epsilon) +
                                hyper.weight_decay * master[i]);
    }
    {
      size_t off = 0;
      for (auto& t : model.tensors()) {
        if (!t.trainable) continue;
        std::copy(master.begin() + off, master.begin() + off + t.values.size(),
                  t.values.begin());
        off += t.values.size();
      }
    }
    result.losses.push_back(step_loss);
    result.final_loss = step_loss;
  }
  return result;
}

}  // namespace reference

}  // namespace chunkft
