// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "minibert/checkpoint.hpp"
#include "minibert/encoder.hpp"
#include "minibert/grad_accum.hpp"
#include "minibert/parallel.hpp"
#include "minibert/pretrain_data.hpp"

namespace minibert {

struct TrainPhase {
  int32_t max_len = 128;
  int32_t batch = 32;
  int64_t total_steps = 0;
  double base_lr = 1e-4;
  int64_t warmup_steps = 0;

  void validate() const {
    if (batch < 1) fail_data("train phase: batch must be at least 1");
    if (total_steps < 0 || warmup_steps < 0 || warmup_steps > total_steps) {
      fail_data("train phase: warmup must lie within [0, total_steps]");
    }
  }
};

// Linear ramp 0 -> base over [0, warmup], then linear decay base -> 0 over
// [warmup, total]. warmup = 0 starts at base.
inline double lr_schedule(int64_t step, const TrainPhase& phase) {
  phase.validate();
  if (step < 0 || step > phase.total_steps) {
    fail_data("lr_schedule: step " + std::to_string(step) + " outside [0, " +
              std::to_string(phase.total_steps) + "]");
  }
  if (phase.warmup_steps > 0 && step <= phase.warmup_steps) {
    return phase.base_lr * static_cast<double>(step) / static_cast<double>(phase.warmup_steps);
  }
  const int64_t decay_span = phase.total_steps - phase.warmup_steps;
  if (decay_span == 0) return step < phase.total_steps ? phase.base_lr : 0.0;
  return phase.base_lr * static_cast<double>(phase.total_steps - step) /
         static_cast<double>(decay_span);
}

template <typename S>
struct AdamState {
  std::vector<S> m, v;
  int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState zero_like(size_t n) {
    AdamState st;
    st.m.assign(n, S(0));
    st.v.assign(n, S(0));
    return st;
  }
};

// Standard bias-corrected Adam. Parameters are untouched when any gradient
// is non-finite.
template <typename S>
void adam_step(ParameterSet<S>& params, const ParameterSet<S>& grads, AdamState<S>& state,
               double lr) {
  if (grads.data.size() != params.data.size()) fail_data("adam_step: gradient shape mismatch");
  if (state.m.size() != params.data.size() || state.v.size() != params.data.size()) {
    fail_data("adam_step: optimizer state shape mismatch");
  }
  for (size_t i = 0; i < grads.data.size(); ++i) {
    if (!std::isfinite(static_cast<double>(grads.data[i]))) {
      fail_data("adam_step: non-finite gradient at scalar " + std::to_string(i) +
                "; parameters untouched");
    }
  }
  state.t += 1;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (size_t i = 0; i < params.data.size(); ++i) {
    const double g = static_cast<double>(grads.data[i]);
    const double m = state.beta1 * static_cast<double>(state.m[i]) + (1.0 - state.beta1) * g;
    const double v = state.beta2 * static_cast<double>(state.v[i]) + (1.0 - state.beta2) * g * g;
    state.m[i] = static_cast<S>(m);
    state.v[i] = static_cast<S>(v);
    const double m_hat = static_cast<double>(state.m[i]) / c1;
    const double v_hat = static_cast<double>(state.v[i]) / c2;
    params.data[i] = static_cast<S>(static_cast<double>(params.data[i]) -
                                    lr * m_hat / (std::sqrt(v_hat) + state.eps));
  }
}

struct LossLogRow {
  int64_t step = 0;  // global step across phases
  double lr = 0.0;
  double mlm = 0.0;
  double nsp = 0.0;
  double total = 0.0;
};

struct TrainOptions {
  uint64_t seed = 0;
  int workers = 1;
  int64_t log_every = 10;
  int64_t checkpoint_every = 0;     // additionally to per-phase-end checkpoints
  std::string checkpoint_dir;      // empty = keep everything in memory
  Transcript* transcript = nullptr;
  // Test hook for the simulated-failure path.
  int64_t fail_at_global_step = -1;
  int fail_worker = -1;
};

template <typename S>
struct TrainResult {
  ParameterSet<S> params;
  AdamState<S> state;
  std::vector<LossLogRow> log;
  std::string last_checkpoint;
};

namespace detail {

// One data-parallel step: shard the batch, accumulate per-worker gradients,
// reduce in worker order, return the batch-mean gradient. Per-example
// dropout streams derive from (seed, global step, batch slot), so results do
// not depend on the worker count.
template <typename S>
LossBreakdown batch_gradient(const ParameterSet<S>& params,
                             const std::vector<PretrainExample>& examples, int64_t batch,
                             int64_t global_step, const TrainOptions& opts,
                             ParameterSet<S>& mean_grad, ParameterSet<S>& scratch) {
  const int64_t n = static_cast<int64_t>(examples.size());
  if (n == 0) fail_data("train: no examples");
  std::vector<GradAccumulator> per_worker;
  per_worker.reserve(static_cast<size_t>(opts.workers));
  double loss_mlm = 0.0, loss_nsp = 0.0;
  int64_t mlm_terms = 0;

  for (const ShardRange& shard : shard_batch(batch, opts.workers)) {
    if (global_step == opts.fail_at_global_step && shard.worker == opts.fail_worker) {
      fail_data("worker " + std::to_string(shard.worker) + " failed at step " +
                std::to_string(global_step) + "; step aborted");
    }
    GradAccumulator acc(params.data.size());
    for (int64_t j = shard.begin; j < shard.end; ++j) {
      const auto& ex = examples[static_cast<size_t>((global_step * batch + j) % n)];
      Features f = Features::from_pretrain(ex);
      scratch.zero();
      const uint64_t drop_seed = mix_seed(opts.seed, static_cast<uint64_t>(global_step),
                                          static_cast<uint64_t>(j));
      LossBreakdown lb = backward(params, f, scratch, RunMode::Train, drop_seed);
      acc.add_example(scratch);
      loss_mlm += lb.mlm;
      loss_nsp += lb.nsp;
      if (lb.mlm_count > 0) ++mlm_terms;
    }
    per_worker.push_back(std::move(acc));
  }

  GradAccumulator total = reduce_accumulators(per_worker, static_cast<int64_t>(params.data.size()),
                                              global_step, opts.transcript);
  total.mean_into(mean_grad);

  LossBreakdown avg;
  avg.mlm = mlm_terms > 0 ? loss_mlm / static_cast<double>(mlm_terms) : 0.0;
  avg.nsp = loss_nsp / static_cast<double>(batch);
  avg.mlm_count = mlm_terms;
  return avg;
}

}  // namespace detail

// Runs the phases sequentially with persistent optimizer state; deterministic
// from the seed for any worker count. Resume by passing the state loaded from
// a train-state file together with its phase/step cursor.
template <typename S>
TrainResult<S> train(ParameterSet<S> model,
                     const std::vector<std::vector<PretrainExample>>& phase_examples,
                     const std::vector<TrainPhase>& phases, const TrainOptions& opts,
                     AdamState<S> state = {}, int32_t start_phase = 0, int64_t start_step = 0) {
  if (phase_examples.size() != phases.size()) {
    fail_data("train: phases and example sets must align");
  }
  for (size_t i = 0; i < phases.size(); ++i) {
    phases[i].validate();
    for (const auto& ex : phase_examples[i]) {
      if (static_cast<int32_t>(ex.input_ids.size()) != phases[i].max_len) {
        fail_data("train: example max_len does not match phase " + std::to_string(i));
      }
    }
  }
  if (state.m.empty()) state = AdamState<S>::zero_like(model.data.size());

  TrainResult<S> result;
  ParameterSet<S> grad = model.like();
  ParameterSet<S> scratch = model.like();

  int64_t global_step = 0;
  for (int32_t pi = 0; pi < start_phase; ++pi) global_step += phases[static_cast<size_t>(pi)].total_steps;
  global_step += start_step;

  auto checkpoint_now = [&](int32_t phase_idx, int64_t next_step) {
    if (opts.checkpoint_dir.empty()) return;
    const std::string base = opts.checkpoint_dir + "/ckpt-p" + std::to_string(phase_idx) + "-s" +
                             std::to_string(next_step);
    try {
      std::filesystem::create_directories(opts.checkpoint_dir);
      Checkpoint<S> ck;
      ck.params = model;
      save_checkpoint(base + ".model", ck);
      TrainState<S> ts;
      ts.m = state.m;
      ts.v = state.v;
      ts.t = state.t;
      ts.phase_index = phase_idx;
      ts.next_step = next_step;
      save_train_state(base + ".state", ts);
    } catch (const std::exception& e) {
      fail_data(std::string("checkpoint write failed (") + e.what() +
                "); last good checkpoint: " +
                (result.last_checkpoint.empty() ? "<none>" : result.last_checkpoint));
    }
    result.last_checkpoint = base;
  };

  for (int32_t phase_idx = start_phase; phase_idx < static_cast<int32_t>(phases.size());
       ++phase_idx) {
    const TrainPhase& phase = phases[static_cast<size_t>(phase_idx)];
    const auto& examples = phase_examples[static_cast<size_t>(phase_idx)];
    const int64_t first = phase_idx == start_phase ? start_step : 0;
    for (int64_t step = first; step < phase.total_steps; ++step, ++global_step) {
      const double lr = lr_schedule(step, phase);
      LossBreakdown lb = detail::batch_gradient(model, examples, phase.batch, global_step, opts,
                                                grad, scratch);
      adam_step(model, grad, state, lr);
      if (opts.log_every > 0 && (step % opts.log_every == 0 || step + 1 == phase.total_steps)) {
        result.log.push_back({global_step, lr, lb.mlm, lb.nsp, lb.total()});
      }
      if (opts.checkpoint_every > 0 && (step + 1) % opts.checkpoint_every == 0 &&
          step + 1 < phase.total_steps) {
        checkpoint_now(phase_idx, step + 1);
      }
    }
    checkpoint_now(phase_idx + 1, 0);
  }

  result.params = std::move(model);
  result.state = std::move(state);
  return result;
}

// Data-parallel pretraining over one phase with W simulated workers; equal to
// the serial run on the unsharded batch (bitwise at 64-bit, and within 1e-6
// relative at 32-bit, both by way of the exact accumulator).
template <typename S>
ParameterSet<S> parallel_train(ParameterSet<S> model, const std::vector<PretrainExample>& examples,
                               const TrainPhase& phase, int workers, uint64_t seed,
                               Transcript* transcript = nullptr) {
  TrainOptions opts;
  opts.seed = seed;
  opts.workers = workers;
  opts.transcript = transcript;
  opts.log_every = 0;
  return train<S>(std::move(model), {examples}, {phase}, opts).params;
}

}  // namespace minibert
