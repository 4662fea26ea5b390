// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "minibert/grad_accum.hpp"
#include "minibert/model.hpp"

namespace minibert {

// Contiguous batch slice owned by one worker; shards partition the batch and
// sizes differ by at most one.
struct ShardRange {
  int worker = 0;
  int64_t begin = 0;
  int64_t end = 0;
  int64_t size() const { return end - begin; }
};

inline std::vector<ShardRange> shard_batch(int64_t n, int workers) {
  if (workers < 1) fail_data("shard_batch: worker count must be at least 1");
  std::vector<ShardRange> shards;
  shards.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    ShardRange r;
    r.worker = w;
    r.begin = static_cast<int64_t>(w) * n / workers;
    r.end = static_cast<int64_t>(w + 1) * n / workers;
    shards.push_back(r);
  }
  return shards;
}

// One synchronization step of the simulated cluster: each non-root worker
// sends its gradient once, so the per-step volume is (W-1) * param_count.
struct ReduceRecord {
  int64_t global_step = 0;
  std::vector<uint64_t> worker_checksums;
  uint64_t reduced_checksum = 0;
  int64_t transferred_scalars = 0;
};

struct Transcript {
  std::vector<ReduceRecord> records;

  void write(std::ostream& out) const {
    for (const auto& r : records) {
      out << "step=" << r.global_step << " transferred=" << r.transferred_scalars << " reduced=" << std::hex
          << r.reduced_checksum << std::dec;
      for (size_t w = 0; w < r.worker_checksums.size(); ++w) {
        out << " w" << w << "=" << std::hex << r.worker_checksums[w] << std::dec;
      }
      out << "\n";
    }
  }
};

// Merges per-worker accumulators in ascending worker-id order. The integer
// sums make the result independent of the grouping, which is what lets a
// W-way run match the serial one bit for bit.
inline GradAccumulator reduce_accumulators(const std::vector<GradAccumulator>& per_worker,
                                           int64_t param_count, int64_t global_step,
                                           Transcript* transcript) {
  GradAccumulator total;
  ReduceRecord rec;
  rec.global_step = global_step;
  for (const auto& acc : per_worker) {
    total.merge(acc);
    rec.worker_checksums.push_back(acc.checksum());
  }
  rec.reduced_checksum = total.checksum();
  rec.transferred_scalars = static_cast<int64_t>(per_worker.size() - 1) * param_count;
  if (transcript != nullptr) transcript->records.push_back(std::move(rec));
  return total;
}

// Example-count-weighted mean of per-worker mean gradients, summed in
// ascending worker-id order.
template <typename S>
ParameterSet<S> reduce_mean(const std::vector<ParameterSet<S>>& worker_grads,
                            const std::vector<int64_t>& counts) {
  if (worker_grads.empty()) fail_data("reduce_mean: no worker gradients");
  if (worker_grads.size() != counts.size()) fail_data("reduce_mean: counts do not match workers");
  const ParameterSet<S>& first = worker_grads.front();
  for (size_t w = 1; w < worker_grads.size(); ++w) {
    const auto& g = worker_grads[w];
    if (g.arrays.size() != first.arrays.size()) {
      fail_data("reduce_mean: worker " + std::to_string(w) + " has a different array count");
    }
    for (size_t i = 0; i < g.arrays.size(); ++i) {
      if (g.arrays[i].shape != first.arrays[i].shape || g.arrays[i].name != first.arrays[i].name) {
        fail_data("reduce_mean: worker " + std::to_string(w) + " array " + g.arrays[i].name +
                  " shape mismatch");
      }
    }
  }
  int64_t total = 0;
  for (int64_t c : counts) total += c;
  if (total <= 0) fail_data("reduce_mean: zero total examples");

  ParameterSet<S> out = first.like();
  for (size_t w = 0; w < worker_grads.size(); ++w) {
    const double weight = static_cast<double>(counts[w]);
    if (weight == 0.0) continue;
    const auto& g = worker_grads[w];
    for (size_t i = 0; i < out.data.size(); ++i) {
      out.data[i] += static_cast<S>(weight * static_cast<double>(g.data[i]));
    }
  }
  const double inv = 1.0 / static_cast<double>(total);
  for (auto& v : out.data) v = static_cast<S>(static_cast<double>(v) * inv);
  return out;
}

}  // namespace minibert
