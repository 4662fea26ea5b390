// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "minibert/error.hpp"
#include "minibert/model.hpp"

namespace minibert {

// Order-independent gradient accumulation: per-example gradients are
// quantized to fixed-point (2^-40) and summed in 128-bit integers, so any
// regrouping of the sum — micro-batches, worker shards, reduction order —
// yields bit-identical batch means. The quantization error (~1e-12 relative
// to unit-scale gradients) is far below float32 resolution.
class GradAccumulator {
 public:
  GradAccumulator() = default;
  explicit GradAccumulator(size_t n) : q_(n, 0) {}

  static constexpr double kScale = 1099511627776.0;  // 2^40

  template <typename S>
  void add_example(const ParameterSet<S>& grad) {
    if (q_.empty()) q_.assign(grad.data.size(), 0);
    if (q_.size() != grad.data.size()) fail_data("gradient accumulator: size mismatch");
    for (size_t i = 0; i < q_.size(); ++i) {
      const double g = static_cast<double>(grad.data[i]);
      if (!std::isfinite(g)) fail_data("non-finite gradient at scalar " + std::to_string(i));
      const double scaled = g * kScale;
      if (std::fabs(scaled) >= 9.2e18) fail_data("gradient overflow at scalar " + std::to_string(i));
      q_[i] += static_cast<__int128>(std::llround(scaled));
    }
    ++count_;
  }

  void merge(const GradAccumulator& other) {
    if (other.count_ == 0) return;
    if (q_.empty()) q_.assign(other.q_.size(), 0);
    if (q_.size() != other.q_.size()) fail_data("gradient accumulator: merge size mismatch");
    for (size_t i = 0; i < q_.size(); ++i) q_[i] += other.q_[i];
    count_ += other.count_;
  }

  int64_t count() const { return count_; }
  size_t size() const { return q_.size(); }

  // Mean gradient; the conversion is a pure function of the exact integer
  // sums, so it is identical however the examples were grouped.
  template <typename S>
  void mean_into(ParameterSet<S>& out) const {
    if (count_ == 0) fail_data("gradient accumulator: empty mean");
    if (out.data.size() != q_.size()) fail_data("gradient accumulator: output size mismatch");
    const double inv = 1.0 / (kScale * static_cast<double>(count_));
    for (size_t i = 0; i < q_.size(); ++i) {
      out.data[i] = static_cast<S>(to_double(q_[i]) * inv);
    }
  }

  uint64_t checksum() const {
    uint64_t h = 0x9e3779b97f4a7c15ULL ^ static_cast<uint64_t>(count_);
    for (const __int128 v : q_) {
      uint64_t lo = static_cast<uint64_t>(static_cast<unsigned __int128>(v));
      uint64_t hi = static_cast<uint64_t>(static_cast<unsigned __int128>(v) >> 64);
      h ^= lo + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
      h ^= hi + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return h;
  }

 private:
  static double to_double(__int128 v) {
    const bool neg = v < 0;
    unsigned __int128 u = neg ? static_cast<unsigned __int128>(-v) : static_cast<unsigned __int128>(v);
    const double d = std::ldexp(static_cast<double>(static_cast<uint64_t>(u >> 64)), 64) +
                     static_cast<double>(static_cast<uint64_t>(u));
    return neg ? -d : d;
  }

  std::vector<__int128> q_;
  int64_t count_ = 0;
};

}  // namespace minibert
