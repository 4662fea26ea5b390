// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "minibert/model.hpp"
#include "minibert/serialize.hpp"

namespace minibert {

// Model checkpoint: versioned manifest (config, task-head metadata, array
// table with shapes and offsets) followed by raw little-endian IEEE-754
// arrays in the training precision.
template <typename S>
struct Checkpoint {
  ParameterSet<S> params;
  int32_t task_kind = -1;  // tasks.hpp enum value; -1 = pretraining heads only
  std::vector<std::string> labels;
};

namespace detail {
constexpr char kCkptMagic[5] = "MBCK";
constexpr uint32_t kCkptVersion = 1;

inline void write_config(std::ostream& out, const ModelConfig& c) {
  write_pod<int32_t>(out, c.vocab_size);
  write_pod<int32_t>(out, c.embedding_size);
  write_pod<int32_t>(out, c.hidden_size);
  write_pod<int32_t>(out, c.layers);
  write_pod<int32_t>(out, c.heads);
  write_pod<int32_t>(out, c.ff_size);
  write_pod<int32_t>(out, c.max_positions);
  write_pod<int32_t>(out, c.type_vocab);
  write_pod<uint8_t>(out, c.share_layers ? 1 : 0);
  write_pod<float>(out, c.dropout);
}

inline ModelConfig read_config(std::istream& in) {
  ModelConfig c;
  c.vocab_size = read_pod<int32_t>(in);
  c.embedding_size = read_pod<int32_t>(in);
  c.hidden_size = read_pod<int32_t>(in);
  c.layers = read_pod<int32_t>(in);
  c.heads = read_pod<int32_t>(in);
  c.ff_size = read_pod<int32_t>(in);
  c.max_positions = read_pod<int32_t>(in);
  c.type_vocab = read_pod<int32_t>(in);
  c.share_layers = read_pod<uint8_t>(in) != 0;
  c.dropout = read_pod<float>(in);
  return c;
}
}  // namespace detail

template <typename S>
void save_checkpoint(const std::string& path, const Checkpoint<S>& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_data("cannot open checkpoint for writing: " + path);
  out.write(detail::kCkptMagic, 4);
  write_pod<uint32_t>(out, detail::kCkptVersion);
  detail::write_config(out, ckpt.params.config);
  write_pod<uint8_t>(out, sizeof(S));
  write_pod<int32_t>(out, ckpt.params.head_size);
  write_pod<int32_t>(out, ckpt.task_kind);
  write_pod<uint32_t>(out, static_cast<uint32_t>(ckpt.labels.size()));
  for (const auto& l : ckpt.labels) write_string(out, l);
  write_pod<uint32_t>(out, static_cast<uint32_t>(ckpt.params.arrays.size()));
  for (const auto& a : ckpt.params.arrays) {
    write_string(out, a.name);
    write_pod<uint32_t>(out, static_cast<uint32_t>(a.shape.size()));
    for (int64_t d : a.shape) write_pod<int64_t>(out, d);
    write_pod<uint64_t>(out, a.offset);
  }
  write_pod<uint64_t>(out, ckpt.params.data.size());
  out.write(reinterpret_cast<const char*>(ckpt.params.data.data()),
            static_cast<std::streamsize>(ckpt.params.data.size() * sizeof(S)));
  if (!out) fail_data("failed writing checkpoint: " + path);
}

template <typename S>
Checkpoint<S> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_data("cannot open checkpoint: " + path);
  expect_magic(in, detail::kCkptMagic, "checkpoint");
  const uint32_t version = read_pod<uint32_t>(in);
  if (version != detail::kCkptVersion) {
    fail_data("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint<S> ckpt;
  const ModelConfig config = detail::read_config(in);
  const uint8_t dtype = read_pod<uint8_t>(in);
  const int32_t head_size = read_pod<int32_t>(in);
  ckpt.task_kind = read_pod<int32_t>(in);
  const uint32_t n_labels = read_pod<uint32_t>(in);
  for (uint32_t i = 0; i < n_labels; ++i) ckpt.labels.push_back(read_string(in));

  ckpt.params = make_parameter_set<S>(config);
  if (head_size > 0) attach_task_head(ckpt.params, head_size, 0);

  // Verify the stored manifest against the expected structure; report every
  // difference, not just the first.
  const uint32_t n_arrays = read_pod<uint32_t>(in);
  std::ostringstream diff;
  if (n_arrays != ckpt.params.arrays.size()) {
    diff << "array count " << n_arrays << " != expected " << ckpt.params.arrays.size() << "; ";
  }
  for (uint32_t i = 0; i < n_arrays; ++i) {
    const std::string name = read_string(in);
    const uint32_t ndim = read_pod<uint32_t>(in);
    std::vector<int64_t> shape(ndim);
    for (auto& d : shape) d = read_pod<int64_t>(in);
    const uint64_t offset = read_pod<uint64_t>(in);
    if (i >= ckpt.params.arrays.size()) continue;
    const ArrayInfo& e = ckpt.params.arrays[i];
    if (name != e.name) diff << "array " << i << ": name " << name << " != " << e.name << "; ";
    else if (shape != e.shape || offset != e.offset) diff << "array " << name << ": shape/offset mismatch; ";
  }
  if (!diff.str().empty()) fail_data("checkpoint does not match its config: " + diff.str());

  const uint64_t n_data = read_pod<uint64_t>(in);
  if (n_data != ckpt.params.data.size()) fail_data("checkpoint data size mismatch");
  if (dtype == sizeof(S)) {
    in.read(reinterpret_cast<char*>(ckpt.params.data.data()),
            static_cast<std::streamsize>(n_data * sizeof(S)));
  } else if (dtype == 4) {
    std::vector<float> tmp(n_data);
    in.read(reinterpret_cast<char*>(tmp.data()), static_cast<std::streamsize>(n_data * 4));
    for (size_t i = 0; i < n_data; ++i) ckpt.params.data[i] = static_cast<S>(tmp[i]);
  } else if (dtype == 8) {
    std::vector<double> tmp(n_data);
    in.read(reinterpret_cast<char*>(tmp.data()), static_cast<std::streamsize>(n_data * 8));
    for (size_t i = 0; i < n_data; ++i) ckpt.params.data[i] = static_cast<S>(tmp[i]);
  } else {
    fail_data("unknown checkpoint dtype");
  }
  if (!in) fail_data("truncated checkpoint: " + path);
  return ckpt;
}

// Optimizer + progress state for exact resume.
template <typename S>
struct TrainState {
  std::vector<S> m, v;
  int64_t t = 0;
  int32_t phase_index = 0;
  int64_t next_step = 0;
};

namespace detail {
constexpr char kStateMagic[5] = "MBOS";
}

template <typename S>
void save_train_state(const std::string& path, const TrainState<S>& st) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_data("cannot open train state for writing: " + path);
  out.write(detail::kStateMagic, 4);
  write_pod<uint32_t>(out, 1);
  write_pod<uint8_t>(out, sizeof(S));
  write_pod<int64_t>(out, st.t);
  write_pod<int32_t>(out, st.phase_index);
  write_pod<int64_t>(out, st.next_step);
  write_vector(out, st.m);
  write_vector(out, st.v);
  if (!out) fail_data("failed writing train state: " + path);
}

template <typename S>
TrainState<S> load_train_state(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_data("cannot open train state: " + path);
  expect_magic(in, detail::kStateMagic, "train state");
  if (read_pod<uint32_t>(in) != 1) fail_data("unsupported train state version");
  if (read_pod<uint8_t>(in) != sizeof(S)) fail_data("train state precision mismatch");
  TrainState<S> st;
  st.t = read_pod<int64_t>(in);
  st.phase_index = read_pod<int32_t>(in);
  st.next_step = read_pod<int64_t>(in);
  st.m = read_vector<S>(in);
  st.v = read_vector<S>(in);
  return st;
}

}  // namespace minibert
