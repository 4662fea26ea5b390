// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "minibert/error.hpp"
#include "minibert/rng.hpp"

namespace minibert {

// Architectural hyperparameters. embedding_size < hidden_size enables the
// factorized-embedding variant (position/segment tables live at embedding
// size and the summed embedding is projected up after layer norm);
// share_layers stores one transformer block and reuses it for every layer.
struct ModelConfig {
  int32_t vocab_size = 0;
  int32_t embedding_size = 0;  // E
  int32_t hidden_size = 0;     // H
  int32_t layers = 0;          // L
  int32_t heads = 0;           // A
  int32_t ff_size = 0;         // F, conventionally 4H
  int32_t max_positions = 512; // P
  int32_t type_vocab = 2;
  bool share_layers = false;
  float dropout = 0.1f;

  bool factorized() const { return embedding_size != hidden_size; }
  int32_t blocks_stored() const { return share_layers ? 1 : layers; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;

  static ModelConfig base(int32_t vocab) {
    return {vocab, 768, 768, 12, 12, 3072, 512, 2, false, 0.1f};
  }
  static ModelConfig base_factorized_shared(int32_t vocab) {
    return {vocab, 128, 768, 12, 12, 3072, 512, 2, true, 0.1f};
  }
};

struct ParamCounts {
  int64_t embedding = 0;  // token table plus the factorized projection
  int64_t model = 0;      // all embeddings + stored encoder blocks
  int64_t heads = 0;      // pooler + MLM head + NSP classifier
  int64_t total() const { return model + heads; }
};

ParamCounts param_count(const ModelConfig& config);

struct ArrayInfo {
  std::string name;
  size_t offset = 0;
  std::vector<int64_t> shape;
  size_t size = 0;
};

// Index of the per-block arrays inside ParameterSet::arrays.
struct BlockRefs {
  size_t qw, qb, kw, kb, vw, vb, ow, ob;
  size_t ln1s, ln1b;
  size_t fw1, fb1, fw2, fb2;
  size_t ln2s, ln2b;
};

struct ParamRefs {
  size_t tok, pos, seg, elns, elnb;
  size_t projw = SIZE_MAX, projb = SIZE_MAX;
  std::vector<BlockRefs> blocks;
  size_t poolw, poolb;
  size_t mtw, mtb, mlns, mlnb, mob;
  size_t nspw, nspb;
  size_t headw = SIZE_MAX, headb = SIZE_MAX;
};

// All trainable arrays in one flat buffer; also used for gradients.
template <typename S>
struct ParameterSet {
  ModelConfig config;
  std::vector<ArrayInfo> arrays;
  std::vector<S> data;
  ParamRefs refs;
  int32_t head_size = 0;  // task head outputs; 0 when pretraining only

  std::span<S> span(size_t array_index) {
    const ArrayInfo& a = arrays[array_index];
    return {data.data() + a.offset, a.size};
  }
  std::span<const S> span(size_t array_index) const {
    const ArrayInfo& a = arrays[array_index];
    return {data.data() + a.offset, a.size};
  }
  S* ptr(size_t array_index) { return data.data() + arrays[array_index].offset; }
  const S* ptr(size_t array_index) const { return data.data() + arrays[array_index].offset; }

  size_t index_of(std::string_view name) const {
    for (size_t i = 0; i < arrays.size(); ++i) {
      if (arrays[i].name == name) return i;
    }
    fail_data("no parameter array named " + std::string(name));
  }
  std::span<S> span(std::string_view name) { return span(index_of(name)); }
  std::span<const S> span(std::string_view name) const { return span(index_of(name)); }

  void zero() { std::fill(data.begin(), data.end(), S(0)); }

  // Mirror of this set with zeroed data, for gradient buffers.
  ParameterSet<S> like() const {
    ParameterSet<S> g = *this;
    g.zero();
    return g;
  }
};

namespace detail {

template <typename S>
void push_array(ParameterSet<S>& p, const std::string& name, std::vector<int64_t> shape) {
  ArrayInfo a;
  a.name = name;
  a.shape = std::move(shape);
  a.size = 1;
  for (int64_t d : a.shape) a.size *= static_cast<size_t>(d);
  a.offset = p.data.size();
  p.data.resize(p.data.size() + a.size, S(0));
  p.arrays.push_back(std::move(a));
}

}  // namespace detail

// Zero-initialized parameter set with the full pretraining layout.
template <typename S>
ParameterSet<S> make_parameter_set(const ModelConfig& config) {
  config.validate();
  ParameterSet<S> p;
  p.config = config;
  const int64_t V = config.vocab_size, E = config.embedding_size, H = config.hidden_size;
  const int64_t F = config.ff_size, P = config.max_positions;

  auto idx = [&](const std::string& name, std::vector<int64_t> shape) {
    detail::push_array(p, name, std::move(shape));
    return p.arrays.size() - 1;
  };

  p.refs.tok = idx("embeddings.token", {V, E});
  p.refs.pos = idx("embeddings.position", {P, E});
  p.refs.seg = idx("embeddings.segment", {config.type_vocab, E});
  p.refs.elns = idx("embeddings.norm.scale", {E});
  p.refs.elnb = idx("embeddings.norm.offset", {E});
  if (config.factorized()) {
    p.refs.projw = idx("embeddings.projection.weight", {E, H});
    p.refs.projb = idx("embeddings.projection.bias", {H});
  }
  for (int32_t b = 0; b < config.blocks_stored(); ++b) {
    const std::string base = "layer" + std::to_string(b) + ".";
    BlockRefs r;
    r.qw = idx(base + "attention.query.weight", {H, H});
    r.qb = idx(base + "attention.query.bias", {H});
    r.kw = idx(base + "attention.key.weight", {H, H});
    r.kb = idx(base + "attention.key.bias", {H});
    r.vw = idx(base + "attention.value.weight", {H, H});
    r.vb = idx(base + "attention.value.bias", {H});
    r.ow = idx(base + "attention.output.weight", {H, H});
    r.ob = idx(base + "attention.output.bias", {H});
    r.ln1s = idx(base + "attention.norm.scale", {H});
    r.ln1b = idx(base + "attention.norm.offset", {H});
    r.fw1 = idx(base + "ffn.inner.weight", {H, F});
    r.fb1 = idx(base + "ffn.inner.bias", {F});
    r.fw2 = idx(base + "ffn.output.weight", {F, H});
    r.fb2 = idx(base + "ffn.output.bias", {H});
    r.ln2s = idx(base + "ffn.norm.scale", {H});
    r.ln2b = idx(base + "ffn.norm.offset", {H});
    p.refs.blocks.push_back(r);
  }
  p.refs.poolw = idx("pooler.weight", {H, H});
  p.refs.poolb = idx("pooler.bias", {H});
  p.refs.mtw = idx("mlm.transform.weight", {H, E});
  p.refs.mtb = idx("mlm.transform.bias", {E});
  p.refs.mlns = idx("mlm.norm.scale", {E});
  p.refs.mlnb = idx("mlm.norm.offset", {E});
  p.refs.mob = idx("mlm.output.bias", {V});
  p.refs.nspw = idx("nsp.weight", {H, 2});
  p.refs.nspb = idx("nsp.bias", {2});
  return p;
}

namespace detail {

inline bool name_ends_with(const std::string& name, std::string_view suffix) {
  return name.size() >= suffix.size() &&
         name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
}

template <typename S>
void init_array(ParameterSet<S>& p, size_t index, Rng& rng) {
  const std::string& name = p.arrays[index].name;
  auto view = p.span(index);
  if (name_ends_with(name, ".scale")) {
    std::fill(view.begin(), view.end(), S(1));
  } else if (name_ends_with(name, ".weight") || name.rfind("embeddings.", 0) == 0) {
    if (name_ends_with(name, ".offset") || name_ends_with(name, ".bias")) {
      return;  // embeddings.norm.offset handled by the zero default
    }
    for (auto& v : view) v = static_cast<S>(rng.truncated_normal(0.02, 2.0));
  }
  // biases, norm offsets and mlm.output.bias stay zero
}

}  // namespace detail

// Truncated-normal(0.02, cut at 2 std) weights; zero biases and norm offsets;
// unit norm scales. Deterministic from the seed.
template <typename S>
ParameterSet<S> init_model(const ModelConfig& config, uint64_t seed) {
  ParameterSet<S> p = make_parameter_set<S>(config);
  Rng rng(mix_seed(seed, 0x1417));
  for (size_t i = 0; i < p.arrays.size(); ++i) detail::init_array(p, i, rng);
  return p;
}

// Appends a freshly initialized affine task head (hidden_size x output_size).
template <typename S>
void attach_task_head(ParameterSet<S>& p, int32_t output_size, uint64_t seed) {
  if (p.head_size != 0) fail_data("task head already attached");
  if (output_size <= 0) fail_data("task head output size must be positive");
  p.refs.headw = p.arrays.size();
  detail::push_array(p, "head.weight", {p.config.hidden_size, output_size});
  p.refs.headb = p.arrays.size();
  detail::push_array(p, "head.bias", {output_size});
  p.head_size = output_size;
  Rng rng(mix_seed(seed, 0x4ead));
  for (auto& v : p.span(p.refs.headw)) v = static_cast<S>(rng.truncated_normal(0.02, 2.0));
}

}  // namespace minibert
