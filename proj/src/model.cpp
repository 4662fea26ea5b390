// SPDX-License-Identifier: Apache-2.0
#include "minibert/model.hpp"

namespace minibert {

void ModelConfig::validate() const {
  if (vocab_size <= 0) fail_data("config error: vocab_size must be positive");
  if (embedding_size <= 0 || hidden_size <= 0 || layers <= 0 || heads <= 0 || ff_size <= 0 ||
      max_positions <= 0) {
    fail_data("config error: all dimensions must be positive");
  }
  if (hidden_size % heads != 0) {
    fail_data("config error: hidden size " + std::to_string(hidden_size) +
              " not divisible by head count " + std::to_string(heads));
  }
  if (embedding_size > hidden_size) {
    fail_data("config error: embedding size must not exceed hidden size");
  }
  if (type_vocab != 2) fail_data("config error: type vocabulary size must be 2");
  if (!(dropout >= 0.0f && dropout < 1.0f)) fail_data("config error: dropout outside [0,1)");
}

ParamCounts param_count(const ModelConfig& c) {
  c.validate();
  const int64_t V = c.vocab_size, E = c.embedding_size, H = c.hidden_size, F = c.ff_size;
  const int64_t P = c.max_positions;

  ParamCounts pc;
  const int64_t projection = c.factorized() ? E * H + H : 0;
  pc.embedding = V * E + projection;

  const int64_t per_block = 4 * (H * H + H)  // attention Q,K,V,output
                            + 2 * H          // attention norm
                            + (H * F + F) + (F * H + H)  // feed-forward
                            + 2 * H;         // ffn norm
  pc.model = V * E + P * E + c.type_vocab * E + 2 * E  // tables + embedding norm
             + projection + static_cast<int64_t>(c.blocks_stored()) * per_block;

  pc.heads = (H * H + H)                  // pooler
             + (H * E + E) + 2 * E + V    // MLM transform, norm, output bias
             + (2 * H + 2);               // NSP classifier
  return pc;
}

}  // namespace minibert
