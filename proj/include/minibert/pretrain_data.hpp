// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "minibert/corpus.hpp"
#include "minibert/rng.hpp"
#include "minibert/tokenizer.hpp"

namespace minibert {

struct SentencePair {
  std::string sentence_a;
  std::string sentence_b;
  bool is_next = false;
};

struct MaskPolicy {
  double select_prob = 0.15;
  double mask_frac = 0.8;
  double random_frac = 0.1;
  double keep_frac = 0.1;

  void validate() const;
};

// One masked, segment-labeled token-id sequence with MLM targets and an NSP
// label. Layout: [CLS] A [SEP] B [SEP] then padding; the attention mask is a
// prefix of ones of length real_len.
struct PretrainExample {
  std::vector<int32_t> input_ids;    // length max_len, [PAD]-filled
  std::vector<int32_t> segment_ids;  // 0 for [CLS]+A+[SEP], 1 for B+[SEP], 0 on padding
  int32_t real_len = 0;
  std::vector<int32_t> mlm_positions;
  std::vector<int32_t> mlm_labels;  // original ids at mlm_positions
  int32_t nsp_label = 0;            // 1 = B follows A
};

// Bounded uniform sample of sentences, used as the negative-pair fallback for
// 2-sentence blocks that have no in-block candidate.
class SentenceReservoir {
 public:
  explicit SentenceReservoir(size_t capacity = 1000, uint64_t seed = 0)
      : capacity_(capacity), rng_(mix_seed(seed, 0x7e5e)) {}

  void offer(const std::string& sentence);
  void offer_block(const TextBlock& block);
  bool empty() const { return pool_.empty(); }
  size_t size() const { return pool_.size(); }

  // Uniform draw avoiding the two excluded values; empty string when no
  // admissible sentence exists.
  std::string sample(Rng& rng, const std::string& exclude_a, const std::string& exclude_b) const;

 private:
  size_t capacity_;
  int64_t seen_ = 0;
  Rng rng_;
  std::vector<std::string> pool_;
};

// Emits, for each of the k-1 consecutive sentence pairs of the block, one
// positive and (per the ratio) negatives whose B comes from the same block
// but is neither A nor the sentence that actually follows A. Two-sentence
// blocks fall back to the reservoir.
std::vector<SentencePair> generate_nsp_pairs(const TextBlock& block, Rng& rng,
                                             double negatives_per_positive = 1.0,
                                             const SentenceReservoir* reservoir = nullptr);

struct MlmResult {
  std::vector<int32_t> masked_ids;
  std::vector<int32_t> positions;
  std::vector<int32_t> labels;
};

// Selects max(1, round(select_prob * maskable_count)) positions uniformly
// without replacement (0 when nothing is maskable); each becomes [MASK] /
// random non-special id / unchanged per the policy fractions.
MlmResult apply_mlm_mask(const std::vector<int32_t>& ids, const std::vector<uint8_t>& maskable,
                         const MaskPolicy& policy, const Vocabulary& vocab, Rng& rng);

PretrainExample build_example(const SentencePair& pair, const Vocabulary& vocab,
                              const MaskPolicy& policy, int32_t max_len, Rng& rng);

// Alternating longest-first truncation from sentence ends (ties shorten b),
// shared by the pretraining and fine-tuning pair encoders.
void truncate_pair(std::vector<int32_t>& a, std::vector<int32_t>& b, size_t max_total);

// Versioned little-endian binary container.
struct PretrainFile {
  int32_t max_len = 0;
  MaskPolicy policy;
  std::vector<PretrainExample> examples;
};

void write_pretrain_file(const std::string& path, const PretrainFile& file);
PretrainFile read_pretrain_file(const std::string& path);
void dump_pretrain_file(const PretrainFile& file, const Vocabulary& vocab, std::ostream& out,
                        size_t limit = 0);

// End-to-end builder: first pass fills the fallback reservoir, second pass
// generates pairs (per-block rng derived from the seed and block id) and
// materializes masked examples.
PretrainFile build_pretrain_examples(const std::vector<TextBlock>& blocks, const Vocabulary& vocab,
                                     const MaskPolicy& policy, int32_t max_len, uint64_t seed,
                                     double negatives_per_positive = 1.0,
                                     size_t reservoir_capacity = 1000);

}  // namespace minibert
