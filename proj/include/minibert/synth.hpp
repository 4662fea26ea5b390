// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace minibert {

// Deterministic synthetic corpus for tests and demos. Blocks carry a topic
// word and every sentence opens with an ordinal cue word, so consecutive
// sentences are genuinely predictable from their predecessors (next-sentence
// pairs have learnable signal even at desk scale).
struct SynthOptions {
  int64_t blocks = 10;
  double avg_sentences = 5.0;     // block sizes ~ 1 + Poisson(avg - 1)
  int32_t vocab_words = 60;       // pseudo-word inventory size
  int32_t words_per_sentence = 5; // content words per sentence
  uint64_t seed = 1;
  std::string preset;             // "" or "table2"
  double scale = 1e-5;            // preset block-count scaling
};

std::vector<std::string> synth_word_inventory(int32_t vocab_words, uint64_t seed);

// Writes blank-line-blocks format.
void write_synth_corpus(std::ostream& out, const SynthOptions& options);
void write_synth_corpus_file(const std::string& path, const SynthOptions& options);

}  // namespace minibert
