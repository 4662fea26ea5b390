// SPDX-License-Identifier: Apache-2.0
#include "minibert/synth.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>
#include <set>

#include "minibert/error.hpp"
#include "minibert/rng.hpp"

namespace minibert {

namespace {

const char* kSyllables[] = {"ba", "re", "mi", "to", "ku", "za", "ne", "vo",
                            "li", "da", "so", "pe", "ři", "žu", "čo", "vý"};
constexpr size_t kSyllableCount = sizeof(kSyllables) / sizeof(kSyllables[0]);

// Capitalized sentence openers indicating the in-block sentence index.
const char* kOrdinals[] = {"Alfa", "Beta", "Gama", "Delta", "Echo",  "Fox",
                           "Golf", "Hotel", "India", "Julie", "Kilo", "Lima"};
constexpr size_t kOrdinalCount = sizeof(kOrdinals) / sizeof(kOrdinals[0]);

struct SourceSpec {
  int64_t blocks;
  double avg_sentences;
};

void write_blocks(std::ostream& out, Rng& rng, const std::vector<std::string>& inventory,
                  const SourceSpec& spec, int32_t words_per_sentence, bool& first_block) {
  for (int64_t b = 0; b < spec.blocks; ++b) {
    const long n_sentences = 1 + rng.poisson(std::max(0.0, spec.avg_sentences - 1.0));
    const std::string& topic = inventory[static_cast<size_t>(rng.below(inventory.size()))];
    if (!first_block) out << "\n";
    first_block = false;
    for (long s = 0; s < n_sentences; ++s) {
      out << kOrdinals[static_cast<size_t>(s) % kOrdinalCount] << ' ' << topic;
      for (int32_t w = 0; w < words_per_sentence; ++w) {
        out << ' ' << inventory[static_cast<size_t>(rng.below(inventory.size()))];
      }
      out << ".\n";
    }
  }
}

}  // namespace

std::vector<std::string> synth_word_inventory(int32_t vocab_words, uint64_t seed) {
  if (vocab_words < 1) fail_usage("synth: vocab-words must be positive");
  Rng rng(mix_seed(seed, 0x90bd));
  std::set<std::string> seen;
  std::vector<std::string> inventory;
  while (static_cast<int32_t>(inventory.size()) < vocab_words) {
    std::string word;
    const int n = 2 + static_cast<int>(rng.below(2));
    for (int i = 0; i < n; ++i) word += kSyllables[rng.below(kSyllableCount)];
    if (seen.insert(word).second) inventory.push_back(word);
  }
  return inventory;
}

void write_synth_corpus(std::ostream& out, const SynthOptions& options) {
  if (options.avg_sentences < 1.0) fail_usage("synth: avg-sentences must be at least 1");
  const std::vector<std::string> inventory =
      synth_word_inventory(options.vocab_words, options.seed);
  Rng rng(mix_seed(options.seed, 0xc0de));
  bool first_block = true;

  if (options.preset.empty()) {
    write_blocks(out, rng, inventory, {options.blocks, options.avg_sentences},
                 options.words_per_sentence, first_block);
  } else if (options.preset == "table2") {
    // Three-source mixture shaped like a natural-corpus / wiki / news blend:
    // many short blocks, some mid-length, some long.
    const SourceSpec sources[] = {
        {std::max<int64_t>(1, static_cast<int64_t>(49104507.0 * options.scale)), 5.61},
        {std::max<int64_t>(1, static_cast<int64_t>(450000.0 * options.scale)), 15.48},
        {std::max<int64_t>(1, static_cast<int64_t>(2625306.0 * options.scale)), 22.47},
    };
    for (const auto& spec : sources) {
      write_blocks(out, rng, inventory, spec, options.words_per_sentence, first_block);
    }
  } else {
    fail_usage("synth: unknown preset " + options.preset);
  }
}

void write_synth_corpus_file(const std::string& path, const SynthOptions& options) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail_data("cannot open for writing: " + path);
  write_synth_corpus(f, options);
  if (!f) fail_data("failed writing: " + path);
}

}  // namespace minibert
