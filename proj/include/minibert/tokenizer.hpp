// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "minibert/text.hpp"

namespace minibert {

// Ordered subword inventory. Ids are dense line numbers; [PAD] is always 0 so
// zero-filled buffers are valid padding.
struct Vocabulary {
  static constexpr const char* kPad = "[PAD]";
  static constexpr const char* kUnk = "[UNK]";
  static constexpr const char* kCls = "[CLS]";
  static constexpr const char* kSep = "[SEP]";
  static constexpr const char* kMask = "[MASK]";
  static constexpr int32_t kNumSpecials = 5;

  std::vector<std::string> tokens;
  std::unordered_map<std::string, int32_t> token_to_id;
  Casing casing = Casing::Cased;
  std::string continuation = "##";

  int32_t pad_id = 0;
  int32_t unk_id = 1;
  int32_t cls_id = 2;
  int32_t sep_id = 3;
  int32_t mask_id = 4;

  int32_t size() const { return static_cast<int32_t>(tokens.size()); }
  int32_t lookup(std::string_view token) const;
  bool is_special(int32_t id) const {
    return id == pad_id || id == unk_id || id == cls_id || id == sep_id || id == mask_id;
  }
  const std::string& token(int32_t id) const;

  // Checks the structural invariants (dense bijective ids, five distinct
  // specials, PAD at 0, no empty non-special tokens). Throws on violation.
  void validate() const;
};

struct Encoding {
  std::vector<int32_t> ids;
  std::vector<uint8_t> word_start;   // true at the first subword of each word
  std::vector<int32_t> word_index;   // whitespace-word index per subword

  size_t size() const { return ids.size(); }
};

// Streaming word-frequency accumulator; feed normalized sentences.
class WordCounts {
 public:
  void add_sentence(std::string_view normalized);
  const std::unordered_map<std::string, int64_t>& counts() const { return counts_; }
  bool empty() const { return counts_.empty(); }

 private:
  std::unordered_map<std::string, int64_t> counts_;
};

// Likelihood-scored merge training: starts from the observed character
// inventory (plain form for every character, "##" form for characters seen
// word-internally) and greedily adds the pair maximizing
// freq(ab) / (freq(a) * freq(b)) until the budget is filled. Lexicographic
// tie-breaking keeps the result deterministic.
Vocabulary train_wordpiece(const WordCounts& counts, int32_t vocab_size, Casing casing);
Vocabulary train_wordpiece(const std::vector<std::string>& sentences, int32_t vocab_size,
                           Casing casing);

// Greedy longest-match-first subword segmentation. Words longer than
// kMaxWordChars codepoints, or with any unmatchable remainder, become [UNK].
Encoding encode(const Vocabulary& vocab, std::string_view normalized_text);
inline constexpr size_t kMaxWordChars = 100;

// Inverse of encode for fully segmentable text: strips continuation prefixes,
// drops special tokens, separates word-initial pieces with spaces.
std::string decode(const Vocabulary& vocab, std::span<const int32_t> ids);

// One token per line, line number = id.
void save_vocab(const Vocabulary& vocab, const std::string& path);
Vocabulary load_vocab(const std::string& path, Casing casing);

}  // namespace minibert
