// SPDX-License-Identifier: Apache-2.0
#include "minibert/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "minibert/error.hpp"

namespace minibert {

int32_t Vocabulary::lookup(std::string_view token) const {
  auto it = token_to_id.find(std::string(token));
  return it == token_to_id.end() ? -1 : it->second;
}

const std::string& Vocabulary::token(int32_t id) const {
  if (id < 0 || id >= size()) {
    fail_data("token id " + std::to_string(id) + " out of range [0, " + std::to_string(size()) +
              ")");
  }
  return tokens[static_cast<size_t>(id)];
}

void Vocabulary::validate() const {
  if (token_to_id.size() != tokens.size()) fail_data("vocabulary contains duplicate tokens");
  for (size_t i = 0; i < tokens.size(); ++i) {
    auto it = token_to_id.find(tokens[i]);
    if (it == token_to_id.end() || it->second != static_cast<int32_t>(i)) {
      fail_data("vocabulary id map is not bijective at id " + std::to_string(i));
    }
  }
  const char* specials[] = {kPad, kUnk, kCls, kSep, kMask};
  std::set<int32_t> ids;
  for (const char* s : specials) {
    int32_t id = lookup(s);
    if (id < 0) fail_data(std::string("missing special token ") + s);
    ids.insert(id);
  }
  if (ids.size() != 5) fail_data("special tokens are not distinct");
  if (lookup(kPad) != 0) fail_data("[PAD] must have id 0");
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].empty() && !is_special(static_cast<int32_t>(i))) {
      fail_data("empty non-special token at id " + std::to_string(i));
    }
  }
}

void WordCounts::add_sentence(std::string_view normalized) {
  for (std::string_view word : split_words(normalized)) {
    for (std::string& unit : split_punctuation(word)) {
      ++counts_[std::move(unit)];
    }
  }
}

namespace {

Vocabulary make_vocab_shell(Casing casing) {
  Vocabulary v;
  v.casing = casing;
  const char* specials[] = {Vocabulary::kPad, Vocabulary::kUnk, Vocabulary::kCls,
                            Vocabulary::kSep, Vocabulary::kMask};
  for (const char* s : specials) {
    v.token_to_id.emplace(s, v.size());
    v.tokens.emplace_back(s);
  }
  return v;
}

void vocab_add(Vocabulary& v, const std::string& token) {
  if (v.token_to_id.emplace(token, v.size()).second) v.tokens.push_back(token);
}

struct TrainerWord {
  std::vector<int32_t> symbols;
  int64_t freq;
};

}  // namespace

Vocabulary train_wordpiece(const WordCounts& counts, int32_t vocab_size, Casing casing) {
  if (counts.empty()) fail_data("wordpiece training: no characters observed in input");

  // Character inventory: plain form for every character, continuation form
  // for characters seen past a word start.
  std::set<std::string> plain_chars;
  std::set<std::string> cont_chars;
  for (const auto& [word, freq] : counts.counts()) {
    size_t i = 0;
    uint32_t cp;
    bool first = true;
    while (i < word.size()) {
      if (!utf8_next(word, i, cp)) fail_data("invalid UTF-8 in training word");
      std::string ch;
      utf8_append(ch, cp);
      plain_chars.insert(ch);
      if (!first) cont_chars.insert("##" + ch);
      first = false;
    }
  }

  const int64_t minimum = Vocabulary::kNumSpecials + static_cast<int64_t>(plain_chars.size()) +
                          static_cast<int64_t>(cont_chars.size());
  if (vocab_size < minimum) {
    fail_data("vocab size " + std::to_string(vocab_size) +
              " too small; minimum feasible size is " + std::to_string(minimum));
  }

  Vocabulary vocab = make_vocab_shell(casing);
  std::vector<std::string> symtab;  // trainer symbol strings, continuation-prefixed past start
  std::unordered_map<std::string, int32_t> symids;
  auto intern = [&](const std::string& s) {
    auto it = symids.find(s);
    if (it != symids.end()) return it->second;
    int32_t id = static_cast<int32_t>(symtab.size());
    symtab.push_back(s);
    symids.emplace(s, id);
    return id;
  };
  for (const auto& c : plain_chars) {
    vocab_add(vocab, c);
    intern(c);
  }
  for (const auto& c : cont_chars) {
    vocab_add(vocab, c);
    intern(c);
  }

  // Words as symbol sequences, sorted for deterministic processing order.
  std::vector<TrainerWord> words;
  {
    std::map<std::string, int64_t> ordered(counts.counts().begin(), counts.counts().end());
    words.reserve(ordered.size());
    for (const auto& [word, freq] : ordered) {
      TrainerWord tw;
      tw.freq = freq;
      size_t i = 0;
      uint32_t cp;
      bool first = true;
      while (i < word.size()) {
        utf8_next(word, i, cp);
        std::string ch = first ? "" : "##";
        utf8_append(ch, cp);
        tw.symbols.push_back(intern(ch));
        first = false;
      }
      words.push_back(std::move(tw));
    }
  }

  auto strip_cont = [](const std::string& s) {
    return s.rfind("##", 0) == 0 ? s.substr(2) : s;
  };

  while (vocab.size() < vocab_size) {
    // Recount symbol and adjacent-pair frequencies.
    std::unordered_map<int32_t, int64_t> sym_freq;
    std::map<std::pair<int32_t, int32_t>, int64_t> pair_freq;
    for (const auto& w : words) {
      for (size_t i = 0; i < w.symbols.size(); ++i) {
        sym_freq[w.symbols[i]] += w.freq;
        if (i + 1 < w.symbols.size()) pair_freq[{w.symbols[i], w.symbols[i + 1]}] += w.freq;
      }
    }
    if (pair_freq.empty()) break;  // nothing left to merge

    bool found = false;
    double best_score = 0.0;
    std::pair<int32_t, int32_t> best{};
    for (const auto& [pair, freq] : pair_freq) {
      const double score = static_cast<double>(freq) /
                           (static_cast<double>(sym_freq[pair.first]) *
                            static_cast<double>(sym_freq[pair.second]));
      bool better = !found || score > best_score;
      if (found && score == best_score) {
        const auto& ls = symtab[static_cast<size_t>(pair.first)];
        const auto& rs = symtab[static_cast<size_t>(pair.second)];
        const auto& bl = symtab[static_cast<size_t>(best.first)];
        const auto& br = symtab[static_cast<size_t>(best.second)];
        better = std::tie(ls, rs) < std::tie(bl, br);
      }
      if (better) {
        best = pair;
        best_score = score;
        found = true;
      }
    }

    const std::string merged =
        symtab[static_cast<size_t>(best.first)] + strip_cont(symtab[static_cast<size_t>(best.second)]);
    const int32_t merged_sym = intern(merged);
    vocab_add(vocab, merged);

    for (auto& w : words) {
      std::vector<int32_t> out;
      out.reserve(w.symbols.size());
      size_t i = 0;
      while (i < w.symbols.size()) {
        if (i + 1 < w.symbols.size() && w.symbols[i] == best.first &&
            w.symbols[i + 1] == best.second) {
          out.push_back(merged_sym);
          i += 2;
        } else {
          out.push_back(w.symbols[i]);
          ++i;
        }
      }
      w.symbols = std::move(out);
    }
  }

  vocab.validate();
  return vocab;
}

Vocabulary train_wordpiece(const std::vector<std::string>& sentences, int32_t vocab_size,
                           Casing casing) {
  WordCounts counts;
  for (const auto& s : sentences) counts.add_sentence(s);
  return train_wordpiece(counts, vocab_size, casing);
}

namespace {

// Greedy longest-match segmentation of one punctuation-free unit.
// Returns false if any remainder is unmatchable.
bool match_unit(const Vocabulary& vocab, std::string_view unit, std::vector<int32_t>& out) {
  size_t pos = 0;
  bool first = true;
  while (pos < unit.size()) {
    size_t end = unit.size();
    int32_t found = -1;
    while (end > pos) {
      std::string candidate = first ? std::string(unit.substr(pos, end - pos))
                                    : "##" + std::string(unit.substr(pos, end - pos));
      int32_t id = vocab.lookup(candidate);
      if (id >= 0) {
        found = id;
        break;
      }
      // Step back one full codepoint.
      do {
        --end;
      } while (end > pos && (static_cast<unsigned char>(unit[end]) & 0xC0) == 0x80);
    }
    if (found < 0) return false;
    out.push_back(found);
    pos = end;
    first = false;
  }
  return true;
}

}  // namespace

Encoding encode(const Vocabulary& vocab, std::string_view normalized_text) {
  Encoding enc;
  int32_t word_idx = 0;
  for (std::string_view word : split_words(normalized_text)) {
    std::vector<int32_t> ids;
    bool ok = codepoint_count(word) <= kMaxWordChars;
    if (ok) {
      for (const std::string& unit : split_punctuation(word)) {
        if (!match_unit(vocab, unit, ids)) {
          ok = false;
          break;
        }
      }
    }
    if (!ok || ids.empty()) {
      ids.assign(1, vocab.unk_id);
    }
    for (size_t k = 0; k < ids.size(); ++k) {
      enc.ids.push_back(ids[k]);
      enc.word_start.push_back(k == 0 ? 1 : 0);
      enc.word_index.push_back(word_idx);
    }
    ++word_idx;
  }
  return enc;
}

std::string decode(const Vocabulary& vocab, std::span<const int32_t> ids) {
  std::string out;
  for (int32_t id : ids) {
    const std::string& tok = vocab.token(id);  // throws on out-of-range
    if (vocab.is_special(id)) continue;
    if (tok.rfind(vocab.continuation, 0) == 0) {
      out += tok.substr(vocab.continuation.size());
    } else {
      if (!out.empty()) out.push_back(' ');
      out += tok;
    }
  }
  return out;
}

void save_vocab(const Vocabulary& vocab, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail_data("cannot open vocabulary file for writing: " + path);
  for (const auto& t : vocab.tokens) f << t << '\n';
  if (!f) fail_data("failed writing vocabulary file: " + path);
}

Vocabulary load_vocab(const std::string& path, Casing casing) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail_data("cannot open vocabulary file: " + path);
  Vocabulary v;
  v.casing = casing;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    v.token_to_id.emplace(line, v.size());
    v.tokens.push_back(line);
  }
  v.pad_id = v.lookup(Vocabulary::kPad);
  v.unk_id = v.lookup(Vocabulary::kUnk);
  v.cls_id = v.lookup(Vocabulary::kCls);
  v.sep_id = v.lookup(Vocabulary::kSep);
  v.mask_id = v.lookup(Vocabulary::kMask);
  v.validate();
  return v;
}

}  // namespace minibert
