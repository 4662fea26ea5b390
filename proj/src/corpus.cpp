// SPDX-License-Identifier: Apache-2.0
#include "minibert/corpus.hpp"

#include <fstream>

#include "minibert/error.hpp"
#include "minibert/text.hpp"

namespace minibert {

void CorpusStats::add_block(const TextBlock& block) {
  if (block.sentences.empty()) return;
  ++blocks;
  sentences += static_cast<int64_t>(block.sentences.size());
  empty_corpus = false;
}

void CorpusStats::merge(const CorpusStats& other) {
  blocks += other.blocks;
  sentences += other.sentences;
  empty_corpus = empty_corpus && other.empty_corpus;
}

CorpusFormat parse_corpus_format(std::string_view name) {
  if (name == "blank-line-blocks") return CorpusFormat::BlankLineBlocks;
  if (name == "one-doc-per-line") return CorpusFormat::OneDocPerLine;
  fail_usage("unknown corpus format: " + std::string(name));
}

const std::set<std::string>& default_abbreviations() {
  static const std::set<std::string> abbrevs = {
      // Czech
      "č", "čj", "čp", "str", "tzv", "např", "např", "atd", "apod", "tj", "tzn", "resp",
      "mj", "př", "pí", "sv", "st", "mudr", "judr", "phdr", "rndr", "ing", "mgr", "bc",
      "doc", "prof", "dr", "csc", "cca", "hod", "kč", "mil", "mld", "tis", "okr", "ul",
      "nám", "roč", "vyd", "red", "ed", "pozn", "srov", "stol", "př.n.l", "n.l",
      // common Latin / English
      "etc", "et", "al", "vs", "no", "vol", "mr", "mrs", "ms", "e.g", "i.e",
  };
  return abbrevs;
}

namespace {

// Lowercase without diacritic stripping, matching preceding_token below.
std::string lowercase_utf8(std::string_view text) {
  std::string out;
  size_t i = 0;
  uint32_t cp;
  while (i < text.size()) {
    if (!utf8_next(text, i, cp)) fail_data("invalid UTF-8 in abbreviation");
    utf8_append(out, lower_codepoint(cp));
  }
  return out;
}

}  // namespace

std::set<std::string> load_abbreviations(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail_data("cannot open abbreviation file: " + path);
  std::set<std::string> out;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    while (!line.empty() && line.back() == '.') line.pop_back();
    if (!line.empty()) out.insert(lowercase_utf8(line));
  }
  return out;
}

namespace {

struct Cp {
  uint32_t value;
  size_t byte_start;
};

std::vector<Cp> decode_all(std::string_view text) {
  std::vector<Cp> cps;
  size_t i = 0;
  uint32_t cp;
  while (i < text.size()) {
    size_t start = i;
    if (!utf8_next(text, i, cp)) fail_data("invalid UTF-8 at byte offset " + std::to_string(start));
    cps.push_back({cp, start});
  }
  return cps;
}

// The word immediately preceding cps[dot], lowercased, dots trimmed.
std::string preceding_token(const std::vector<Cp>& cps, size_t dot) {
  std::string token;
  size_t begin = dot;
  while (begin > 0 && !is_space_codepoint(cps[begin - 1].value)) --begin;
  for (size_t k = begin; k < dot; ++k) {
    uint32_t c = cps[k].value;
    if (c == '.' && k + 1 == dot) continue;  // trailing dots of multi-dot abbreviations
    utf8_append(token, lower_codepoint(c));
  }
  return token;
}

}  // namespace

std::vector<std::string> split_sentences(std::string_view text,
                                         const std::set<std::string>& abbreviations) {
  std::vector<std::string> out;
  const std::vector<Cp> cps = decode_all(text);
  size_t sent_begin = 0;  // codepoint index

  auto flush = [&](size_t end_cp) {
    // [sent_begin, end_cp) in codepoints, trimmed of spaces.
    size_t b = sent_begin, e = end_cp;
    while (b < e && is_space_codepoint(cps[b].value)) ++b;
    while (e > b && is_space_codepoint(cps[e - 1].value)) --e;
    if (b < e) {
      size_t byte_b = cps[b].byte_start;
      size_t byte_e = e < cps.size() ? cps[e].byte_start : text.size();
      out.emplace_back(text.substr(byte_b, byte_e - byte_b));
    }
    sent_begin = end_cp;
  };

  for (size_t i = 0; i < cps.size(); ++i) {
    uint32_t c = cps[i].value;
    if (c != '.' && c != '!' && c != '?') continue;
    // Require whitespace, then an uppercase letter or digit.
    size_t j = i + 1;
    if (j >= cps.size() || !is_space_codepoint(cps[j].value)) continue;
    while (j < cps.size() && is_space_codepoint(cps[j].value)) ++j;
    if (j >= cps.size()) continue;
    if (!is_upper_codepoint(cps[j].value) && !is_digit_codepoint(cps[j].value)) continue;
    if (c == '.') {
      std::string prev = preceding_token(cps, i);
      if (abbreviations.count(prev) > 0) continue;
      if (codepoint_count(prev) == 1 && !prev.empty() && !is_digit_codepoint(prev[0] & 0xFFu)) {
        continue;  // single-letter initials like "K."
      }
    }
    flush(i + 1);
  }
  flush(cps.size());
  return out;
}

void ingest(const std::string& path, CorpusFormat format,
            const std::function<void(TextBlock&&)>& sink,
            const std::set<std::string>& abbreviations) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail_data("cannot open corpus file: " + path);

  int64_t next_id = 0;
  size_t byte_offset = 0;
  std::string line;
  TextBlock block;

  auto emit = [&]() {
    if (!block.sentences.empty()) {
      block.id = next_id++;
      sink(std::move(block));
      block = TextBlock{};
    }
  };

  while (std::getline(f, line)) {
    size_t line_start = byte_offset;
    byte_offset += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    utf8_validate(line, line_start);

    if (format == CorpusFormat::BlankLineBlocks) {
      std::string s = normalize(line, Casing::Cased);
      if (s.empty()) {
        emit();
      } else {
        block.sentences.push_back(std::move(s));
      }
    } else {
      std::string doc = normalize(line, Casing::Cased);
      if (doc.empty()) continue;
      TextBlock b;
      b.sentences = split_sentences(doc, abbreviations);
      if (!b.sentences.empty()) {
        b.id = next_id++;
        sink(std::move(b));
      }
    }
  }
  if (format == CorpusFormat::BlankLineBlocks) emit();
}

std::vector<TextBlock> ingest_all(const std::string& path, CorpusFormat format) {
  std::vector<TextBlock> blocks;
  ingest(path, format, [&](TextBlock&& b) { blocks.push_back(std::move(b)); });
  return blocks;
}

CorpusStats corpus_stats(const std::vector<TextBlock>& blocks) {
  CorpusStats stats;
  for (const auto& b : blocks) stats.add_block(b);
  return stats;
}

CorpusStats corpus_stats_file(const std::string& path, CorpusFormat format) {
  CorpusStats stats;
  ingest(path, format, [&](TextBlock&& b) { stats.add_block(b); });
  return stats;
}

}  // namespace minibert
