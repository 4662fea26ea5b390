// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace minibert {

// A contiguous paragraph of sentences; the unit next-sentence pairs are
// drawn from.
struct TextBlock {
  int64_t id = 0;
  std::vector<std::string> sentences;
  std::string source = "";
};

struct CorpusStats {
  int64_t blocks = 0;     // nonempty blocks
  int64_t sentences = 0;
  bool empty_corpus = true;

  double avg_sentences_per_block() const {
    return blocks == 0 ? 0.0 : static_cast<double>(sentences) / static_cast<double>(blocks);
  }
  // Each block with >=1 sentence loses exactly its last sentence to pairing.
  double unpairable_fraction() const {
    return sentences == 0 ? 0.0 : static_cast<double>(blocks) / static_cast<double>(sentences);
  }
  void add_block(const TextBlock& block);
  void merge(const CorpusStats& other);
};

enum class CorpusFormat { BlankLineBlocks, OneDocPerLine };

CorpusFormat parse_corpus_format(std::string_view name);

// Default Czech-oriented abbreviation guard (entries stored without the dot).
const std::set<std::string>& default_abbreviations();
std::set<std::string> load_abbreviations(const std::string& path);

// Rule-based splitter: breaks after {., !, ?} followed by whitespace and an
// uppercase letter or digit, unless the preceding token is a guarded
// abbreviation or a single letter (initials). Terminators stay attached.
std::vector<std::string> split_sentences(std::string_view text,
                                         const std::set<std::string>& abbreviations =
                                             default_abbreviations());

// Streams blocks in file order. blank-line-blocks: runs of non-blank lines
// form one block, one sentence per line. one-doc-per-line: each line is one
// block, sentence-split. Invalid UTF-8 fails with the byte offset.
void ingest(const std::string& path, CorpusFormat format,
            const std::function<void(TextBlock&&)>& sink,
            const std::set<std::string>& abbreviations = default_abbreviations());

std::vector<TextBlock> ingest_all(const std::string& path, CorpusFormat format);

CorpusStats corpus_stats(const std::vector<TextBlock>& blocks);
CorpusStats corpus_stats_file(const std::string& path, CorpusFormat format);

}  // namespace minibert
