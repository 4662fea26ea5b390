// SPDX-License-Identifier: Apache-2.0
#include "minibert/tasks.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace minibert {

TaskKind parse_task_kind(const std::string& name) {
  if (name == "token" || name == "ner" || name == "pos") return TaskKind::TokenClassification;
  if (name == "sequence" || name == "sentiment") return TaskKind::SequenceClassification;
  if (name == "sts" || name == "regression") return TaskKind::PairRegression;
  if (name == "mlc" || name == "multilabel") return TaskKind::MultilabelClassification;
  if (name == "srl") return TaskKind::SrlClassification;
  fail_usage("unknown task: " + name);
}

std::string task_kind_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::TokenClassification: return "token";
    case TaskKind::SequenceClassification: return "sequence";
    case TaskKind::PairRegression: return "regression";
    case TaskKind::MultilabelClassification: return "multilabel";
    case TaskKind::SrlClassification: return "srl";
  }
  return "unknown";
}

int32_t head_output_size(TaskKind kind, size_t label_count) {
  if (kind == TaskKind::PairRegression) return 1;
  if (label_count == 0) fail_data("task needs a non-empty label inventory");
  return static_cast<int32_t>(label_count);
}

namespace {

struct EncodedWord {
  std::vector<int32_t> pieces;
};

std::vector<EncodedWord> encode_words(const std::vector<std::string>& words,
                                      const Vocabulary& vocab) {
  std::vector<EncodedWord> out;
  out.reserve(words.size());
  for (const auto& w : words) {
    EncodedWord ew;
    ew.pieces = encode(vocab, normalize(w, vocab.casing)).ids;
    if (ew.pieces.empty()) ew.pieces.push_back(vocab.unk_id);
    out.push_back(std::move(ew));
  }
  return out;
}

TaskExample blank_example(int32_t max_len, const Vocabulary& vocab) {
  TaskExample ex;
  ex.input_ids.assign(static_cast<size_t>(max_len), vocab.pad_id);
  ex.segment_ids.assign(static_cast<size_t>(max_len), 0);
  ex.token_labels.assign(static_cast<size_t>(max_len), kIgnoreLabel);
  ex.first_subword.assign(static_cast<size_t>(max_len), 0);
  ex.word_index.assign(static_cast<size_t>(max_len), -1);
  return ex;
}

}  // namespace

std::vector<TaskExample> encode_token_task(const std::vector<std::string>& words,
                                           const std::vector<int32_t>& label_ids,
                                           const Vocabulary& vocab, int32_t max_len) {
  if (words.size() != label_ids.size()) fail_data("token task: words and labels differ in length");
  std::vector<TaskExample> out;
  if (words.empty()) return out;

  const size_t capacity = static_cast<size_t>(max_len) - 2;
  const std::vector<EncodedWord> encoded = encode_words(words, vocab);
  for (size_t w = 0; w < encoded.size(); ++w) {
    if (encoded[w].pieces.size() > capacity) {
      fail_data("token task: word " + std::to_string(w) + " spans " +
                std::to_string(encoded[w].pieces.size()) + " subwords, over the capacity of " +
                std::to_string(capacity));
    }
  }

  size_t w = 0;
  while (w < encoded.size()) {
    TaskExample ex = blank_example(max_len, vocab);
    size_t t = 0;
    ex.input_ids[t++] = vocab.cls_id;
    while (w < encoded.size() && t + encoded[w].pieces.size() <= capacity + 1) {
      for (size_t k = 0; k < encoded[w].pieces.size(); ++k) {
        ex.input_ids[t] = encoded[w].pieces[k];
        ex.word_index[t] = static_cast<int32_t>(w);
        if (k == 0) {
          ex.first_subword[t] = 1;
          ex.token_labels[t] = label_ids[w];
        }
        ++t;
      }
      ++w;
    }
    ex.input_ids[t++] = vocab.sep_id;
    ex.real_len = static_cast<int32_t>(t);
    out.push_back(std::move(ex));
  }
  return out;
}

TaskExample encode_srl(const std::vector<std::string>& words, int predicate_begin,
                       int predicate_end, const std::vector<int32_t>& label_ids,
                       const Vocabulary& vocab, int32_t max_len) {
  if (words.empty()) fail_data("srl: empty sentence");
  if (predicate_begin < 0 || predicate_end < predicate_begin ||
      predicate_end >= static_cast<int>(words.size())) {
    fail_data("srl: predicate word range invalid");
  }
  if (!label_ids.empty() && label_ids.size() != words.size()) {
    fail_data("srl: words and labels differ in length");
  }

  const std::vector<EncodedWord> encoded = encode_words(words, vocab);
  // Per-word subword counts give in-sentence position ids (CLS is 0).
  std::vector<int32_t> word_first_pos(words.size());
  int32_t n_pieces = 0;
  for (size_t i = 0; i < encoded.size(); ++i) {
    word_first_pos[i] = 1 + n_pieces;
    n_pieces += static_cast<int32_t>(encoded[i].pieces.size());
  }

  std::vector<int32_t> pred_pieces;
  std::vector<int32_t> pred_positions;
  for (int wi = predicate_begin; wi <= predicate_end; ++wi) {
    for (size_t k = 0; k < encoded[static_cast<size_t>(wi)].pieces.size(); ++k) {
      pred_pieces.push_back(encoded[static_cast<size_t>(wi)].pieces[k]);
      pred_positions.push_back(word_first_pos[static_cast<size_t>(wi)] + static_cast<int32_t>(k));
    }
  }

  // Truncate sentence words from the end until everything fits.
  const int32_t overhead = 3 + static_cast<int32_t>(pred_pieces.size());  // CLS, 2x SEP, predicate
  size_t keep_words = words.size();
  int32_t kept_pieces = n_pieces;
  while (keep_words > 0 && kept_pieces + overhead > max_len) {
    --keep_words;
    kept_pieces -= static_cast<int32_t>(encoded[keep_words].pieces.size());
  }
  if (static_cast<int>(keep_words) <= predicate_end) {
    fail_data("srl: predicate would be truncated away at max_len " + std::to_string(max_len));
  }

  TaskExample ex = blank_example(max_len, vocab);
  ex.position_ids.assign(static_cast<size_t>(max_len), 0);
  size_t t = 0;
  ex.input_ids[t] = vocab.cls_id;
  ex.position_ids[t] = 0;
  ++t;
  for (size_t wi = 0; wi < keep_words; ++wi) {
    for (size_t k = 0; k < encoded[wi].pieces.size(); ++k) {
      ex.input_ids[t] = encoded[wi].pieces[k];
      ex.position_ids[t] = word_first_pos[wi] + static_cast<int32_t>(k);
      ex.word_index[t] = static_cast<int32_t>(wi);
      if (k == 0) {
        ex.first_subword[t] = 1;
        if (!label_ids.empty()) ex.token_labels[t] = label_ids[wi];
      }
      ++t;
    }
  }
  ex.input_ids[t] = vocab.sep_id;
  ex.position_ids[t] = static_cast<int32_t>(t);
  const int32_t sep1_pos = static_cast<int32_t>(t);
  ++t;
  for (size_t k = 0; k < pred_pieces.size(); ++k) {
    ex.input_ids[t] = pred_pieces[k];
    ex.segment_ids[t] = 1;
    ex.position_ids[t] = pred_positions[k];  // copied in-sentence position id
    ++t;
  }
  ex.input_ids[t] = vocab.sep_id;
  ex.segment_ids[t] = 1;
  ex.position_ids[t] = sep1_pos + 1;
  ++t;
  ex.real_len = static_cast<int32_t>(t);
  return ex;
}

TaskExample encode_pair_task(const std::string& a, const std::string& b, const Vocabulary& vocab,
                             int32_t max_len) {
  if (max_len < 8) fail_data("pair task: max_len must be at least 8");
  std::vector<int32_t> ea = encode(vocab, normalize(a, vocab.casing)).ids;
  std::vector<int32_t> eb = encode(vocab, normalize(b, vocab.casing)).ids;
  truncate_pair(ea, eb, static_cast<size_t>(max_len) - 3);

  TaskExample ex = blank_example(max_len, vocab);
  size_t t = 0;
  ex.input_ids[t++] = vocab.cls_id;
  for (int32_t id : ea) ex.input_ids[t++] = id;
  ex.input_ids[t++] = vocab.sep_id;
  for (int32_t id : eb) {
    ex.segment_ids[t] = 1;
    ex.input_ids[t++] = id;
  }
  ex.segment_ids[t] = 1;
  ex.input_ids[t++] = vocab.sep_id;
  ex.real_len = static_cast<int32_t>(t);
  return ex;
}

TaskExample encode_document(const std::string& doc, const Vocabulary& vocab, int32_t max_len) {
  if (max_len < 2) fail_data("document task: max_len must be at least 2");
  std::vector<int32_t> ids = encode(vocab, normalize(doc, vocab.casing)).ids;
  const size_t capacity = static_cast<size_t>(max_len) - 2;
  if (ids.size() > capacity) ids.resize(capacity);  // keep the first N tokens

  TaskExample ex = blank_example(max_len, vocab);
  size_t t = 0;
  ex.input_ids[t++] = vocab.cls_id;
  for (int32_t id : ids) ex.input_ids[t++] = id;
  ex.input_ids[t++] = vocab.sep_id;
  ex.real_len = static_cast<int32_t>(t);
  return ex;
}

std::vector<std::string> gold_tags(const std::vector<TaskExample>& parts,
                                   const std::vector<std::string>& labels) {
  std::vector<std::string> tags;
  for (const auto& ex : parts) {
    for (int t = 0; t < ex.real_len; ++t) {
      const int32_t y = ex.token_labels[static_cast<size_t>(t)];
      if (y == kIgnoreLabel) continue;
      if (y < 0 || y >= static_cast<int32_t>(labels.size())) {
        fail_data("gold label id outside the inventory");
      }
      tags.push_back(labels[static_cast<size_t>(y)]);
    }
  }
  return tags;
}

void validate_task_examples(TaskKind kind, size_t label_count,
                            const std::vector<TaskExample>& examples) {
  const int32_t C = head_output_size(kind, label_count);
  for (size_t i = 0; i < examples.size(); ++i) {
    const TaskExample& ex = examples[i];
    switch (kind) {
      case TaskKind::TokenClassification:
      case TaskKind::SrlClassification:
        for (int32_t y : ex.token_labels) {
          if (y != kIgnoreLabel && (y < 0 || y >= C)) {
            fail_data("example " + std::to_string(i) + ": token label " + std::to_string(y) +
                      " outside the inventory of " + std::to_string(C));
          }
        }
        break;
      case TaskKind::SequenceClassification:
        if (ex.class_label < 0 || ex.class_label >= C) {
          fail_data("example " + std::to_string(i) + ": class label outside the inventory");
        }
        break;
      case TaskKind::MultilabelClassification:
        if (static_cast<int32_t>(ex.multi_hot.size()) != C) {
          fail_data("example " + std::to_string(i) + ": multi-hot width " +
                    std::to_string(ex.multi_hot.size()) + " != label count " + std::to_string(C));
        }
        break;
      case TaskKind::PairRegression:
        break;
    }
  }
}

namespace {

std::vector<std::string> split_tsv(const std::string& line) {
  std::vector<std::string> cols;
  size_t start = 0;
  for (size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == '\t') {
      cols.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return cols;
}

}  // namespace

TokenDataset load_conll(const std::string& path, bool srl) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail_data("cannot open dataset: " + path);
  TokenDataset ds;
  std::vector<std::string> words, tags;
  std::pair<int, int> predicate{-1, -1};
  std::string line;
  size_t line_no = 0;

  auto flush = [&]() {
    if (words.empty()) return;
    if (srl && predicate.first < 0) {
      fail_data("srl dataset: sentence ending at line " + std::to_string(line_no) +
                " lacks a #predicate header");
    }
    ds.words.push_back(std::move(words));
    ds.tags.push_back(std::move(tags));
    ds.predicates.push_back(predicate);
    words.clear();
    tags.clear();
    predicate = {-1, -1};
  };

  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    utf8_validate(line);
    if (line.empty()) {
      flush();
      continue;
    }
    if (line.rfind("#predicate", 0) == 0) {
      auto cols = split_tsv(line);
      if (cols.size() != 3) {
        fail_data("line " + std::to_string(line_no) + ": #predicate expects begin and end columns");
      }
      predicate = {std::stoi(cols[1]), std::stoi(cols[2])};
      continue;
    }
    auto cols = split_tsv(line);
    if (cols.size() != 2 || cols[0].empty()) {
      fail_data("line " + std::to_string(line_no) + ": expected word<TAB>tag");
    }
    words.push_back(cols[0]);
    tags.push_back(cols[1]);
  }
  flush();
  return ds;
}

PairDataset load_pairs_tsv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail_data("cannot open dataset: " + path);
  PairDataset ds;
  std::string line;
  size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    utf8_validate(line);
    auto cols = split_tsv(line);
    if (cols.size() != 3) {
      fail_data("line " + std::to_string(line_no) + ": expected sentence_a<TAB>sentence_b<TAB>target");
    }
    ds.a.push_back(cols[0]);
    ds.b.push_back(cols[1]);
    ds.target.push_back(cols[2]);
  }
  return ds;
}

DocDataset load_docs_tsv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail_data("cannot open dataset: " + path);
  DocDataset ds;
  std::string line;
  size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    utf8_validate(line);
    auto cols = split_tsv(line);
    if (cols.size() != 2) {
      fail_data("line " + std::to_string(line_no) + ": expected text<TAB>labels");
    }
    ds.text.push_back(cols[0]);
    std::vector<std::string> labels;
    size_t start = 0;
    const std::string& spec = cols[1];
    for (size_t i = 0; i <= spec.size(); ++i) {
      if (i == spec.size() || spec[i] == ',') {
        if (i > start) labels.push_back(spec.substr(start, i - start));
        start = i + 1;
      }
    }
    ds.labels.push_back(std::move(labels));
  }
  return ds;
}

std::vector<std::string> collect_tag_inventory(const std::vector<std::vector<std::string>>& tags) {
  std::set<std::string> unique;
  for (const auto& sent : tags) unique.insert(sent.begin(), sent.end());
  return {unique.begin(), unique.end()};
}

}  // namespace minibert
