// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace minibert {

struct TagSequencePair {
  std::vector<std::string> gold;
  std::vector<std::string> pred;
};

struct Span {
  int start;
  int end;  // inclusive
  std::string label;
  auto operator<=>(const Span&) const = default;
};

struct PrecisionRecallF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool zero_support = false;  // no positive instances anywhere; scores report 1.0
  int64_t tp = 0, fp = 0, fn = 0;
};

struct EvalReport {
  std::string metric;
  double value = 0.0;
  double half_width = 0.0;  // 95% confidence half-width
  int runs = 1;
  bool has_interval = false;
};

// Maximal B-initiated same-label runs; an I without a preceding same-label
// span opens a new one (lenient conlleval-style repair). O breaks spans.
std::set<Span> extract_spans(const std::vector<std::string>& tags);

// Micro-averaged exact (start, end, label) span matching, O never a span.
PrecisionRecallF1 entity_f1(const std::vector<TagSequencePair>& pairs);

// Micro F1 over tokens where gold or pred differs from O.
PrecisionRecallF1 token_f1(const std::vector<TagSequencePair>& pairs);

// Positionwise "B-"/"I-" prefix removal; O stays O.
std::vector<std::string> strip_bio(const std::vector<std::string>& tags);

double pearson(const std::vector<double>& x, const std::vector<double>& y);
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// Probability a random positive outscores a random negative, ties at 1/2.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

// Per-label AUROC macro-averaged over labels with at least one positive and
// one negative; rows are per-document score vectors / label sets.
struct MacroAuroc {
  double value = 0.0;
  int labels_used = 0;
  int labels_skipped = 0;
};
MacroAuroc multilabel_auroc(const std::vector<std::vector<double>>& scores,
                            const std::vector<std::vector<uint8_t>>& labels);

// Micro F1 over (document, label) incidence pairs.
PrecisionRecallF1 multilabel_f1(const std::vector<std::set<int>>& pred,
                                const std::vector<std::set<int>>& gold);

// mean +- 1.96 * sample std / sqrt(n); single values report no interval.
EvalReport confidence_interval(const std::vector<double>& values,
                               const std::string& metric = "metric");

}  // namespace minibert
