// SPDX-License-Identifier: Apache-2.0
#include "minibert/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "minibert/error.hpp"

namespace minibert {

namespace {

struct ParsedTag {
  char prefix;        // 'B', 'I' or 'O'
  std::string label;  // empty for O
};

ParsedTag parse_tag(const std::string& tag, size_t position) {
  if (tag == "O") return {'O', ""};
  if (tag.size() >= 3 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-') {
    return {tag[0], tag.substr(2)};
  }
  fail_data("malformed BIO tag \"" + tag + "\" at position " + std::to_string(position));
}

PrecisionRecallF1 from_counts(int64_t tp, int64_t fp, int64_t fn) {
  PrecisionRecallF1 r;
  r.tp = tp;
  r.fp = fp;
  r.fn = fn;
  if (tp + fp + fn == 0) {
    r.precision = r.recall = r.f1 = 1.0;
    r.zero_support = true;
    return r;
  }
  r.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  r.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  r.f1 = r.precision + r.recall == 0.0
             ? 0.0
             : 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

}  // namespace

std::set<Span> extract_spans(const std::vector<std::string>& tags) {
  std::set<Span> spans;
  int start = -1;
  std::string label;
  auto close = [&](int end) {
    if (start >= 0) spans.insert({start, end, label});
    start = -1;
  };
  for (size_t i = 0; i < tags.size(); ++i) {
    ParsedTag t = parse_tag(tags[i], i);
    if (t.prefix == 'O') {
      close(static_cast<int>(i) - 1);
    } else if (t.prefix == 'B') {
      close(static_cast<int>(i) - 1);
      start = static_cast<int>(i);
      label = t.label;
    } else {  // I
      if (start < 0 || t.label != label) {
        close(static_cast<int>(i) - 1);  // lenient repair: treat as span start
        start = static_cast<int>(i);
        label = t.label;
      }
    }
  }
  close(static_cast<int>(tags.size()) - 1);
  return spans;
}

PrecisionRecallF1 entity_f1(const std::vector<TagSequencePair>& pairs) {
  int64_t tp = 0, fp = 0, fn = 0;
  for (const auto& p : pairs) {
    if (p.gold.size() != p.pred.size()) {
      fail_data("gold/pred length mismatch: " + std::to_string(p.gold.size()) + " vs " +
                std::to_string(p.pred.size()));
    }
    std::set<Span> g = extract_spans(p.gold);
    std::set<Span> q = extract_spans(p.pred);
    for (const auto& s : q) {
      if (g.count(s)) {
        ++tp;
      } else {
        ++fp;
      }
    }
    for (const auto& s : g) {
      if (!q.count(s)) ++fn;
    }
  }
  return from_counts(tp, fp, fn);
}

PrecisionRecallF1 token_f1(const std::vector<TagSequencePair>& pairs) {
  int64_t tp = 0, fp = 0, fn = 0;
  for (const auto& p : pairs) {
    if (p.gold.size() != p.pred.size()) {
      fail_data("gold/pred length mismatch: " + std::to_string(p.gold.size()) + " vs " +
                std::to_string(p.pred.size()));
    }
    for (size_t i = 0; i < p.gold.size(); ++i) {
      const bool gold_o = p.gold[i] == "O";
      const bool pred_o = p.pred[i] == "O";
      if (gold_o && pred_o) continue;
      if (p.gold[i] == p.pred[i]) {
        ++tp;
      } else {
        if (!pred_o) ++fp;
        if (!gold_o) ++fn;
      }
    }
  }
  return from_counts(tp, fp, fn);
}

std::vector<std::string> strip_bio(const std::vector<std::string>& tags) {
  std::vector<std::string> out;
  out.reserve(tags.size());
  for (size_t i = 0; i < tags.size(); ++i) {
    ParsedTag t = parse_tag(tags[i], i);
    out.push_back(t.prefix == 'O' ? "O" : t.label);
  }
  return out;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) fail_data("pearson: length mismatch");
  const size_t n = x.size();
  if (n < 2) fail_data("pearson: need at least 2 points");
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) fail_data("pearson: constant input, correlation undefined");
  return sxy / std::sqrt(sxx * syy);
}

namespace {

// Fractional (average) ranks, 1-based.
std::vector<double> ranks(const std::vector<double>& v) {
  const size_t n = v.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> r(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) fail_data("spearman: length mismatch");
  if (x.size() < 2) fail_data("spearman: need at least 2 points");
  return pearson(ranks(x), ranks(y));
}

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) fail_data("auroc: length mismatch");
  // Mann-Whitney via rank sums, ties averaged.
  int64_t positives = 0, negatives = 0;
  for (int l : labels) (l != 0 ? positives : negatives)++;
  if (positives == 0 || negatives == 0) {
    fail_data("auroc: need at least one positive and one negative");
  }
  std::vector<double> r = ranks(scores);
  double rank_sum = 0.0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 0) rank_sum += r[i];
  }
  const double p = static_cast<double>(positives);
  const double u = rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

MacroAuroc multilabel_auroc(const std::vector<std::vector<double>>& scores,
                            const std::vector<std::vector<uint8_t>>& labels) {
  if (scores.size() != labels.size()) fail_data("multilabel auroc: row count mismatch");
  if (scores.empty()) fail_data("multilabel auroc: no documents");
  const size_t n_labels = labels[0].size();
  MacroAuroc out;
  double sum = 0.0;
  for (size_t l = 0; l < n_labels; ++l) {
    std::vector<double> s;
    std::vector<int> y;
    for (size_t d = 0; d < scores.size(); ++d) {
      if (scores[d].size() != n_labels || labels[d].size() != n_labels) {
        fail_data("multilabel auroc: ragged rows");
      }
      s.push_back(scores[d][l]);
      y.push_back(labels[d][l] != 0 ? 1 : 0);
    }
    const bool has_pos = std::find(y.begin(), y.end(), 1) != y.end();
    const bool has_neg = std::find(y.begin(), y.end(), 0) != y.end();
    if (!has_pos || !has_neg) {
      ++out.labels_skipped;
      continue;
    }
    sum += auroc(s, y);
    ++out.labels_used;
  }
  if (out.labels_used == 0) fail_data("multilabel auroc: every label was single-class");
  out.value = sum / static_cast<double>(out.labels_used);
  return out;
}

PrecisionRecallF1 multilabel_f1(const std::vector<std::set<int>>& pred,
                                const std::vector<std::set<int>>& gold) {
  if (pred.size() != gold.size()) fail_data("multilabel f1: length mismatch");
  int64_t tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    for (int l : pred[i]) {
      if (gold[i].count(l)) {
        ++tp;
      } else {
        ++fp;
      }
    }
    for (int l : gold[i]) {
      if (!pred[i].count(l)) ++fn;
    }
  }
  return from_counts(tp, fp, fn);
}

EvalReport confidence_interval(const std::vector<double>& values, const std::string& metric) {
  if (values.empty()) fail_data("confidence interval: no values");
  EvalReport r;
  r.metric = metric;
  r.runs = static_cast<int>(values.size());
  const double n = static_cast<double>(values.size());
  r.value = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - r.value) * (v - r.value);
    const double sample_std = std::sqrt(ss / (n - 1.0));
    r.half_width = 1.96 * sample_std / std::sqrt(n);
    r.has_interval = true;
  }
  return r;
}

}  // namespace minibert
