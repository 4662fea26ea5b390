// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "minibert/encoder.hpp"
#include "minibert/grad_accum.hpp"
#include "minibert/metrics.hpp"
#include "minibert/model.hpp"
#include "minibert/tokenizer.hpp"
#include "minibert/trainer.hpp"

namespace minibert {

enum class TaskKind : int32_t {
  TokenClassification = 0,
  SequenceClassification = 1,
  PairRegression = 2,
  MultilabelClassification = 3,
  SrlClassification = 4,
};

TaskKind parse_task_kind(const std::string& name);
std::string task_kind_name(TaskKind kind);

inline constexpr int32_t kIgnoreLabel = -1;

// One fine-tuning input. Targets occupy only the slot matching the task kind;
// token-level targets sit at first-subword positions, everything else is the
// ignore marker.
struct TaskExample {
  std::vector<int32_t> input_ids;
  std::vector<int32_t> segment_ids;
  std::vector<int32_t> position_ids;  // empty = 0..len-1
  int32_t real_len = 0;

  std::vector<int32_t> token_labels;  // per position, kIgnoreLabel elsewhere
  std::vector<uint8_t> first_subword;
  std::vector<int32_t> word_index;    // original word per position, -1 at specials

  int32_t class_label = -1;
  double score = 0.0;
  std::vector<uint8_t> multi_hot;

  Features features() const {
    Features f;
    f.input_ids = input_ids;
    f.segment_ids = segment_ids;
    f.position_ids = position_ids;
    f.real_len = real_len;
    return f;
  }
};

// Subword-encodes the words, attaching each label to the first subword;
// sequences over max_len split at word boundaries and the residual starts a
// new example. A single word longer than the capacity is an error.
std::vector<TaskExample> encode_token_task(const std::vector<std::string>& words,
                                           const std::vector<int32_t>& label_ids,
                                           const Vocabulary& vocab, int32_t max_len = 128);

// [CLS] sentence [SEP] predicate [SEP]; the appended predicate subwords copy
// the position ids of their in-sentence occurrence and carry segment id 1.
// predicate_begin/end are inclusive word indices. label_ids may be empty for
// prediction-only encoding.
TaskExample encode_srl(const std::vector<std::string>& words, int predicate_begin,
                       int predicate_end, const std::vector<int32_t>& label_ids,
                       const Vocabulary& vocab, int32_t max_len = 128);

// Pretraining pair layout (alternating longest-first truncation) without
// masking; the caller fills the score or class target.
TaskExample encode_pair_task(const std::string& a, const std::string& b, const Vocabulary& vocab,
                             int32_t max_len);

// First max_len-2 subwords of the document, [CLS]/[SEP]-wrapped.
TaskExample encode_document(const std::string& doc, const Vocabulary& vocab,
                            int32_t max_len = 512);

template <typename S>
struct TaskModel {
  ParameterSet<S> params;  // backbone plus attached head
  TaskKind kind = TaskKind::SequenceClassification;
  std::vector<std::string> labels;  // inventory; size 1 vector for regression
};

template <typename S>
struct TaskOutput {
  int32_t seq_len = 0;
  std::vector<S> logits;  // C for sequence kinds, T x C for token kinds, 1 for regression
};

struct Prediction {
  std::vector<std::string> token_tags;  // one per word, token kinds
  int class_index = -1;
  double score = 0.0;
  std::vector<double> probabilities;  // per label, multilabel
  std::set<int> label_set;            // multilabel at threshold 0.5
};

struct FinetuneHyper {
  double lr = 5e-5;
  int32_t epochs = 3;
  int32_t batch = 32;
  int64_t warmup = 0;
  float dropout = 0.1f;
  uint64_t seed = 0;
  int64_t log_every = 0;  // 0 = epoch-level logging only
};

struct EpochLog {
  int32_t epoch = 0;
  double train_loss = 0.0;
  double dev_metric = 0.0;
};

template <typename S>
struct FinetuneResult {
  TaskModel<S> model;
  std::vector<EpochLog> log;
  double best_dev = 0.0;
  int32_t best_epoch = -1;
};

int32_t head_output_size(TaskKind kind, size_t label_count);

namespace detail {

inline bool token_kind(TaskKind k) {
  return k == TaskKind::TokenClassification || k == TaskKind::SrlClassification;
}

inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// Head forward on a finished backbone pass. For token kinds the head maps
// every position; sequence kinds map the pooled vector. Dropout (train mode)
// is applied to the head input, mirroring the dropout-then-affine layout.
template <typename S>
TaskOutput<S> task_head_forward(const TaskModel<S>& m, const detail::Trace<S>& tr,
                                const ForwardResult<S>& out, RunMode mode, uint64_t seed,
                                std::vector<S>* head_in_store, std::vector<uint8_t>* drop_mask) {
  const int H = m.params.config.hidden_size;
  const int C = m.params.head_size;
  const double p = m.params.config.dropout;
  const bool training = mode == RunMode::Train && p > 0.0f;
  Rng rng(mix_seed(seed, 0x6ead));

  TaskOutput<S> o;
  o.seq_len = out.seq_len;
  if (token_kind(m.kind)) {
    std::vector<S> head_in = out.hidden;
    if (training) {
      drop_mask->resize(head_in.size());
      nn::dropout_forward(head_in.data(), drop_mask->data(), head_in.size(), p, rng);
    }
    o.logits.assign(static_cast<size_t>(out.seq_len) * C, S(0));
    nn::affine(head_in.data(), m.params.ptr(m.params.refs.headw), m.params.ptr(m.params.refs.headb),
               o.logits.data(), out.seq_len, H, C);
    if (head_in_store != nullptr) *head_in_store = std::move(head_in);
  } else {
    std::vector<S> head_in = out.pooled;
    if (training) {
      drop_mask->resize(head_in.size());
      nn::dropout_forward(head_in.data(), drop_mask->data(), head_in.size(), p, rng);
    }
    o.logits.assign(static_cast<size_t>(C), S(0));
    nn::affine(head_in.data(), m.params.ptr(m.params.refs.headw), m.params.ptr(m.params.refs.headb),
               o.logits.data(), 1, H, C);
    if (head_in_store != nullptr) *head_in_store = std::move(head_in);
  }
  return o;
}

}  // namespace detail

template <typename S>
TaskOutput<S> task_forward(const TaskModel<S>& m, const TaskExample& ex, RunMode mode,
                           uint64_t seed = 0) {
  if (m.params.head_size <= 0) fail_data("task model has no head attached");
  detail::Trace<S> tr;
  ForwardResult<S> out = detail::run_forward(m.params, ex.features(), mode, seed, &tr);
  std::vector<uint8_t> mask;
  return detail::task_head_forward(m, tr, out, mode, seed, static_cast<std::vector<S>*>(nullptr),
                                   &mask);
}

// Loss of a finished head pass; dlogits (same shape as logits) is optional.
template <typename S>
double task_loss(const TaskModel<S>& m, const TaskOutput<S>& o, const TaskExample& ex,
                 std::vector<S>* dlogits = nullptr) {
  const int C = m.params.head_size;
  if (dlogits != nullptr) dlogits->assign(o.logits.size(), S(0));
  switch (m.kind) {
    case TaskKind::TokenClassification:
    case TaskKind::SrlClassification: {
      int64_t labeled = 0;
      for (int t = 0; t < o.seq_len; ++t) {
        if (ex.token_labels[static_cast<size_t>(t)] != kIgnoreLabel) ++labeled;
      }
      if (labeled == 0) return 0.0;
      double total = 0.0;
      for (int t = 0; t < o.seq_len; ++t) {
        const int32_t y = ex.token_labels[static_cast<size_t>(t)];
        if (y == kIgnoreLabel) continue;
        if (y < 0 || y >= C) fail_data("token label outside the inventory");
        total += nn::cross_entropy(o.logits.data() + static_cast<size_t>(t) * C, C, y,
                                   dlogits != nullptr ? dlogits->data() + static_cast<size_t>(t) * C
                                                      : nullptr,
                                   1.0 / static_cast<double>(labeled));
      }
      return total / static_cast<double>(labeled);
    }
    case TaskKind::SequenceClassification: {
      if (ex.class_label < 0 || ex.class_label >= C) fail_data("class label outside the inventory");
      return nn::cross_entropy(o.logits.data(), C, ex.class_label,
                               dlogits != nullptr ? dlogits->data() : nullptr, 1.0);
    }
    case TaskKind::MultilabelClassification: {
      if (static_cast<int>(ex.multi_hot.size()) != C) {
        fail_data("multi-hot target length does not match the label inventory");
      }
      double total = 0.0;
      for (int c = 0; c < C; ++c) {
        const double z = static_cast<double>(o.logits[static_cast<size_t>(c)]);
        const double y = ex.multi_hot[static_cast<size_t>(c)] ? 1.0 : 0.0;
        total += detail::softplus(z) - y * z;  // BCE via logits
        if (dlogits != nullptr) {
          const double sig = 1.0 / (1.0 + std::exp(-z));
          (*dlogits)[static_cast<size_t>(c)] = static_cast<S>((sig - y) / C);
        }
      }
      return total / C;
    }
    case TaskKind::PairRegression: {
      const double z = static_cast<double>(o.logits[0]);
      const double d = z - ex.score;
      if (dlogits != nullptr) (*dlogits)[0] = static_cast<S>(2.0 * d);
      return d * d;
    }
  }
  fail_data("unknown task kind");
}

// Analytic gradients of the task loss through the head and backbone.
template <typename S>
double task_backward(const TaskModel<S>& m, const TaskExample& ex, ParameterSet<S>& grads,
                     RunMode mode, uint64_t seed = 0) {
  if (m.params.head_size <= 0) fail_data("task model has no head attached");
  const int H = m.params.config.hidden_size;
  const int C = m.params.head_size;
  const double p = m.params.config.dropout;
  const bool training = mode == RunMode::Train && p > 0.0f;

  detail::Trace<S> tr;
  ForwardResult<S> out = detail::run_forward(m.params, ex.features(), mode, seed, &tr);
  std::vector<S> head_in;
  std::vector<uint8_t> drop_mask;
  TaskOutput<S> o = detail::task_head_forward(m, tr, out, mode, seed, &head_in, &drop_mask);

  std::vector<S> dlogits;
  const double loss = task_loss(m, o, ex, &dlogits);

  std::vector<S> d_hidden(out.hidden.size(), S(0));
  std::vector<S> d_pooled(static_cast<size_t>(H), S(0));
  const int rows = detail::token_kind(m.kind) ? out.seq_len : 1;
  std::vector<S> d_head_in(static_cast<size_t>(rows) * H, S(0));
  nn::affine_backward_params(head_in.data(), dlogits.data(), grads.ptr(grads.refs.headw),
                             grads.ptr(grads.refs.headb), rows, H, C);
  nn::affine_backward_input(dlogits.data(), m.params.ptr(m.params.refs.headw), d_head_in.data(),
                            rows, H, C);
  if (training) nn::dropout_backward(d_head_in.data(), drop_mask.data(), d_head_in.size(), p);
  if (detail::token_kind(m.kind)) {
    d_hidden = std::move(d_head_in);
  } else {
    d_pooled = std::move(d_head_in);
  }
  detail::backbone_backward(m.params, ex.features(), tr, d_hidden, d_pooled, grads);
  return loss;
}

template <typename S>
Prediction predict_example(const TaskModel<S>& m, const TaskExample& ex) {
  TaskOutput<S> o = task_forward(m, ex, RunMode::Eval);
  const int C = m.params.head_size;
  Prediction pred;
  switch (m.kind) {
    case TaskKind::TokenClassification:
    case TaskKind::SrlClassification: {
      for (int t = 0; t < o.seq_len; ++t) {
        if (!ex.first_subword[static_cast<size_t>(t)]) continue;
        const S* row = o.logits.data() + static_cast<size_t>(t) * C;
        int best = 0;
        for (int c = 1; c < C; ++c) {
          if (row[c] > row[best]) best = c;
        }
        pred.token_tags.push_back(m.labels[static_cast<size_t>(best)]);
      }
      break;
    }
    case TaskKind::SequenceClassification: {
      int best = 0;
      for (int c = 1; c < C; ++c) {
        if (o.logits[static_cast<size_t>(c)] > o.logits[static_cast<size_t>(best)]) best = c;
      }
      pred.class_index = best;
      break;
    }
    case TaskKind::MultilabelClassification: {
      for (int c = 0; c < C; ++c) {
        const double prob = 1.0 / (1.0 + std::exp(-static_cast<double>(o.logits[static_cast<size_t>(c)])));
        pred.probabilities.push_back(prob);
        if (prob > 0.5) pred.label_set.insert(c);
      }
      break;
    }
    case TaskKind::PairRegression:
      pred.score = static_cast<double>(o.logits[0]);
      break;
  }
  return pred;
}

// Word-level tags of one sentence split across examples.
template <typename S>
std::vector<std::string> predict_tags(const TaskModel<S>& m, const std::vector<TaskExample>& parts) {
  std::vector<std::string> tags;
  for (const auto& ex : parts) {
    Prediction p = predict_example(m, ex);
    tags.insert(tags.end(), p.token_tags.begin(), p.token_tags.end());
  }
  return tags;
}

// Word-level gold tags recovered from the encoded targets.
std::vector<std::string> gold_tags(const std::vector<TaskExample>& parts,
                                   const std::vector<std::string>& labels);

template <typename S>
double dev_metric(const TaskModel<S>& m, const std::vector<std::vector<TaskExample>>& dev_groups) {
  switch (m.kind) {
    case TaskKind::TokenClassification:
    case TaskKind::SrlClassification: {
      std::vector<TagSequencePair> pairs;
      for (const auto& group : dev_groups) {
        pairs.push_back({gold_tags(group, m.labels), predict_tags(m, group)});
      }
      return token_f1(pairs).f1;
    }
    case TaskKind::SequenceClassification: {
      int64_t correct = 0, total = 0;
      for (const auto& group : dev_groups) {
        for (const auto& ex : group) {
          ++total;
          if (predict_example(m, ex).class_index == ex.class_label) ++correct;
        }
      }
      return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
    }
    case TaskKind::MultilabelClassification: {
      std::vector<std::set<int>> pred, gold;
      for (const auto& group : dev_groups) {
        for (const auto& ex : group) {
          pred.push_back(predict_example(m, ex).label_set);
          std::set<int> g;
          for (size_t c = 0; c < ex.multi_hot.size(); ++c) {
            if (ex.multi_hot[c]) g.insert(static_cast<int>(c));
          }
          gold.push_back(std::move(g));
        }
      }
      return multilabel_f1(pred, gold).f1;
    }
    case TaskKind::PairRegression: {
      std::vector<double> pred, gold;
      for (const auto& group : dev_groups) {
        for (const auto& ex : group) {
          pred.push_back(predict_example(m, ex).score);
          gold.push_back(ex.score);
        }
      }
      try {
        return pearson(pred, gold);
      } catch (const Error&) {
        // constant inputs: fall back to negative MSE so selection still works
        double mse = 0.0;
        for (size_t i = 0; i < pred.size(); ++i) mse += (pred[i] - gold[i]) * (pred[i] - gold[i]);
        return pred.empty() ? 0.0 : -mse / static_cast<double>(pred.size());
      }
    }
  }
  return 0.0;
}

// Validates targets against the inventory; throws before any training step.
void validate_task_examples(TaskKind kind, size_t label_count,
                            const std::vector<TaskExample>& examples);

// Attaches a fresh head to the pretrained backbone and trains with Adam and
// the linear warmup/decay schedule; returns the best-model-on-dev parameters.
template <typename S>
FinetuneResult<S> finetune(const ParameterSet<S>& pretrained, TaskKind kind,
                           std::vector<std::string> labels, const std::vector<TaskExample>& train_set,
                           const std::vector<std::vector<TaskExample>>& dev_groups,
                           const FinetuneHyper& hyper) {
  if (train_set.empty()) fail_data("finetune: empty training set");
  validate_task_examples(kind, labels.size(), train_set);
  for (const auto& g : dev_groups) validate_task_examples(kind, labels.size(), g);

  TaskModel<S> model;
  model.params = pretrained;
  model.params.config.dropout = hyper.dropout;
  model.kind = kind;
  model.labels = labels;
  attach_task_head(model.params, head_output_size(kind, labels.size()), mix_seed(hyper.seed, 0xf1ed));

  AdamState<S> state = AdamState<S>::zero_like(model.params.data.size());
  ParameterSet<S> grad = model.params.like();
  ParameterSet<S> scratch = model.params.like();

  const int64_t steps_per_epoch =
      (static_cast<int64_t>(train_set.size()) + hyper.batch - 1) / hyper.batch;
  TrainPhase schedule;
  schedule.batch = hyper.batch;
  schedule.total_steps = steps_per_epoch * hyper.epochs;
  schedule.base_lr = hyper.lr;
  schedule.warmup_steps = std::min<int64_t>(hyper.warmup, schedule.total_steps);
  schedule.max_len = train_set.front().input_ids.empty()
                         ? 0
                         : static_cast<int32_t>(train_set.front().input_ids.size());

  FinetuneResult<S> result;
  std::vector<size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), size_t{0});

  int64_t global_step = 0;
  for (int32_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(hyper.seed, 0x5f1e, static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    int64_t seen = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(hyper.batch)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(hyper.batch));
      GradAccumulator acc(model.params.data.size());
      for (size_t i = start; i < end; ++i) {
        scratch.zero();
        const uint64_t drop_seed = mix_seed(hyper.seed, static_cast<uint64_t>(global_step),
                                            static_cast<uint64_t>(i - start));
        epoch_loss += task_backward(model, train_set[order[i]], scratch, RunMode::Train, drop_seed);
        acc.add_example(scratch);
        ++seen;
      }
      acc.mean_into(grad);
      adam_step(model.params, grad, state, lr_schedule(global_step, schedule));
      ++global_step;
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = seen > 0 ? epoch_loss / static_cast<double>(seen) : 0.0;
    log.dev_metric = dev_metric(model, dev_groups);
    result.log.push_back(log);
    if (result.best_epoch < 0 || log.dev_metric > result.best_dev) {
      result.best_dev = log.dev_metric;
      result.best_epoch = epoch;
      result.model = model;
    }
  }
  return result;
}

// Dataset containers for the CLI file formats.
struct TokenDataset {
  std::vector<std::vector<std::string>> words;
  std::vector<std::vector<std::string>> tags;
  std::vector<std::pair<int, int>> predicates;  // inclusive word range; (-1,-1) outside SRL
};

TokenDataset load_conll(const std::string& path, bool srl);

struct PairDataset {
  std::vector<std::string> a, b, target;
};
PairDataset load_pairs_tsv(const std::string& path);

struct DocDataset {
  std::vector<std::string> text;
  std::vector<std::vector<std::string>> labels;
};
DocDataset load_docs_tsv(const std::string& path);

std::vector<std::string> collect_tag_inventory(const std::vector<std::vector<std::string>>& tags);

}  // namespace minibert
