// SPDX-License-Identifier: Apache-2.0
//
// Single entry point: synth, tokenizer, corpus, pretrain-data, pretrain,
// finetune, evaluate, predict. Every artifact-producing run writes a
// resolved-config file echoing the effective settings; seeds are explicit
// everywhere randomness is involved.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "minibert/checkpoint.hpp"
#include "minibert/corpus.hpp"
#include "minibert/encoder.hpp"
#include "minibert/error.hpp"
#include "minibert/metrics.hpp"
#include "minibert/parallel.hpp"
#include "minibert/pretrain_data.hpp"
#include "minibert/synth.hpp"
#include "minibert/tasks.hpp"
#include "minibert/tokenizer.hpp"
#include "minibert/trainer.hpp"

namespace mb = minibert;
namespace fs = std::filesystem;

namespace {

using KvList = std::vector<std::pair<std::string, std::string>>;

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

void write_resolved_config(const std::string& path, const std::string& subcommand, KvList kv) {
  kv.emplace_back("subcommand", subcommand);
  std::sort(kv.begin(), kv.end());
  std::ofstream f(path, std::ios::binary);
  if (!f) mb::fail_data("cannot write resolved config: " + path);
  for (const auto& [k, v] : kv) f << k << "=" << v << "\n";
}

mb::Casing parse_casing(const std::string& name) {
  if (name == "cased") return mb::Casing::Cased;
  if (name == "uncased") return mb::Casing::Uncased;
  mb::fail_usage("casing must be cased or uncased, got " + name);
}

// flat key=value file, '#' comments
std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) mb::fail_data("cannot open config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      mb::fail_data("config line " + std::to_string(line_no) + ": expected key=value");
    }
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

int64_t to_int(const std::string& v, const std::string& key) {
  try {
    return std::stoll(v);
  } catch (...) {
    mb::fail_data("config key " + key + ": not an integer: " + v);
  }
}

double to_double(const std::string& v, const std::string& key) {
  try {
    return std::stod(v);
  } catch (...) {
    mb::fail_data("config key " + key + ": not a number: " + v);
  }
}

// ---------------------------------------------------------------- synth ----

struct SynthArgs {
  mb::SynthOptions options;
  std::string output;
};

int run_synth(const SynthArgs& a) {
  mb::write_synth_corpus_file(a.output, a.options);
  write_resolved_config(a.output + ".resolved-config", "synth",
                        {{"blocks", std::to_string(a.options.blocks)},
                         {"avg-sentences", format_double(a.options.avg_sentences)},
                         {"vocab-words", std::to_string(a.options.vocab_words)},
                         {"words-per-sentence", std::to_string(a.options.words_per_sentence)},
                         {"seed", std::to_string(a.options.seed)},
                         {"preset", a.options.preset},
                         {"scale", format_double(a.options.scale)},
                         {"output", a.output}});
  return 0;
}

// ------------------------------------------------------------- tokenizer ----

struct TokTrainArgs {
  std::string input, output, casing = "cased", format = "blank-line-blocks";
  int64_t vocab_size = 0;
};

int run_tokenizer_train(const TokTrainArgs& a) {
  const mb::Casing casing = parse_casing(a.casing);
  mb::WordCounts counts;
  mb::ingest(a.input, mb::parse_corpus_format(a.format), [&](mb::TextBlock&& b) {
    for (const auto& s : b.sentences) counts.add_sentence(mb::normalize(s, casing));
  });
  mb::Vocabulary vocab = mb::train_wordpiece(counts, static_cast<int32_t>(a.vocab_size), casing);
  mb::save_vocab(vocab, a.output);
  write_resolved_config(a.output + ".resolved-config", "tokenizer train",
                        {{"input", a.input},
                         {"vocab-size", std::to_string(a.vocab_size)},
                         {"casing", a.casing},
                         {"format", a.format},
                         {"output", a.output},
                         {"actual-size", std::to_string(vocab.size())}});
  return 0;
}

struct TokEncodeArgs {
  std::string vocab, casing = "cased";
  bool show_alignment = false;
};

int run_tokenizer_encode(const TokEncodeArgs& a) {
  mb::Vocabulary vocab = mb::load_vocab(a.vocab, parse_casing(a.casing));
  std::string line;
  while (std::getline(std::cin, line)) {
    mb::Encoding enc = mb::encode(vocab, mb::normalize(line, vocab.casing));
    for (size_t i = 0; i < enc.ids.size(); ++i) {
      if (i > 0) std::cout << ' ';
      std::cout << vocab.token(enc.ids[i]);
      if (a.show_alignment) std::cout << '/' << enc.word_index[i] << (enc.word_start[i] ? "*" : "");
    }
    std::cout << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------- corpus ----

struct CorpusStatsArgs {
  std::string input, format = "blank-line-blocks", abbrev;
  bool json = false;
};

int run_corpus_stats(const CorpusStatsArgs& a) {
  mb::CorpusStats stats;
  if (a.abbrev.empty()) {
    stats = mb::corpus_stats_file(a.input, mb::parse_corpus_format(a.format));
  } else {
    auto guard = mb::load_abbreviations(a.abbrev);
    mb::ingest(a.input, mb::parse_corpus_format(a.format),
               [&](mb::TextBlock&& b) { stats.add_block(b); }, guard);
  }
  if (a.json) {
    nlohmann::json j;
    j["blocks"] = stats.blocks;
    j["sentences"] = stats.sentences;
    j["avg_sentences_per_block"] = stats.avg_sentences_per_block();
    j["unpairable_fraction"] = stats.unpairable_fraction();
    j["empty_corpus"] = stats.empty_corpus;
    std::cout << j.dump() << '\n';
  } else {
    char buf[64];
    std::cout << "blocks: " << stats.blocks << '\n';
    std::cout << "sentences: " << stats.sentences << '\n';
    std::snprintf(buf, sizeof buf, "%.2f", stats.avg_sentences_per_block());
    std::cout << "avg_sentences_per_block: " << buf << '\n';
    std::snprintf(buf, sizeof buf, "%.4f", stats.unpairable_fraction());
    std::cout << "unpairable_fraction: " << buf << '\n';
    std::cout << "empty_corpus: " << (stats.empty_corpus ? "true" : "false") << '\n';
  }
  return 0;
}

// ----------------------------------------------------------- pretrain-data ----

struct BuildDataArgs {
  std::string input, vocab, output, format = "blank-line-blocks", casing = "cased";
  int64_t max_len = 128;
  uint64_t seed = 0;
  double negatives = 1.0;
  int64_t reservoir = 1000;
  int64_t dump = 0;
};

int run_build_data(const BuildDataArgs& a) {
  mb::Vocabulary vocab = mb::load_vocab(a.vocab, parse_casing(a.casing));
  std::vector<mb::TextBlock> blocks = mb::ingest_all(a.input, mb::parse_corpus_format(a.format));
  mb::PretrainFile file = mb::build_pretrain_examples(
      blocks, vocab, mb::MaskPolicy{}, static_cast<int32_t>(a.max_len), a.seed, a.negatives,
      static_cast<size_t>(a.reservoir));
  mb::write_pretrain_file(a.output, file);
  if (a.dump > 0) mb::dump_pretrain_file(file, vocab, std::cout, static_cast<size_t>(a.dump));
  write_resolved_config(a.output + ".resolved-config", "pretrain-data build",
                        {{"input", a.input},
                         {"vocab", a.vocab},
                         {"format", a.format},
                         {"casing", a.casing},
                         {"max-len", std::to_string(a.max_len)},
                         {"seed", std::to_string(a.seed)},
                         {"negatives-per-positive", format_double(a.negatives)},
                         {"reservoir", std::to_string(a.reservoir)},
                         {"examples", std::to_string(file.examples.size())},
                         {"output", a.output}});
  return 0;
}

// -------------------------------------------------------------- pretrain ----

struct PretrainArgs {
  std::string config, examples, vocab, out, casing = "cased", precision = "f32", resume;
  uint64_t seed = 0;
  bool seed_set = false;
  int64_t workers = 1;
  bool workers_set = false;
};

const std::set<std::string>& pretrain_config_keys() {
  static const std::set<std::string> keys = {
      "model.vocab_size", "model.embedding_size", "model.hidden_size", "model.layers",
      "model.heads", "model.ff_size", "model.max_positions", "model.share_layers",
      "model.dropout", "train.seed", "train.workers", "train.log_every",
      "train.checkpoint_every", "phase1.max_len", "phase1.batch", "phase1.steps", "phase1.lr",
      "phase1.warmup", "phase1.examples", "phase2.max_len", "phase2.batch", "phase2.steps",
      "phase2.lr", "phase2.warmup", "phase2.examples",
  };
  return keys;
}

template <typename S>
int run_pretrain_typed(const PretrainArgs& a, const std::map<std::string, std::string>& cfg) {
  auto get = [&](const std::string& key, const std::string& fallback) {
    auto it = cfg.find(key);
    return it == cfg.end() ? fallback : it->second;
  };
  auto has = [&](const std::string& key) { return cfg.count(key) > 0; };

  mb::Vocabulary vocab = mb::load_vocab(a.vocab, parse_casing(a.casing));

  // Phases: phase1 always, phase2 when any phase2.* key is present.
  std::vector<mb::TrainPhase> phases;
  std::vector<std::string> example_paths;
  for (int pi = 1; pi <= 2; ++pi) {
    const std::string p = "phase" + std::to_string(pi) + ".";
    if (pi == 2 && !has(p + "steps")) break;
    mb::TrainPhase phase;
    phase.max_len = static_cast<int32_t>(to_int(get(p + "max_len", pi == 1 ? "128" : "512"), p));
    phase.batch = static_cast<int32_t>(to_int(get(p + "batch", pi == 1 ? "2048" : "256"), p));
    phase.total_steps = to_int(get(p + "steps", pi == 1 ? "300000" : "50000"), p);
    phase.base_lr = to_double(get(p + "lr", "1e-4"), p);
    // warmup defaults to 1% of the phase
    phase.warmup_steps = to_int(get(p + "warmup", std::to_string(phase.total_steps / 100)), p);
    phases.push_back(phase);
    std::string path = get(p + "examples", pi == 1 ? a.examples : "");
    if (path.empty()) mb::fail_usage("missing examples file for phase " + std::to_string(pi));
    example_paths.push_back(path);
  }

  std::vector<std::vector<mb::PretrainExample>> phase_examples;
  for (size_t i = 0; i < phases.size(); ++i) {
    mb::PretrainFile f = mb::read_pretrain_file(example_paths[i]);
    if (f.max_len != phases[i].max_len) {
      mb::fail_data("examples " + example_paths[i] + " were built for max_len " +
                    std::to_string(f.max_len) + ", phase wants " +
                    std::to_string(phases[i].max_len));
    }
    phase_examples.push_back(std::move(f.examples));
  }

  mb::ModelConfig config;
  config.vocab_size = static_cast<int32_t>(to_int(
      get("model.vocab_size", std::to_string(vocab.size())), "model.vocab_size"));
  config.hidden_size =
      static_cast<int32_t>(to_int(get("model.hidden_size", "64"), "model.hidden_size"));
  config.embedding_size = static_cast<int32_t>(to_int(
      get("model.embedding_size", std::to_string(config.hidden_size)), "model.embedding_size"));
  config.layers = static_cast<int32_t>(to_int(get("model.layers", "2"), "model.layers"));
  config.heads = static_cast<int32_t>(to_int(get("model.heads", "4"), "model.heads"));
  config.ff_size = static_cast<int32_t>(
      to_int(get("model.ff_size", std::to_string(4 * config.hidden_size)), "model.ff_size"));
  int32_t needed_positions = 0;
  for (const auto& p : phases) needed_positions = std::max(needed_positions, p.max_len);
  config.max_positions = static_cast<int32_t>(to_int(
      get("model.max_positions", std::to_string(needed_positions)), "model.max_positions"));
  config.share_layers = to_int(get("model.share_layers", "0"), "model.share_layers") != 0;
  config.dropout = static_cast<float>(to_double(get("model.dropout", "0.1"), "model.dropout"));
  config.validate();

  mb::TrainOptions opts;
  opts.seed = a.seed_set ? a.seed : static_cast<uint64_t>(to_int(get("train.seed", "0"), "seed"));
  if (!a.seed_set && !has("train.seed")) {
    mb::fail_usage("pretrain needs an explicit seed (flag --seed or config train.seed)");
  }
  opts.workers = static_cast<int>(a.workers_set ? a.workers
                                                : to_int(get("train.workers", "1"), "workers"));
  opts.log_every = to_int(get("train.log_every", "10"), "log_every");
  opts.checkpoint_every = to_int(get("train.checkpoint_every", "0"), "checkpoint_every");
  opts.checkpoint_dir = a.out;
  mb::Transcript transcript;
  if (opts.workers > 1) opts.transcript = &transcript;

  fs::create_directories(a.out);

  mb::ParameterSet<S> model;
  mb::AdamState<S> state;
  int32_t start_phase = 0;
  int64_t start_step = 0;
  if (a.resume.empty()) {
    model = mb::init_model<S>(config, opts.seed);
  } else {
    auto ck = mb::load_checkpoint<S>(a.resume + ".model");
    if (!(ck.params.config == config)) {
      mb::fail_data("resume checkpoint config does not match the run config");
    }
    model = std::move(ck.params);
    auto ts = mb::load_train_state<S>(a.resume + ".state");
    state.m = std::move(ts.m);
    state.v = std::move(ts.v);
    state.t = ts.t;
    start_phase = ts.phase_index;
    start_step = ts.next_step;
  }

  auto result = mb::train<S>(std::move(model), phase_examples, phases, opts, std::move(state),
                             start_phase, start_step);

  {
    std::ofstream csv(a.out + "/loss.csv", std::ios::binary);
    csv << "step,lr,mlm_loss,nsp_loss,total\n";
    for (const auto& row : result.log) {
      csv << row.step << ',' << format_double(row.lr) << ',' << format_double(row.mlm) << ','
          << format_double(row.nsp) << ',' << format_double(row.total) << "\n";
    }
  }
  mb::Checkpoint<S> final_ck;
  final_ck.params = result.params;
  mb::save_checkpoint(a.out + "/final.model", final_ck);
  if (opts.workers > 1) {
    std::ofstream t(a.out + "/transcript.log", std::ios::binary);
    transcript.write(t);
  }

  KvList kv = {{"config", a.config},
               {"vocab", a.vocab},
               {"casing", a.casing},
               {"precision", a.precision},
               {"out", a.out},
               {"seed", std::to_string(opts.seed)},
               {"workers", std::to_string(opts.workers)},
               {"resume", a.resume},
               {"model.vocab_size", std::to_string(config.vocab_size)},
               {"model.embedding_size", std::to_string(config.embedding_size)},
               {"model.hidden_size", std::to_string(config.hidden_size)},
               {"model.layers", std::to_string(config.layers)},
               {"model.heads", std::to_string(config.heads)},
               {"model.ff_size", std::to_string(config.ff_size)},
               {"model.max_positions", std::to_string(config.max_positions)},
               {"model.share_layers", config.share_layers ? "1" : "0"},
               {"model.dropout", format_double(config.dropout)},
               {"train.log_every", std::to_string(opts.log_every)},
               {"train.checkpoint_every", std::to_string(opts.checkpoint_every)}};
  for (size_t i = 0; i < phases.size(); ++i) {
    const std::string p = "phase" + std::to_string(i + 1) + ".";
    kv.emplace_back(p + "max_len", std::to_string(phases[i].max_len));
    kv.emplace_back(p + "batch", std::to_string(phases[i].batch));
    kv.emplace_back(p + "steps", std::to_string(phases[i].total_steps));
    kv.emplace_back(p + "lr", format_double(phases[i].base_lr));
    kv.emplace_back(p + "warmup", std::to_string(phases[i].warmup_steps));
    kv.emplace_back(p + "examples", example_paths[i]);
  }
  write_resolved_config(a.out + "/resolved-config", "pretrain", std::move(kv));
  return 0;
}

int run_pretrain(const PretrainArgs& a) {
  std::map<std::string, std::string> cfg;
  if (!a.config.empty()) {
    cfg = parse_kv_file(a.config);
    for (const auto& [k, v] : cfg) {
      if (pretrain_config_keys().count(k) == 0) mb::fail_usage("unknown config key: " + k);
    }
  }
  if (a.precision == "f32") return run_pretrain_typed<float>(a, cfg);
  if (a.precision == "f64") return run_pretrain_typed<double>(a, cfg);
  mb::fail_usage("precision must be f32 or f64");
}

// -------------------------------------------------------------- finetune ----

struct FinetuneArgs {
  std::string task, train, dev, checkpoint, vocab, out, casing = "cased";
  mb::FinetuneHyper hyper;
  int64_t max_len = 128;
};

struct EncodedTask {
  mb::TaskKind kind;
  std::vector<std::string> labels;
  std::vector<mb::TaskExample> train_set;
  std::vector<std::vector<mb::TaskExample>> dev_groups;  // per sentence for token kinds
};

int32_t label_id(const std::vector<std::string>& labels, const std::string& tag) {
  auto it = std::lower_bound(labels.begin(), labels.end(), tag);
  if (it == labels.end() || *it != tag) mb::fail_data("label \"" + tag + "\" outside the inventory");
  return static_cast<int32_t>(it - labels.begin());
}

EncodedTask encode_task_files(const std::string& task, const std::string& train_path,
                              const std::string& dev_path, const mb::Vocabulary& vocab,
                              int32_t max_len) {
  EncodedTask out;
  out.kind = mb::parse_task_kind(task);
  const bool srl = out.kind == mb::TaskKind::SrlClassification;

  auto encode_token_file = [&](const std::string& path, bool is_train) {
    mb::TokenDataset ds = mb::load_conll(path, srl);
    if (is_train) out.labels = mb::collect_tag_inventory(ds.tags);
    std::vector<std::vector<mb::TaskExample>> groups;
    for (size_t i = 0; i < ds.words.size(); ++i) {
      std::vector<int32_t> ids;
      ids.reserve(ds.tags[i].size());
      for (const auto& tag : ds.tags[i]) ids.push_back(label_id(out.labels, tag));
      std::vector<mb::TaskExample> group;
      if (srl) {
        group.push_back(mb::encode_srl(ds.words[i], ds.predicates[i].first,
                                       ds.predicates[i].second, ids, vocab, max_len));
      } else {
        group = mb::encode_token_task(ds.words[i], ids, vocab, max_len);
      }
      groups.push_back(std::move(group));
    }
    return groups;
  };

  switch (out.kind) {
    case mb::TaskKind::TokenClassification:
    case mb::TaskKind::SrlClassification: {
      for (auto& g : encode_token_file(train_path, true)) {
        for (auto& ex : g) out.train_set.push_back(std::move(ex));
      }
      out.dev_groups = encode_token_file(dev_path, false);
      break;
    }
    case mb::TaskKind::SequenceClassification: {
      mb::DocDataset train_ds = mb::load_docs_tsv(train_path);
      mb::DocDataset dev_ds = mb::load_docs_tsv(dev_path);
      std::set<std::string> classes;
      for (const auto& l : train_ds.labels) {
        if (l.size() != 1) mb::fail_data("sequence task expects exactly one label per line");
        classes.insert(l[0]);
      }
      out.labels.assign(classes.begin(), classes.end());
      auto encode_all = [&](const mb::DocDataset& ds) {
        std::vector<mb::TaskExample> exs;
        for (size_t i = 0; i < ds.text.size(); ++i) {
          if (ds.labels[i].size() != 1) mb::fail_data("sequence task expects one label per line");
          mb::TaskExample ex = mb::encode_document(ds.text[i], vocab, max_len);
          ex.class_label = label_id(out.labels, ds.labels[i][0]);
          exs.push_back(std::move(ex));
        }
        return exs;
      };
      out.train_set = encode_all(train_ds);
      out.dev_groups.push_back(encode_all(dev_ds));
      break;
    }
    case mb::TaskKind::MultilabelClassification: {
      mb::DocDataset train_ds = mb::load_docs_tsv(train_path);
      mb::DocDataset dev_ds = mb::load_docs_tsv(dev_path);
      std::set<std::string> classes;
      for (const auto& l : train_ds.labels) classes.insert(l.begin(), l.end());
      out.labels.assign(classes.begin(), classes.end());
      auto encode_all = [&](const mb::DocDataset& ds) {
        std::vector<mb::TaskExample> exs;
        for (size_t i = 0; i < ds.text.size(); ++i) {
          mb::TaskExample ex = mb::encode_document(ds.text[i], vocab, max_len);
          ex.multi_hot.assign(out.labels.size(), 0);
          for (const auto& l : ds.labels[i]) {
            ex.multi_hot[static_cast<size_t>(label_id(out.labels, l))] = 1;
          }
          exs.push_back(std::move(ex));
        }
        return exs;
      };
      out.train_set = encode_all(train_ds);
      out.dev_groups.push_back(encode_all(dev_ds));
      break;
    }
    case mb::TaskKind::PairRegression: {
      mb::PairDataset train_ds = mb::load_pairs_tsv(train_path);
      mb::PairDataset dev_ds = mb::load_pairs_tsv(dev_path);
      out.labels = {"score"};
      auto encode_all = [&](const mb::PairDataset& ds) {
        std::vector<mb::TaskExample> exs;
        for (size_t i = 0; i < ds.a.size(); ++i) {
          mb::TaskExample ex = mb::encode_pair_task(ds.a[i], ds.b[i], vocab, max_len);
          ex.score = to_double(ds.target[i], "pair target");
          exs.push_back(std::move(ex));
        }
        return exs;
      };
      out.train_set = encode_all(train_ds);
      out.dev_groups.push_back(encode_all(dev_ds));
      break;
    }
  }
  return out;
}

int run_finetune(const FinetuneArgs& a) {
  mb::Vocabulary vocab = mb::load_vocab(a.vocab, parse_casing(a.casing));
  auto ck = mb::load_checkpoint<float>(a.checkpoint);
  if (ck.params.config.vocab_size != vocab.size()) {
    mb::fail_data("checkpoint vocabulary size " + std::to_string(ck.params.config.vocab_size) +
                  " does not match vocab.txt with " + std::to_string(vocab.size()));
  }
  EncodedTask enc =
      encode_task_files(a.task, a.train, a.dev, vocab, static_cast<int32_t>(a.max_len));

  auto result = mb::finetune(ck.params, enc.kind, enc.labels, enc.train_set, enc.dev_groups,
                             a.hyper);
  fs::create_directories(a.out);
  for (const auto& row : result.log) {
    std::cout << "epoch " << row.epoch << " train_loss " << format_double(row.train_loss)
              << " dev_metric " << format_double(row.dev_metric) << "\n";
  }
  std::cout << "best_epoch " << result.best_epoch << " best_dev "
            << format_double(result.best_dev) << "\n";

  mb::Checkpoint<float> best;
  best.params = result.model.params;
  best.task_kind = static_cast<int32_t>(result.model.kind);
  best.labels = result.model.labels;
  mb::save_checkpoint(a.out + "/best.model", best);
  {
    std::ofstream log(a.out + "/epochs.csv", std::ios::binary);
    log << "epoch,train_loss,dev_metric\n";
    for (const auto& row : result.log) {
      log << row.epoch << ',' << format_double(row.train_loss) << ','
          << format_double(row.dev_metric) << "\n";
    }
  }
  write_resolved_config(a.out + "/resolved-config", "finetune",
                        {{"task", a.task},
                         {"train", a.train},
                         {"dev", a.dev},
                         {"checkpoint", a.checkpoint},
                         {"vocab", a.vocab},
                         {"casing", a.casing},
                         {"max-len", std::to_string(a.max_len)},
                         {"lr", format_double(a.hyper.lr)},
                         {"epochs", std::to_string(a.hyper.epochs)},
                         {"batch", std::to_string(a.hyper.batch)},
                         {"warmup", std::to_string(a.hyper.warmup)},
                         {"dropout", format_double(a.hyper.dropout)},
                         {"seed", std::to_string(a.hyper.seed)},
                         {"labels", std::to_string(enc.labels.size())},
                         {"out", a.out}});
  return 0;
}

// --------------------------------------------------------------- predict ----

struct PredictArgs {
  std::string task, checkpoint, vocab, input, output, casing = "cased";
  int64_t max_len = 128;
  bool probabilities = false;
};

int run_predict(const PredictArgs& a) {
  mb::Vocabulary vocab = mb::load_vocab(a.vocab, parse_casing(a.casing));
  auto ck = mb::load_checkpoint<float>(a.checkpoint);
  if (ck.task_kind < 0) mb::fail_data("checkpoint has no task head; fine-tune first");
  mb::TaskModel<float> model;
  model.params = std::move(ck.params);
  model.kind = static_cast<mb::TaskKind>(ck.task_kind);
  model.labels = ck.labels;
  const mb::TaskKind requested = mb::parse_task_kind(a.task);
  if (requested != model.kind) {
    mb::fail_data("task mismatch: checkpoint holds a " + mb::task_kind_name(model.kind) +
                  " head, requested " + mb::task_kind_name(requested));
  }

  std::ofstream out(a.output, std::ios::binary);
  if (!out) mb::fail_data("cannot open output: " + a.output);
  const int32_t max_len = static_cast<int32_t>(a.max_len);

  switch (model.kind) {
    case mb::TaskKind::TokenClassification:
    case mb::TaskKind::SrlClassification: {
      const bool srl = model.kind == mb::TaskKind::SrlClassification;
      mb::TokenDataset ds = mb::load_conll(a.input, srl);
      for (size_t i = 0; i < ds.words.size(); ++i) {
        std::vector<mb::TaskExample> group;
        if (srl) {
          group.push_back(mb::encode_srl(ds.words[i], ds.predicates[i].first,
                                         ds.predicates[i].second, {}, vocab, max_len));
        } else {
          group = mb::encode_token_task(
              ds.words[i], std::vector<int32_t>(ds.words[i].size(), 0), vocab, max_len);
        }
        std::vector<std::string> tags = mb::predict_tags(model, group);
        for (size_t w = 0; w < ds.words[i].size(); ++w) {
          out << ds.words[i][w] << '\t' << tags[w] << "\n";
        }
        out << "\n";
      }
      break;
    }
    case mb::TaskKind::SequenceClassification: {
      mb::DocDataset ds = mb::load_docs_tsv(a.input);
      for (const auto& text : ds.text) {
        mb::TaskExample ex = mb::encode_document(text, vocab, max_len);
        out << model.labels[static_cast<size_t>(mb::predict_example(model, ex).class_index)]
            << "\n";
      }
      break;
    }
    case mb::TaskKind::MultilabelClassification: {
      mb::DocDataset ds = mb::load_docs_tsv(a.input);
      for (const auto& text : ds.text) {
        mb::TaskExample ex = mb::encode_document(text, vocab, max_len);
        mb::Prediction p = mb::predict_example(model, ex);
        bool first = true;
        for (int l : p.label_set) {
          if (!first) out << ',';
          out << model.labels[static_cast<size_t>(l)];
          first = false;
        }
        if (a.probabilities) {
          out << '\t';
          for (size_t c = 0; c < p.probabilities.size(); ++c) {
            if (c > 0) out << ',';
            out << format_double(p.probabilities[c]);
          }
        }
        out << "\n";
      }
      break;
    }
    case mb::TaskKind::PairRegression: {
      mb::PairDataset ds = mb::load_pairs_tsv(a.input);
      for (size_t i = 0; i < ds.a.size(); ++i) {
        mb::TaskExample ex = mb::encode_pair_task(ds.a[i], ds.b[i], vocab, max_len);
        out << format_double(mb::predict_example(model, ex).score) << "\n";
      }
      break;
    }
  }
  write_resolved_config(a.output + ".resolved-config", "predict",
                        {{"task", a.task},
                         {"checkpoint", a.checkpoint},
                         {"vocab", a.vocab},
                         {"casing", a.casing},
                         {"input", a.input},
                         {"max-len", std::to_string(a.max_len)},
                         {"output", a.output}});
  return 0;
}

// -------------------------------------------------------------- evaluate ----

struct EvaluateArgs {
  std::string task, gold, pred, scores, aggregate;
  bool strip_bio = false;
};

std::vector<std::string> last_column_lines(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) mb::fail_data("cannot open: " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const size_t tab = line.rfind('\t');
    out.push_back(tab == std::string::npos ? line : line.substr(tab + 1));
  }
  return out;
}

void print_report(const std::string& metric, double value, const mb::PrecisionRecallF1* prf) {
  std::cout << metric << ": " << format_double(value) << "\n";
  if (prf != nullptr) {
    std::cout << "precision: " << format_double(prf->precision) << "\n";
    std::cout << "recall: " << format_double(prf->recall) << "\n";
    if (prf->zero_support) std::cout << "zero_support: true\n";
  }
}

int run_evaluate(const EvaluateArgs& a) {
  if (!a.aggregate.empty()) {
    std::vector<double> values;
    for (const auto& line : last_column_lines(a.aggregate)) {
      values.push_back(to_double(line, "aggregate value"));
    }
    mb::EvalReport r = mb::confidence_interval(values, a.task.empty() ? "metric" : a.task);
    std::cout << r.metric << ": " << format_double(r.value);
    if (r.has_interval) std::cout << " +- " << format_double(r.half_width);
    std::cout << " (runs " << r.runs << ")\n";
    return 0;
  }

  const mb::TaskKind kind = mb::parse_task_kind(a.task);
  switch (kind) {
    case mb::TaskKind::TokenClassification:
    case mb::TaskKind::SrlClassification: {
      mb::TokenDataset gold = mb::load_conll(a.gold, false);
      mb::TokenDataset pred = mb::load_conll(a.pred, false);
      if (gold.tags.size() != pred.tags.size()) {
        mb::fail_data("gold and pred hold different sentence counts");
      }
      std::vector<mb::TagSequencePair> pairs;
      for (size_t i = 0; i < gold.tags.size(); ++i) {
        if (a.strip_bio) {
          pairs.push_back({mb::strip_bio(gold.tags[i]), mb::strip_bio(pred.tags[i])});
        } else {
          pairs.push_back({gold.tags[i], pred.tags[i]});
        }
      }
      if (a.task == "pos" || a.strip_bio) {
        mb::PrecisionRecallF1 r = mb::token_f1(pairs);
        print_report("token_f1", r.f1, &r);
      } else {
        mb::PrecisionRecallF1 r = mb::entity_f1(pairs);
        print_report("entity_f1", r.f1, &r);
      }
      break;
    }
    case mb::TaskKind::SequenceClassification: {
      auto gold = last_column_lines(a.gold);
      auto pred = last_column_lines(a.pred);
      if (gold.size() != pred.size()) mb::fail_data("gold/pred line counts differ");
      int64_t correct = 0;
      for (size_t i = 0; i < gold.size(); ++i) correct += (gold[i] == pred[i]);
      print_report("micro_f1", gold.empty() ? 0.0
                                            : static_cast<double>(correct) /
                                                  static_cast<double>(gold.size()),
                   nullptr);
      break;
    }
    case mb::TaskKind::PairRegression: {
      auto gold_lines = last_column_lines(a.gold);
      auto pred_lines = last_column_lines(a.pred);
      if (gold_lines.size() != pred_lines.size()) mb::fail_data("gold/pred line counts differ");
      std::vector<double> g, p;
      for (size_t i = 0; i < gold_lines.size(); ++i) {
        g.push_back(to_double(gold_lines[i], "gold"));
        p.push_back(to_double(pred_lines[i], "pred"));
      }
      print_report("pearson", mb::pearson(p, g), nullptr);
      print_report("spearman", mb::spearman(p, g), nullptr);
      break;
    }
    case mb::TaskKind::MultilabelClassification: {
      auto parse_sets = [](const std::vector<std::string>& lines,
                           std::vector<std::string>& inventory) {
        std::set<std::string> classes(inventory.begin(), inventory.end());
        std::vector<std::vector<std::string>> raw;
        for (const auto& line : lines) {
          std::vector<std::string> labels;
          size_t start = 0;
          for (size_t i = 0; i <= line.size(); ++i) {
            if (i == line.size() || line[i] == ',') {
              if (i > start) labels.push_back(line.substr(start, i - start));
              start = i + 1;
            }
          }
          classes.insert(labels.begin(), labels.end());
          raw.push_back(std::move(labels));
        }
        inventory.assign(classes.begin(), classes.end());
        return raw;
      };
      auto gold_lines = last_column_lines(a.gold);
      auto pred_lines = last_column_lines(a.pred);
      if (gold_lines.size() != pred_lines.size()) mb::fail_data("gold/pred line counts differ");
      std::vector<std::string> inventory;
      auto gold_raw = parse_sets(gold_lines, inventory);
      auto pred_raw = parse_sets(pred_lines, inventory);
      auto to_ids = [&](const std::vector<std::vector<std::string>>& raw) {
        std::vector<std::set<int>> sets;
        for (const auto& labels : raw) {
          std::set<int> s;
          for (const auto& l : labels) {
            s.insert(static_cast<int>(std::lower_bound(inventory.begin(), inventory.end(), l) -
                                      inventory.begin()));
          }
          sets.push_back(std::move(s));
        }
        return sets;
      };
      mb::PrecisionRecallF1 r = mb::multilabel_f1(to_ids(pred_raw), to_ids(gold_raw));
      print_report("multilabel_f1", r.f1, &r);

      if (!a.scores.empty()) {
        std::vector<std::vector<double>> scores;
        for (const auto& line : last_column_lines(a.scores)) {
          std::vector<double> row;
          size_t start = 0;
          for (size_t i = 0; i <= line.size(); ++i) {
            if (i == line.size() || line[i] == ',') {
              if (i > start) row.push_back(to_double(line.substr(start, i - start), "score"));
              start = i + 1;
            }
          }
          scores.push_back(std::move(row));
        }
        std::vector<std::vector<uint8_t>> hot;
        auto gold_sets = to_ids(gold_raw);
        for (const auto& s : gold_sets) {
          std::vector<uint8_t> row(inventory.size(), 0);
          for (int l : s) row[static_cast<size_t>(l)] = 1;
          hot.push_back(std::move(row));
        }
        mb::MacroAuroc auc = mb::multilabel_auroc(scores, hot);
        print_report("auroc", auc.value, nullptr);
        std::cout << "auroc_labels_used: " << auc.labels_used << "\n";
      }
      break;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale BERT-style pretraining and fine-tuning pipeline"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate a deterministic synthetic corpus");
  synth_cmd->add_option("--blocks", synth.options.blocks, "block count")->required();
  synth_cmd->add_option("--avg-sentences", synth.options.avg_sentences, "mean sentences per block");
  synth_cmd->add_option("--vocab-words", synth.options.vocab_words, "pseudo-word inventory size");
  synth_cmd->add_option("--words-per-sentence", synth.options.words_per_sentence,
                        "content words per sentence");
  synth_cmd->add_option("--seed", synth.options.seed, "rng seed")->required();
  synth_cmd->add_option("--preset", synth.options.preset, "optional preset: table2");
  synth_cmd->add_option("--scale", synth.options.scale, "preset block-count scaling");
  synth_cmd->add_option("--output", synth.output, "output corpus file")->required();

  auto* tok_cmd = app.add_subcommand("tokenizer", "train or apply the subword tokenizer");
  tok_cmd->require_subcommand(1);
  TokTrainArgs tok_train;
  auto* tok_train_cmd = tok_cmd->add_subcommand("train", "train a vocabulary");
  tok_train_cmd->add_option("--input", tok_train.input, "corpus file")->required();
  tok_train_cmd->add_option("--vocab-size", tok_train.vocab_size, "target size")->required();
  tok_train_cmd->add_option("--casing", tok_train.casing, "cased|uncased");
  tok_train_cmd->add_option("--format", tok_train.format, "corpus format");
  tok_train_cmd->add_option("--output", tok_train.output, "vocab.txt path")->required();
  TokEncodeArgs tok_encode;
  auto* tok_encode_cmd = tok_cmd->add_subcommand("encode", "encode stdin, one sentence per line");
  tok_encode_cmd->add_option("--vocab", tok_encode.vocab, "vocab.txt path")->required();
  tok_encode_cmd->add_option("--casing", tok_encode.casing, "cased|uncased");
  tok_encode_cmd->add_flag("--show-alignment", tok_encode.show_alignment,
                           "append /word-index, * marks word starts");

  auto* corpus_cmd = app.add_subcommand("corpus", "corpus inspection");
  corpus_cmd->require_subcommand(1);
  CorpusStatsArgs corpus_stats_args;
  auto* stats_cmd = corpus_cmd->add_subcommand("stats", "block/sentence statistics");
  stats_cmd->add_option("--input", corpus_stats_args.input, "corpus file")->required();
  stats_cmd->add_option("--format", corpus_stats_args.format, "corpus format");
  stats_cmd->add_option("--abbrev", corpus_stats_args.abbrev, "abbreviation guard file");
  stats_cmd->add_flag("--json", corpus_stats_args.json, "machine-readable output");

  BuildDataArgs build_data;
  auto* build_cmd = app.add_subcommand("pretrain-data", "build pretraining examples");
  build_cmd->require_subcommand(1);
  auto* build_sub = build_cmd->add_subcommand("build", "corpus -> masked NSP examples");
  build_sub->add_option("--input", build_data.input, "corpus file")->required();
  build_sub->add_option("--format", build_data.format, "corpus format");
  build_sub->add_option("--vocab", build_data.vocab, "vocab.txt path")->required();
  build_sub->add_option("--casing", build_data.casing, "cased|uncased");
  build_sub->add_option("--max-len", build_data.max_len, "sequence length");
  build_sub->add_option("--seed", build_data.seed, "rng seed")->required();
  build_sub->add_option("--negatives-per-positive", build_data.negatives, "negative ratio");
  build_sub->add_option("--reservoir", build_data.reservoir, "fallback reservoir capacity");
  build_sub->add_option("--dump", build_data.dump, "print the first N examples");
  build_sub->add_option("--output", build_data.output, "examples.bin path")->required();

  PretrainArgs pretrain;
  auto* pre_cmd = app.add_subcommand("pretrain", "run the pretraining phases");
  pre_cmd->add_option("--config", pretrain.config, "flat key=value run config");
  pre_cmd->add_option("--examples", pretrain.examples, "phase-1 examples.bin");
  pre_cmd->add_option("--vocab", pretrain.vocab, "vocab.txt path")->required();
  pre_cmd->add_option("--casing", pretrain.casing, "cased|uncased");
  pre_cmd->add_option("--out", pretrain.out, "checkpoint directory")->required();
  auto* seed_opt = pre_cmd->add_option("--seed", pretrain.seed, "rng seed (overrides config)");
  auto* workers_opt = pre_cmd->add_option("--workers", pretrain.workers, "data-parallel worker count");
  pre_cmd->add_option("--precision", pretrain.precision, "f32|f64");
  pre_cmd->add_option("--resume", pretrain.resume, "checkpoint base path to resume from");

  FinetuneArgs ft;
  auto* ft_cmd = app.add_subcommand("finetune", "fine-tune a pretrained checkpoint");
  ft_cmd->add_option("--task", ft.task, "ner|pos|srl|sentiment|mlc|sts")->required();
  ft_cmd->add_option("--train", ft.train, "training set")->required();
  ft_cmd->add_option("--dev", ft.dev, "development set")->required();
  ft_cmd->add_option("--checkpoint", ft.checkpoint, "pretrained .model file")->required();
  ft_cmd->add_option("--vocab", ft.vocab, "vocab.txt path")->required();
  ft_cmd->add_option("--casing", ft.casing, "cased|uncased");
  ft_cmd->add_option("--out", ft.out, "output directory")->required();
  ft_cmd->add_option("--lr", ft.hyper.lr, "learning rate");
  ft_cmd->add_option("--epochs", ft.hyper.epochs, "epoch count");
  ft_cmd->add_option("--batch", ft.hyper.batch, "batch size");
  ft_cmd->add_option("--warmup", ft.hyper.warmup, "warmup steps");
  ft_cmd->add_option("--dropout", ft.hyper.dropout, "head and backbone dropout");
  ft_cmd->add_option("--seed", ft.hyper.seed, "rng seed")->required();
  ft_cmd->add_option("--max-len", ft.max_len, "sequence length");

  PredictArgs pr;
  auto* pr_cmd = app.add_subcommand("predict", "run a fine-tuned checkpoint on new data");
  pr_cmd->add_option("--task", pr.task, "task name")->required();
  pr_cmd->add_option("--checkpoint", pr.checkpoint, "fine-tuned .model file")->required();
  pr_cmd->add_option("--vocab", pr.vocab, "vocab.txt path")->required();
  pr_cmd->add_option("--casing", pr.casing, "cased|uncased");
  pr_cmd->add_option("--input", pr.input, "input data file")->required();
  pr_cmd->add_option("--output", pr.output, "predictions file")->required();
  pr_cmd->add_option("--max-len", pr.max_len, "sequence length");
  pr_cmd->add_flag("--probabilities", pr.probabilities, "append per-label probabilities (mlc)");

  EvaluateArgs ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "score predictions against gold data");
  ev_cmd->add_option("--task", ev.task, "task name");
  ev_cmd->add_option("--gold", ev.gold, "gold file");
  ev_cmd->add_option("--pred", ev.pred, "prediction file");
  ev_cmd->add_option("--scores", ev.scores, "per-label score file (mlc auroc)");
  ev_cmd->add_option("--aggregate", ev.aggregate,
                     "file of per-run metric values; prints mean and 95% interval");
  ev_cmd->add_flag("--strip-bio", ev.strip_bio, "project BIO tags to bare labels first");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }

  pretrain.seed_set = seed_opt->count() > 0;
  pretrain.workers_set = workers_opt->count() > 0;

  try {
    if (synth_cmd->parsed()) return run_synth(synth);
    if (tok_cmd->parsed()) {
      if (tok_train_cmd->parsed()) return run_tokenizer_train(tok_train);
      return run_tokenizer_encode(tok_encode);
    }
    if (corpus_cmd->parsed()) return run_corpus_stats(corpus_stats_args);
    if (build_cmd->parsed()) return run_build_data(build_data);
    if (pre_cmd->parsed()) return run_pretrain(pretrain);
    if (ft_cmd->parsed()) return run_finetune(ft);
    if (pr_cmd->parsed()) return run_predict(pr);
    if (ev_cmd->parsed()) return run_evaluate(ev);
    std::cerr << "error: no subcommand" << std::endl;
    return 1;
  } catch (const mb::Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return e.kind() == mb::ErrorKind::Usage ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
}
