// SPDX-License-Identifier: Apache-2.0
//
// Python bindings for the main operations: tokenizer training and encoding,
// sentence splitting and corpus statistics, mask policy application,
// parameter counting, the learning-rate schedule, the evaluation metrics and
// the synthetic corpus generator.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "minibert/corpus.hpp"
#include "minibert/error.hpp"
#include "minibert/metrics.hpp"
#include "minibert/model.hpp"
#include "minibert/pretrain_data.hpp"
#include "minibert/synth.hpp"
#include "minibert/tokenizer.hpp"
#include "minibert/trainer.hpp"

namespace py = pybind11;
using namespace minibert;

namespace {

Casing casing_from(const std::string& name) {
  if (name == "cased") return Casing::Cased;
  if (name == "uncased") return Casing::Uncased;
  throw py::value_error("casing must be 'cased' or 'uncased'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "C++ core: WordPiece tokenizer, corpus tools, encoder bookkeeping and metrics";

  py::register_exception<Error>(m, "MinibertError");

  // ---- tokenizer ----
  py::class_<Encoding>(m, "Encoding")
      .def_readonly("ids", &Encoding::ids)
      .def_property_readonly("word_start",
                             [](const Encoding& e) {
                               std::vector<bool> v(e.word_start.begin(), e.word_start.end());
                               return v;
                             })
      .def_readonly("word_index", &Encoding::word_index)
      .def("__len__", [](const Encoding& e) { return e.ids.size(); });

  py::class_<Vocabulary>(m, "Vocabulary")
      .def_property_readonly("tokens", [](const Vocabulary& v) { return v.tokens; })
      .def_property_readonly("casing",
                             [](const Vocabulary& v) {
                               return v.casing == Casing::Cased ? "cased" : "uncased";
                             })
      .def_readonly("pad_id", &Vocabulary::pad_id)
      .def_readonly("unk_id", &Vocabulary::unk_id)
      .def_readonly("cls_id", &Vocabulary::cls_id)
      .def_readonly("sep_id", &Vocabulary::sep_id)
      .def_readonly("mask_id", &Vocabulary::mask_id)
      .def("__len__", &Vocabulary::size)
      .def("lookup", [](const Vocabulary& v, const std::string& t) { return v.lookup(t); })
      .def("token", [](const Vocabulary& v, int32_t id) { return v.token(id); })
      .def("save", [](const Vocabulary& v, const std::string& path) { save_vocab(v, path); });

  m.def("normalize",
        [](const std::string& text, const std::string& casing) {
          return normalize(text, casing_from(casing));
        },
        py::arg("text"), py::arg("casing") = "cased");
  m.def("train_wordpiece",
        [](const std::vector<std::string>& sentences, int32_t vocab_size,
           const std::string& casing) {
          return train_wordpiece(sentences, vocab_size, casing_from(casing));
        },
        py::arg("sentences"), py::arg("vocab_size"), py::arg("casing") = "cased");
  m.def("load_vocab",
        [](const std::string& path, const std::string& casing) {
          return load_vocab(path, casing_from(casing));
        },
        py::arg("path"), py::arg("casing") = "cased");
  m.def("encode",
        [](const Vocabulary& v, const std::string& text) { return encode(v, text); });
  m.def("decode", [](const Vocabulary& v, const std::vector<int32_t>& ids) {
    return decode(v, ids);
  });

  // ---- corpus ----
  m.def("split_sentences",
        [](const std::string& text) { return split_sentences(text); });
  m.def("corpus_stats", [](const std::string& path, const std::string& format) {
    CorpusStats s = corpus_stats_file(path, parse_corpus_format(format));
    py::dict d;
    d["blocks"] = s.blocks;
    d["sentences"] = s.sentences;
    d["avg_sentences_per_block"] = s.avg_sentences_per_block();
    d["unpairable_fraction"] = s.unpairable_fraction();
    d["empty_corpus"] = s.empty_corpus;
    return d;
  }, py::arg("path"), py::arg("format") = "blank-line-blocks");

  // ---- pretraining data ----
  m.def("nsp_pair_count",
        [](int64_t sentences, int64_t nonempty_blocks) { return 2 * (sentences - nonempty_blocks); },
        "closed-form pair count at a 1:1 negative ratio");
  m.def("build_pretrain_examples",
        [](const std::string& corpus_path, const std::string& format, const Vocabulary& vocab,
           int32_t max_len, uint64_t seed, const std::string& output) {
          std::vector<TextBlock> blocks = ingest_all(corpus_path, parse_corpus_format(format));
          PretrainFile f = build_pretrain_examples(blocks, vocab, MaskPolicy{}, max_len, seed);
          write_pretrain_file(output, f);
          return f.examples.size();
        },
        py::arg("corpus_path"), py::arg("format"), py::arg("vocab"), py::arg("max_len"),
        py::arg("seed"), py::arg("output"));

  // ---- model bookkeeping ----
  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init([](int32_t vocab_size, int32_t embedding_size, int32_t hidden_size,
                       int32_t layers, int32_t heads, int32_t ff_size, int32_t max_positions,
                       bool share_layers, float dropout) {
             ModelConfig c;
             c.vocab_size = vocab_size;
             c.embedding_size = embedding_size;
             c.hidden_size = hidden_size;
             c.layers = layers;
             c.heads = heads;
             c.ff_size = ff_size;
             c.max_positions = max_positions;
             c.share_layers = share_layers;
             c.dropout = dropout;
             c.validate();
             return c;
           }),
           py::arg("vocab_size"), py::arg("embedding_size"), py::arg("hidden_size"),
           py::arg("layers"), py::arg("heads"), py::arg("ff_size"), py::arg("max_positions") = 512,
           py::arg("share_layers") = false, py::arg("dropout") = 0.1f)
      .def_static("base", &ModelConfig::base)
      .def_static("base_factorized_shared", &ModelConfig::base_factorized_shared)
      .def_readonly("vocab_size", &ModelConfig::vocab_size)
      .def_readonly("hidden_size", &ModelConfig::hidden_size)
      .def_readonly("share_layers", &ModelConfig::share_layers);

  m.def("param_count", [](const ModelConfig& c) {
    ParamCounts pc = param_count(c);
    py::dict d;
    d["embedding"] = pc.embedding;
    d["model"] = pc.model;
    d["heads"] = pc.heads;
    d["total"] = pc.total();
    return d;
  });

  m.def("lr_schedule", [](int64_t step, int64_t total, int64_t warmup, double base_lr) {
    TrainPhase p;
    p.total_steps = total;
    p.warmup_steps = warmup;
    p.base_lr = base_lr;
    return lr_schedule(step, p);
  }, py::arg("step"), py::arg("total"), py::arg("warmup"), py::arg("base_lr"));

  // ---- metrics ----
  m.def("extract_spans", [](const std::vector<std::string>& tags) {
    std::vector<std::tuple<int, int, std::string>> out;
    for (const auto& s : extract_spans(tags)) out.emplace_back(s.start, s.end, s.label);
    return out;
  });
  auto prf_dict = [](const PrecisionRecallF1& r) {
    py::dict d;
    d["precision"] = r.precision;
    d["recall"] = r.recall;
    d["f1"] = r.f1;
    d["zero_support"] = r.zero_support;
    return d;
  };
  m.def("entity_f1",
        [prf_dict](const std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>>&
                       pairs) {
          std::vector<TagSequencePair> ps;
          for (const auto& [g, p] : pairs) ps.push_back({g, p});
          return prf_dict(entity_f1(ps));
        });
  m.def("token_f1",
        [prf_dict](const std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>>&
                       pairs) {
          std::vector<TagSequencePair> ps;
          for (const auto& [g, p] : pairs) ps.push_back({g, p});
          return prf_dict(token_f1(ps));
        });
  m.def("strip_bio", &strip_bio);
  m.def("pearson", &pearson);
  m.def("spearman", &spearman);
  m.def("auroc", &auroc);
  m.def("multilabel_f1",
        [prf_dict](const std::vector<std::set<int>>& pred, const std::vector<std::set<int>>& gold) {
          return prf_dict(multilabel_f1(pred, gold));
        });
  m.def("confidence_interval", [](const std::vector<double>& values) {
    EvalReport r = confidence_interval(values);
    py::dict d;
    d["value"] = r.value;
    d["half_width"] = r.half_width;
    d["runs"] = r.runs;
    d["has_interval"] = r.has_interval;
    return d;
  });

  // ---- synthetic corpora ----
  m.def("synth_corpus",
        [](const std::string& path, int64_t blocks, double avg_sentences, uint64_t seed,
           int32_t vocab_words) {
          SynthOptions o;
          o.blocks = blocks;
          o.avg_sentences = avg_sentences;
          o.seed = seed;
          o.vocab_words = vocab_words;
          write_synth_corpus_file(path, o);
        },
        py::arg("path"), py::arg("blocks"), py::arg("avg_sentences") = 5.0, py::arg("seed") = 1,
        py::arg("vocab_words") = 60);
}
