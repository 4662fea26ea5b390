// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const std::string kCli = MINIBERT_CLI_PATH;

int run(const std::string& args, const std::string& log = "cli_tmp/out.log") {
  const std::string cmd = kCli + " " + args + " >" + log + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  f << content;
}

struct Workspace {
  Workspace() {
    fs::remove_all("cli_tmp");
    fs::create_directories("cli_tmp");
  }
};

// shared pipeline artifacts built once
const Workspace& workspace() {
  static Workspace ws;
  return ws;
}

void build_pipeline_artifacts() {
  workspace();
  static bool done = false;
  if (done) return;
  done = true;
  REQUIRE(run("synth --blocks 12 --avg-sentences 5 --seed 7 --output cli_tmp/corpus.txt") == 0);
  REQUIRE(run("tokenizer train --input cli_tmp/corpus.txt --vocab-size 150 --casing cased "
              "--output cli_tmp/vocab.txt") == 0);
  REQUIRE(run("pretrain-data build --input cli_tmp/corpus.txt --vocab cli_tmp/vocab.txt "
              "--max-len 32 --seed 9 --output cli_tmp/ex.bin") == 0);
  write_file("cli_tmp/run.cfg",
             "model.hidden_size=32\nmodel.layers=2\nmodel.heads=4\nmodel.ff_size=64\n"
             "model.dropout=0.1\ntrain.seed=5\ntrain.log_every=5\nphase1.max_len=32\n"
             "phase1.batch=8\nphase1.steps=12\nphase1.lr=1e-3\nphase1.warmup=2\n");
  REQUIRE(run("pretrain --config cli_tmp/run.cfg --examples cli_tmp/ex.bin "
              "--vocab cli_tmp/vocab.txt --out cli_tmp/ckpt") == 0);
}

}  // namespace

TEST_CASE("synth is byte-deterministic under a fixed seed") {
  workspace();
  CHECK(run("synth --blocks 10 --avg-sentences 5.61 --seed 7 --output cli_tmp/s1.txt") == 0);
  CHECK(run("synth --blocks 10 --avg-sentences 5.61 --seed 7 --output cli_tmp/s2.txt") == 0);
  CHECK(run("synth --blocks 10 --avg-sentences 5.61 --seed 8 --output cli_tmp/s3.txt") == 0);
  CHECK(slurp("cli_tmp/s1.txt") == slurp("cli_tmp/s2.txt"));
  CHECK(slurp("cli_tmp/s1.txt") != slurp("cli_tmp/s3.txt"));
  CHECK(fs::exists("cli_tmp/s1.txt.resolved-config"));
}

TEST_CASE("exit codes: usage 1, data 2") {
  workspace();
  CHECK(run("synth --no-such-flag 1") == 1);
  CHECK(run("corpus stats --input cli_tmp/does_not_exist.txt") == 2);
  CHECK(run("") == 1);
  CHECK(run("--help") == 0);
}

TEST_CASE("corpus stats json output") {
  workspace();
  write_file("cli_tmp/c.txt", "Prvni veta.\nDruha veta.\n\nTreti veta.\n");
  CHECK(run("corpus stats --input cli_tmp/c.txt --json", "cli_tmp/stats.json") == 0);
  const std::string out = slurp("cli_tmp/stats.json");
  CHECK(out.find("\"blocks\":2") != std::string::npos);
  CHECK(out.find("\"sentences\":3") != std::string::npos);
}

TEST_CASE("tokenizer encode round trip through the shell") {
  build_pipeline_artifacts();
  write_file("cli_tmp/input.txt", "Alfa žuku\n");
  const std::string cmd = kCli + " tokenizer encode --vocab cli_tmp/vocab.txt --show-alignment "
                                 "< cli_tmp/input.txt > cli_tmp/encoded.txt 2>&1";
  REQUIRE(WEXITSTATUS(std::system(cmd.c_str())) == 0);
  const std::string out = slurp("cli_tmp/encoded.txt");
  CHECK(out.find("/0*") != std::string::npos);  // first word start marked
  CHECK(out.find("/1") != std::string::npos);   // second word present
}

TEST_CASE("pretrain writes loss log, checkpoint, resolved config, deterministically") {
  build_pipeline_artifacts();
  CHECK(fs::exists("cli_tmp/ckpt/final.model"));
  CHECK(fs::exists("cli_tmp/ckpt/resolved-config"));
  const std::string csv = slurp("cli_tmp/ckpt/loss.csv");
  CHECK(csv.rfind("step,lr,mlm_loss,nsp_loss,total", 0) == 0);

  REQUIRE(run("pretrain --config cli_tmp/run.cfg --examples cli_tmp/ex.bin "
              "--vocab cli_tmp/vocab.txt --out cli_tmp/ckpt_again") == 0);
  CHECK(slurp("cli_tmp/ckpt/final.model") == slurp("cli_tmp/ckpt_again/final.model"));
  CHECK(slurp("cli_tmp/ckpt/loss.csv") == slurp("cli_tmp/ckpt_again/loss.csv"));
}

TEST_CASE("pretrain with workers writes a transcript and matches the serial result") {
  build_pipeline_artifacts();
  REQUIRE(run("pretrain --config cli_tmp/run.cfg --examples cli_tmp/ex.bin "
              "--vocab cli_tmp/vocab.txt --out cli_tmp/ckpt_w2 --workers 2") == 0);
  CHECK(fs::exists("cli_tmp/ckpt_w2/transcript.log"));
  CHECK(!slurp("cli_tmp/ckpt_w2/transcript.log").empty());
}

TEST_CASE("pretrain resume reproduces the uninterrupted run") {
  build_pipeline_artifacts();
  write_file("cli_tmp/run_ck.cfg",
             "model.hidden_size=32\nmodel.layers=2\nmodel.heads=4\nmodel.ff_size=64\n"
             "model.dropout=0.1\ntrain.seed=5\ntrain.checkpoint_every=6\nphase1.max_len=32\n"
             "phase1.batch=8\nphase1.steps=12\nphase1.lr=1e-3\nphase1.warmup=2\n");
  REQUIRE(run("pretrain --config cli_tmp/run_ck.cfg --examples cli_tmp/ex.bin "
              "--vocab cli_tmp/vocab.txt --out cli_tmp/ckpt_mid") == 0);
  REQUIRE(fs::exists("cli_tmp/ckpt_mid/ckpt-p0-s6.model"));
  REQUIRE(run("pretrain --config cli_tmp/run_ck.cfg --examples cli_tmp/ex.bin "
              "--vocab cli_tmp/vocab.txt --out cli_tmp/ckpt_resumed "
              "--resume cli_tmp/ckpt_mid/ckpt-p0-s6") == 0);
  CHECK(slurp("cli_tmp/ckpt_resumed/final.model") == slurp("cli_tmp/ckpt_mid/final.model"));
}

TEST_CASE("pretrain rejects unknown config keys and missing seed") {
  build_pipeline_artifacts();
  write_file("cli_tmp/bad.cfg", "phase1.steps=4\nbogus.key=1\n");
  CHECK(run("pretrain --config cli_tmp/bad.cfg --examples cli_tmp/ex.bin "
            "--vocab cli_tmp/vocab.txt --out cli_tmp/ckpt_bad") == 1);
  write_file("cli_tmp/noseed.cfg", "phase1.steps=4\nphase1.max_len=32\nphase1.batch=4\n");
  CHECK(run("pretrain --config cli_tmp/noseed.cfg --examples cli_tmp/ex.bin "
            "--vocab cli_tmp/vocab.txt --out cli_tmp/ckpt_noseed") == 1);
}

TEST_CASE("finetune, predict and evaluate on a separable sentiment set") {
  build_pipeline_artifacts();
  // class word decides the polarity
  std::ostringstream train, dev;
  const char* pos[] = {"bavelo", "rekuli", "davoba"};
  const char* neg[] = {"zunemi", "kupeli", "sotoda"};
  for (int i = 0; i < 60; ++i) {
    const bool p = i % 2 == 0;
    const char* w = (p ? pos : neg)[i % 3];
    train << w << " žuku rečo\t" << (p ? "pos" : "neg") << "\n";
    if (i < 20) dev << w << " kuto voso\t" << (p ? "pos" : "neg") << "\n";
  }
  write_file("cli_tmp/sent_train.tsv", train.str());
  write_file("cli_tmp/sent_dev.tsv", dev.str());

  REQUIRE(run("finetune --task sentiment --train cli_tmp/sent_train.tsv --dev cli_tmp/sent_dev.tsv "
              "--checkpoint cli_tmp/ckpt/final.model --vocab cli_tmp/vocab.txt --out cli_tmp/ft "
              "--lr 2e-3 --epochs 6 --batch 8 --seed 3 --max-len 16",
              "cli_tmp/ft.log") == 0);
  CHECK(fs::exists("cli_tmp/ft/best.model"));
  CHECK(fs::exists("cli_tmp/ft/epochs.csv"));

  REQUIRE(run("predict --task sentiment --checkpoint cli_tmp/ft/best.model --vocab cli_tmp/vocab.txt "
              "--input cli_tmp/sent_dev.tsv --output cli_tmp/sent_pred.txt --max-len 16") == 0);
  REQUIRE(run("evaluate --task sentiment --gold cli_tmp/sent_dev.tsv --pred cli_tmp/sent_pred.txt",
              "cli_tmp/eval.log") == 0);
  const std::string eval = slurp("cli_tmp/eval.log");
  CHECK(eval.rfind("micro_f1: ", 0) == 0);
  const double f1 = std::stod(eval.substr(10));
  CHECK(f1 >= 0.95);

  // task mismatch between checkpoint and request is a data error
  CHECK(run("predict --task sts --checkpoint cli_tmp/ft/best.model --vocab cli_tmp/vocab.txt "
            "--input cli_tmp/sent_dev.tsv --output cli_tmp/bogus.txt") == 2);
}

TEST_CASE("token task pipeline with conll files") {
  build_pipeline_artifacts();
  std::ostringstream train;
  const char* nouns[] = {"žuku", "rečo", "kuto"};
  const char* verbs[] = {"bavelo", "zunemi"};
  for (int s = 0; s < 40; ++s) {
    train << nouns[s % 3] << "\tB-N\n" << verbs[s % 2] << "\tB-V\n" << nouns[(s + 1) % 3]
          << "\tB-N\n\n";
  }
  std::ostringstream dev;
  for (int s = 0; s < 8; ++s) {
    dev << nouns[(s + 2) % 3] << "\tB-N\n" << verbs[(s + 1) % 2] << "\tB-V\n\n";
  }
  write_file("cli_tmp/tok_train.conll", train.str());
  write_file("cli_tmp/tok_dev.conll", dev.str());

  REQUIRE(run("finetune --task ner --train cli_tmp/tok_train.conll --dev cli_tmp/tok_dev.conll "
              "--checkpoint cli_tmp/ckpt/final.model --vocab cli_tmp/vocab.txt --out cli_tmp/ft_tok "
              "--lr 2e-3 --epochs 5 --batch 8 --seed 11 --max-len 16",
              "cli_tmp/ft_tok.log") == 0);
  REQUIRE(run("predict --task ner --checkpoint cli_tmp/ft_tok/best.model --vocab cli_tmp/vocab.txt "
              "--input cli_tmp/tok_dev.conll --output cli_tmp/tok_pred.conll --max-len 16") == 0);
  REQUIRE(run("evaluate --task ner --gold cli_tmp/tok_dev.conll --pred cli_tmp/tok_pred.conll",
              "cli_tmp/tok_eval.log") == 0);
  CHECK(slurp("cli_tmp/tok_eval.log").rfind("entity_f1: ", 0) == 0);
  // the projection variant strips BIO prefixes before scoring
  REQUIRE(run("evaluate --task srl --strip-bio --gold cli_tmp/tok_dev.conll "
              "--pred cli_tmp/tok_pred.conll", "cli_tmp/strip_eval.log") == 0);
  CHECK(slurp("cli_tmp/strip_eval.log").rfind("token_f1: ", 0) == 0);
}

TEST_CASE("evaluate --aggregate prints a confidence interval") {
  workspace();
  write_file("cli_tmp/runs.txt", "0.8\n0.84\n0.82\n");
  REQUIRE(run("evaluate --task sentiment --aggregate cli_tmp/runs.txt", "cli_tmp/agg.log") == 0);
  const std::string out = slurp("cli_tmp/agg.log");
  CHECK(out.find("0.82") != std::string::npos);
  CHECK(out.find("+-") != std::string::npos);
  CHECK(out.find("runs 3") != std::string::npos);
}

TEST_CASE("two-phase factorized shared-encoder pretraining at f64") {
  build_pipeline_artifacts();
  REQUIRE(run("pretrain-data build --input cli_tmp/corpus.txt --vocab cli_tmp/vocab.txt "
              "--max-len 48 --seed 10 --output cli_tmp/ex48.bin") == 0);
  write_file("cli_tmp/run2p.cfg",
             "model.hidden_size=32\nmodel.embedding_size=16\nmodel.layers=2\nmodel.heads=4\n"
             "model.ff_size=64\nmodel.share_layers=1\nmodel.dropout=0.1\ntrain.seed=5\n"
             "phase1.max_len=32\nphase1.batch=8\nphase1.steps=6\nphase1.lr=1e-3\nphase1.warmup=1\n"
             "phase2.max_len=48\nphase2.batch=4\nphase2.steps=4\nphase2.lr=5e-4\nphase2.warmup=1\n"
             "phase2.examples=cli_tmp/ex48.bin\n");
  REQUIRE(run("pretrain --config cli_tmp/run2p.cfg --examples cli_tmp/ex.bin "
              "--vocab cli_tmp/vocab.txt --out cli_tmp/ckpt2p --precision f64") == 0);
  CHECK(fs::exists("cli_tmp/ckpt2p/final.model"));
  REQUIRE(run("pretrain --config cli_tmp/run2p.cfg --examples cli_tmp/ex.bin "
              "--vocab cli_tmp/vocab.txt --out cli_tmp/ckpt2p_b --precision f64") == 0);
  CHECK(slurp("cli_tmp/ckpt2p/final.model") == slurp("cli_tmp/ckpt2p_b/final.model"));
  // wrong examples length for phase 2 is a data error
  write_file("cli_tmp/run2bad.cfg",
             "train.seed=5\nphase1.max_len=32\nphase1.batch=8\nphase1.steps=2\n"
             "phase2.max_len=48\nphase2.batch=4\nphase2.steps=2\nphase2.examples=cli_tmp/ex.bin\n");
  CHECK(run("pretrain --config cli_tmp/run2bad.cfg --examples cli_tmp/ex.bin "
            "--vocab cli_tmp/vocab.txt --out cli_tmp/ckpt2bad") == 2);
}

TEST_CASE("srl pipeline end to end") {
  build_pipeline_artifacts();
  std::ostringstream data;
  const char* verbs[] = {"bavelo", "zunemi"};
  const char* nouns[] = {"žuku", "rečo", "kuto"};
  for (int s = 0; s < 30; ++s) {
    data << "#predicate\t1\t1\n";
    data << nouns[s % 3] << "\tB-ARG0\n" << verbs[s % 2] << "\tO\n" << nouns[(s + 1) % 3]
         << "\tB-ARG1\n\n";
  }
  write_file("cli_tmp/srl_train.conll", data.str());
  write_file("cli_tmp/srl_dev.conll", data.str());
  REQUIRE(run("finetune --task srl --train cli_tmp/srl_train.conll --dev cli_tmp/srl_dev.conll "
              "--checkpoint cli_tmp/ckpt/final.model --vocab cli_tmp/vocab.txt --out cli_tmp/ft_srl "
              "--lr 2e-3 --epochs 4 --batch 8 --seed 2 --max-len 24",
              "cli_tmp/ft_srl.log") == 0);
  REQUIRE(run("predict --task srl --checkpoint cli_tmp/ft_srl/best.model --vocab cli_tmp/vocab.txt "
              "--input cli_tmp/srl_dev.conll --output cli_tmp/srl_pred.conll --max-len 24") == 0);
  // predictions carry one tag per word
  int words = 0, tags = 0;
  std::istringstream pred(slurp("cli_tmp/srl_pred.conll"));
  std::string line;
  while (std::getline(pred, line)) {
    if (line.empty()) continue;
    ++words;
    tags += line.find('\t') != std::string::npos;
  }
  CHECK(words == 90);
  CHECK(tags == 90);
  REQUIRE(run("evaluate --task srl --gold cli_tmp/srl_dev.conll --pred cli_tmp/srl_pred.conll",
              "cli_tmp/srl_eval.log") == 0);
  CHECK(slurp("cli_tmp/srl_eval.log").rfind("entity_f1: ", 0) == 0);
}

TEST_CASE("multilabel pipeline with probabilities and auroc") {
  build_pipeline_artifacts();
  std::ostringstream data;
  const char* topics[] = {"žuku", "rečo", "kuto"};
  for (int i = 0; i < 36; ++i) {
    const int a = i % 3, b = (i + 1) % 3;
    data << topics[a] << ' ' << topics[b] << " voso\tT" << a << ",T" << b << "\n";
  }
  write_file("cli_tmp/mlc_train.tsv", data.str());
  write_file("cli_tmp/mlc_dev.tsv", data.str());
  REQUIRE(run("finetune --task mlc --train cli_tmp/mlc_train.tsv --dev cli_tmp/mlc_dev.tsv "
              "--checkpoint cli_tmp/ckpt/final.model --vocab cli_tmp/vocab.txt --out cli_tmp/ft_mlc "
              "--lr 2e-3 --epochs 5 --batch 8 --seed 2 --max-len 16",
              "cli_tmp/ft_mlc.log") == 0);
  REQUIRE(run("predict --task mlc --checkpoint cli_tmp/ft_mlc/best.model --vocab cli_tmp/vocab.txt "
              "--input cli_tmp/mlc_dev.tsv --output cli_tmp/mlc_pred.txt --max-len 16") == 0);
  REQUIRE(run("predict --task mlc --checkpoint cli_tmp/ft_mlc/best.model --vocab cli_tmp/vocab.txt "
              "--input cli_tmp/mlc_dev.tsv --output cli_tmp/mlc_probs.txt --max-len 16 "
              "--probabilities") == 0);
  REQUIRE(run("evaluate --task mlc --gold cli_tmp/mlc_dev.tsv --pred cli_tmp/mlc_pred.txt "
              "--scores cli_tmp/mlc_probs.txt",
              "cli_tmp/mlc_eval.log") == 0);
  const std::string eval = slurp("cli_tmp/mlc_eval.log");
  CHECK(eval.find("multilabel_f1: ") != std::string::npos);
  CHECK(eval.find("auroc: ") != std::string::npos);
}

TEST_CASE("sts pipeline reports correlations") {
  build_pipeline_artifacts();
  std::ostringstream data;
  const char* words[] = {"žuku", "rečo", "kuto", "voso"};
  for (int i = 0; i < 32; ++i) {
    const int a = i % 4, b = (i / 4) % 4;
    const double score = a == b ? 1.0 : 0.0;
    data << words[a] << " daneda\t" << words[b] << " daneda\t" << score << "\n";
  }
  write_file("cli_tmp/sts_train.tsv", data.str());
  write_file("cli_tmp/sts_dev.tsv", data.str());
  REQUIRE(run("finetune --task sts --train cli_tmp/sts_train.tsv --dev cli_tmp/sts_dev.tsv "
              "--checkpoint cli_tmp/ckpt/final.model --vocab cli_tmp/vocab.txt --out cli_tmp/ft_sts "
              "--lr 2e-3 --epochs 5 --batch 8 --seed 2 --max-len 16",
              "cli_tmp/ft_sts.log") == 0);
  REQUIRE(run("predict --task sts --checkpoint cli_tmp/ft_sts/best.model --vocab cli_tmp/vocab.txt "
              "--input cli_tmp/sts_dev.tsv --output cli_tmp/sts_pred.txt --max-len 16") == 0);
  REQUIRE(run("evaluate --task sts --gold cli_tmp/sts_dev.tsv --pred cli_tmp/sts_pred.txt",
              "cli_tmp/sts_eval.log") == 0);
  const std::string eval = slurp("cli_tmp/sts_eval.log");
  CHECK(eval.find("pearson: ") != std::string::npos);
  CHECK(eval.find("spearman: ") != std::string::npos);
}

TEST_CASE("synth table2 preset and example dump") {
  workspace();
  REQUIRE(run("synth --blocks 1 --preset table2 --scale 2e-5 --seed 3 "
              "--output cli_tmp/mix.txt") == 0);
  CHECK(run("corpus stats --input cli_tmp/mix.txt --json", "cli_tmp/mix.json") == 0);
  const std::string stats = slurp("cli_tmp/mix.json");
  // 2e-5 of the three source block counts: 982 + 9 + 52
  CHECK(stats.find("\"blocks\":1043") != std::string::npos);

  REQUIRE(run("tokenizer train --input cli_tmp/mix.txt --vocab-size 200 --casing uncased "
              "--output cli_tmp/mix_vocab.txt") == 0);
  REQUIRE(run("pretrain-data build --input cli_tmp/mix.txt --vocab cli_tmp/mix_vocab.txt "
              "--casing uncased --max-len 24 --seed 4 --output cli_tmp/mix.bin --dump 2",
              "cli_tmp/dump.log") == 0);
  const std::string dump = slurp("cli_tmp/dump.log");
  CHECK(dump.find("--- example 0") != std::string::npos);
  CHECK(dump.find("[CLS]") != std::string::npos);
}
