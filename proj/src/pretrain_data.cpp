// SPDX-License-Identifier: Apache-2.0
#include "minibert/pretrain_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

#include "minibert/error.hpp"
#include "minibert/serialize.hpp"

namespace minibert {

void MaskPolicy::validate() const {
  if (!(select_prob > 0.0 && select_prob < 1.0)) fail_data("mask policy: select_prob outside (0,1)");
  if (std::fabs(mask_frac + random_frac + keep_frac - 1.0) > 1e-9) {
    fail_data("mask policy: mask/random/keep fractions must sum to 1");
  }
}

void SentenceReservoir::offer(const std::string& sentence) {
  ++seen_;
  if (pool_.size() < capacity_) {
    pool_.push_back(sentence);
  } else {
    const uint64_t j = rng_.below(static_cast<uint64_t>(seen_));
    if (j < capacity_) pool_[static_cast<size_t>(j)] = sentence;
  }
}

void SentenceReservoir::offer_block(const TextBlock& block) {
  for (const auto& s : block.sentences) offer(s);
}

std::string SentenceReservoir::sample(Rng& rng, const std::string& exclude_a,
                                      const std::string& exclude_b) const {
  if (pool_.empty()) return "";
  for (int attempt = 0; attempt < 32; ++attempt) {
    const std::string& cand = pool_[static_cast<size_t>(rng.below(pool_.size()))];
    if (cand != exclude_a && cand != exclude_b) return cand;
  }
  for (const auto& cand : pool_) {
    if (cand != exclude_a && cand != exclude_b) return cand;
  }
  return "";
}

std::vector<SentencePair> generate_nsp_pairs(const TextBlock& block, Rng& rng,
                                             double negatives_per_positive,
                                             const SentenceReservoir* reservoir) {
  std::vector<SentencePair> pairs;
  const auto& s = block.sentences;
  const size_t k = s.size();
  if (k < 2) return pairs;

  for (size_t i = 0; i + 1 < k; ++i) {
    pairs.push_back({s[i], s[i + 1], true});

    long n_neg = static_cast<long>(std::floor(negatives_per_positive));
    const double frac = negatives_per_positive - std::floor(negatives_per_positive);
    if (frac > 0.0 && rng.uniform() < frac) ++n_neg;

    for (long n = 0; n < n_neg; ++n) {
      // In-block candidates: anything except A itself and the true next.
      if (k > 2) {
        size_t j = static_cast<size_t>(rng.below(k - 2));
        if (j >= i) j += 2;  // skip indices i and i+1
        pairs.push_back({s[i], s[j], false});
      } else if (reservoir != nullptr) {
        std::string b = reservoir->sample(rng, s[i], s[i + 1]);
        if (!b.empty()) pairs.push_back({s[i], std::move(b), false});
      }
    }
  }
  return pairs;
}

MlmResult apply_mlm_mask(const std::vector<int32_t>& ids, const std::vector<uint8_t>& maskable,
                         const MaskPolicy& policy, const Vocabulary& vocab, Rng& rng) {
  if (ids.size() != maskable.size()) fail_data("apply_mlm_mask: length mismatch");
  policy.validate();

  MlmResult r;
  r.masked_ids = ids;
  std::vector<int32_t> candidates;
  for (size_t i = 0; i < maskable.size(); ++i) {
    if (maskable[i]) candidates.push_back(static_cast<int32_t>(i));
  }
  if (candidates.empty()) return r;

  const auto n_select = std::max<int64_t>(
      1, std::llround(policy.select_prob * static_cast<double>(candidates.size())));
  // Partial Fisher-Yates for a uniform sample without replacement.
  for (int64_t i = 0; i < n_select; ++i) {
    const size_t j =
        static_cast<size_t>(i) + static_cast<size_t>(rng.below(candidates.size() - static_cast<size_t>(i)));
    std::swap(candidates[static_cast<size_t>(i)], candidates[j]);
  }
  candidates.resize(static_cast<size_t>(n_select));
  std::sort(candidates.begin(), candidates.end());

  const int32_t n_specials = Vocabulary::kNumSpecials;
  for (int32_t pos : candidates) {
    r.positions.push_back(pos);
    r.labels.push_back(ids[static_cast<size_t>(pos)]);
    const double u = rng.uniform();
    if (u < policy.mask_frac) {
      r.masked_ids[static_cast<size_t>(pos)] = vocab.mask_id;
    } else if (u < policy.mask_frac + policy.random_frac) {
      r.masked_ids[static_cast<size_t>(pos)] =
          n_specials + static_cast<int32_t>(rng.below(static_cast<uint64_t>(vocab.size() - n_specials)));
    }
    // else: keep intact
  }
  return r;
}

void truncate_pair(std::vector<int32_t>& a, std::vector<int32_t>& b, size_t max_total) {
  while (a.size() + b.size() > max_total) {
    if (a.size() > b.size()) {
      a.pop_back();
    } else {
      b.pop_back();
    }
  }
}

PretrainExample build_example(const SentencePair& pair, const Vocabulary& vocab,
                              const MaskPolicy& policy, int32_t max_len, Rng& rng) {
  if (max_len < 8) fail_data("build_example: max_len must be at least 8");

  std::vector<int32_t> a = encode(vocab, normalize(pair.sentence_a, vocab.casing)).ids;
  std::vector<int32_t> b = encode(vocab, normalize(pair.sentence_b, vocab.casing)).ids;
  truncate_pair(a, b, static_cast<size_t>(max_len) - 3);

  PretrainExample ex;
  ex.input_ids.assign(static_cast<size_t>(max_len), vocab.pad_id);
  ex.segment_ids.assign(static_cast<size_t>(max_len), 0);
  std::vector<uint8_t> maskable(static_cast<size_t>(max_len), 0);

  size_t t = 0;
  ex.input_ids[t++] = vocab.cls_id;
  for (int32_t id : a) {
    maskable[t] = vocab.is_special(id) ? 0 : 1;
    ex.input_ids[t++] = id;
  }
  ex.input_ids[t++] = vocab.sep_id;
  for (int32_t id : b) {
    ex.segment_ids[t] = 1;
    maskable[t] = vocab.is_special(id) ? 0 : 1;
    ex.input_ids[t++] = id;
  }
  ex.segment_ids[t] = 1;
  ex.input_ids[t++] = vocab.sep_id;
  ex.real_len = static_cast<int32_t>(t);
  ex.nsp_label = pair.is_next ? 1 : 0;

  MlmResult m = apply_mlm_mask(ex.input_ids, maskable, policy, vocab, rng);
  ex.input_ids = std::move(m.masked_ids);
  ex.mlm_positions = std::move(m.positions);
  ex.mlm_labels = std::move(m.labels);
  return ex;
}

namespace {
constexpr char kMagic[5] = "MBPT";
constexpr uint32_t kVersion = 1;
}  // namespace

void write_pretrain_file(const std::string& path, const PretrainFile& file) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_data("cannot open for writing: " + path);
  out.write(kMagic, 4);
  write_pod<uint32_t>(out, kVersion);
  write_pod<int32_t>(out, file.max_len);
  write_pod<double>(out, file.policy.select_prob);
  write_pod<double>(out, file.policy.mask_frac);
  write_pod<double>(out, file.policy.random_frac);
  write_pod<double>(out, file.policy.keep_frac);
  write_pod<uint64_t>(out, file.examples.size());
  for (const auto& ex : file.examples) {
    write_pod<int32_t>(out, ex.real_len);
    write_pod<int32_t>(out, ex.nsp_label);
    out.write(reinterpret_cast<const char*>(ex.input_ids.data()),
              static_cast<std::streamsize>(ex.input_ids.size() * sizeof(int32_t)));
    out.write(reinterpret_cast<const char*>(ex.segment_ids.data()),
              static_cast<std::streamsize>(ex.segment_ids.size() * sizeof(int32_t)));
    write_pod<uint32_t>(out, static_cast<uint32_t>(ex.mlm_positions.size()));
    out.write(reinterpret_cast<const char*>(ex.mlm_positions.data()),
              static_cast<std::streamsize>(ex.mlm_positions.size() * sizeof(int32_t)));
    out.write(reinterpret_cast<const char*>(ex.mlm_labels.data()),
              static_cast<std::streamsize>(ex.mlm_labels.size() * sizeof(int32_t)));
  }
  if (!out) fail_data("failed writing: " + path);
}

PretrainFile read_pretrain_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_data("cannot open: " + path);
  expect_magic(in, kMagic, "pretraining example");
  const uint32_t version = read_pod<uint32_t>(in);
  if (version != kVersion) fail_data("unsupported pretraining file version " + std::to_string(version));
  PretrainFile file;
  file.max_len = read_pod<int32_t>(in);
  file.policy.select_prob = read_pod<double>(in);
  file.policy.mask_frac = read_pod<double>(in);
  file.policy.random_frac = read_pod<double>(in);
  file.policy.keep_frac = read_pod<double>(in);
  const uint64_t n = read_pod<uint64_t>(in);
  file.examples.resize(n);
  for (auto& ex : file.examples) {
    ex.real_len = read_pod<int32_t>(in);
    ex.nsp_label = read_pod<int32_t>(in);
    ex.input_ids.resize(static_cast<size_t>(file.max_len));
    in.read(reinterpret_cast<char*>(ex.input_ids.data()),
            static_cast<std::streamsize>(ex.input_ids.size() * sizeof(int32_t)));
    ex.segment_ids.resize(static_cast<size_t>(file.max_len));
    in.read(reinterpret_cast<char*>(ex.segment_ids.data()),
            static_cast<std::streamsize>(ex.segment_ids.size() * sizeof(int32_t)));
    const uint32_t m = read_pod<uint32_t>(in);
    ex.mlm_positions.resize(m);
    in.read(reinterpret_cast<char*>(ex.mlm_positions.data()),
            static_cast<std::streamsize>(m * sizeof(int32_t)));
    ex.mlm_labels.resize(m);
    in.read(reinterpret_cast<char*>(ex.mlm_labels.data()),
            static_cast<std::streamsize>(m * sizeof(int32_t)));
    if (!in) fail_data("truncated pretraining file: " + path);
  }
  return file;
}

void dump_pretrain_file(const PretrainFile& file, const Vocabulary& vocab, std::ostream& out,
                        size_t limit) {
  out << "max_len: " << file.max_len << "\n";
  out << "select_prob: " << file.policy.select_prob << " mask/random/keep: " << file.policy.mask_frac
      << "/" << file.policy.random_frac << "/" << file.policy.keep_frac << "\n";
  out << "examples: " << file.examples.size() << "\n";
  const size_t n = limit == 0 ? file.examples.size() : std::min(limit, file.examples.size());
  for (size_t i = 0; i < n; ++i) {
    const auto& ex = file.examples[i];
    out << "--- example " << i << " nsp=" << ex.nsp_label << " len=" << ex.real_len << "\n";
    out << "tokens:";
    for (int32_t t = 0; t < ex.real_len; ++t) {
      out << ' ' << vocab.token(ex.input_ids[static_cast<size_t>(t)]);
      if (ex.segment_ids[static_cast<size_t>(t)] == 1) out << "/1";
    }
    out << "\nmlm:";
    for (size_t k = 0; k < ex.mlm_positions.size(); ++k) {
      out << ' ' << ex.mlm_positions[k] << "->" << vocab.token(ex.mlm_labels[k]);
    }
    out << "\n";
  }
}

PretrainFile build_pretrain_examples(const std::vector<TextBlock>& blocks, const Vocabulary& vocab,
                                     const MaskPolicy& policy, int32_t max_len, uint64_t seed,
                                     double negatives_per_positive, size_t reservoir_capacity) {
  PretrainFile file;
  file.max_len = max_len;
  file.policy = policy;

  // First pass fills the fallback reservoir so even a leading two-sentence
  // block can draw a negative.
  SentenceReservoir reservoir(reservoir_capacity, seed);
  for (const auto& b : blocks) reservoir.offer_block(b);

  for (const auto& b : blocks) {
    Rng rng(mix_seed(seed, static_cast<uint64_t>(b.id)));
    for (const auto& pair : generate_nsp_pairs(b, rng, negatives_per_positive, &reservoir)) {
      file.examples.push_back(build_example(pair, vocab, policy, max_len, rng));
    }
  }
  return file;
}

}  // namespace minibert
