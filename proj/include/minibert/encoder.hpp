// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "minibert/model.hpp"
#include "minibert/pretrain_data.hpp"
#include "minibert/rng.hpp"

namespace minibert {

enum class RunMode { Train, Eval };

// One encoder input. position_ids left empty means 0..len-1; the attention
// mask is the prefix of ones of length real_len (padding behind it never
// influences real positions because the pass runs on the prefix only).
struct Features {
  std::vector<int32_t> input_ids;
  std::vector<int32_t> segment_ids;
  std::vector<int32_t> position_ids;
  int32_t real_len = 0;
  std::vector<int32_t> mlm_positions;
  std::vector<int32_t> mlm_labels;
  int32_t nsp_label = -1;  // -1 = no next-sentence target

  static Features from_pretrain(const PretrainExample& ex) {
    Features f;
    f.input_ids = ex.input_ids;
    f.segment_ids = ex.segment_ids;
    f.real_len = ex.real_len;
    f.mlm_positions = ex.mlm_positions;
    f.mlm_labels = ex.mlm_labels;
    f.nsp_label = ex.nsp_label;
    return f;
  }
};

template <typename S>
struct ForwardResult {
  int32_t seq_len = 0;
  std::vector<S> hidden;      // seq_len x H
  std::vector<S> pooled;      // H (tanh of affine-mapped [CLS] state)
  std::vector<S> mlm_logits;  // |mlm_positions| x V
  std::vector<S> nsp_logits;  // 2
};

struct LossBreakdown {
  double mlm = 0.0;
  double nsp = 0.0;
  int64_t mlm_count = 0;
  double total() const { return mlm + nsp; }
};

namespace nn {

inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x * 0.70710678118654752440));
}

inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * 0.70710678118654752440));
  const double pdf = 0.39894228040143267794 * std::exp(-0.5 * x * x);
  return cdf + x * pdf;
}

// y[n x m] = x[n x k] * W[k x m] (+ bias[m])
template <typename S>
void affine(const S* x, const S* w, const S* bias, S* y, int n, int k, int m) {
  for (int i = 0; i < n; ++i) {
    S* yi = y + static_cast<size_t>(i) * m;
    if (bias != nullptr) {
      std::copy(bias, bias + m, yi);
    } else {
      std::fill(yi, yi + m, S(0));
    }
    const S* xi = x + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const S xv = xi[p];
      if (xv == S(0)) continue;
      const S* wrow = w + static_cast<size_t>(p) * m;
      for (int j = 0; j < m; ++j) yi[j] += xv * wrow[j];
    }
  }
}

// dW[k x m] += x^T dy, db[m] += colsum(dy)
template <typename S>
void affine_backward_params(const S* x, const S* dy, S* dw, S* db, int n, int k, int m) {
  for (int i = 0; i < n; ++i) {
    const S* xi = x + static_cast<size_t>(i) * k;
    const S* dyi = dy + static_cast<size_t>(i) * m;
    for (int p = 0; p < k; ++p) {
      const S xv = xi[p];
      if (xv == S(0)) continue;
      S* dwrow = dw + static_cast<size_t>(p) * m;
      for (int j = 0; j < m; ++j) dwrow[j] += xv * dyi[j];
    }
    if (db != nullptr) {
      for (int j = 0; j < m; ++j) db[j] += dyi[j];
    }
  }
}

// dx[n x k] += dy W^T
template <typename S>
void affine_backward_input(const S* dy, const S* w, S* dx, int n, int k, int m) {
  for (int i = 0; i < n; ++i) {
    const S* dyi = dy + static_cast<size_t>(i) * m;
    S* dxi = dx + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const S* wrow = w + static_cast<size_t>(p) * m;
      S acc = S(0);
      for (int j = 0; j < m; ++j) acc += dyi[j] * wrow[j];
      dxi[p] += acc;
    }
  }
}

inline constexpr double kLayerNormEps = 1e-12;

template <typename S>
void layernorm_forward(const S* x, const S* scale, const S* offset, S* xhat, S* rstd, S* y,
                       int rows, int d) {
  for (int i = 0; i < rows; ++i) {
    const S* xi = x + static_cast<size_t>(i) * d;
    S* xh = xhat + static_cast<size_t>(i) * d;
    S* yi = y + static_cast<size_t>(i) * d;
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += xi[j];
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      const double c = xi[j] - mean;
      var += c * c;
    }
    var /= d;
    const double r = 1.0 / std::sqrt(var + kLayerNormEps);
    rstd[i] = static_cast<S>(r);
    for (int j = 0; j < d; ++j) {
      xh[j] = static_cast<S>((xi[j] - mean) * r);
      yi[j] = scale[j] * xh[j] + offset[j];
    }
  }
}

template <typename S>
void layernorm_backward(const S* dy, const S* xhat, const S* rstd, const S* scale, S* dx,
                        S* dscale, S* doffset, int rows, int d) {
  for (int i = 0; i < rows; ++i) {
    const S* dyi = dy + static_cast<size_t>(i) * d;
    const S* xh = xhat + static_cast<size_t>(i) * d;
    S* dxi = dx + static_cast<size_t>(i) * d;
    double m1 = 0.0, m2 = 0.0;
    for (int j = 0; j < d; ++j) {
      const double dxhat = static_cast<double>(dyi[j]) * scale[j];
      m1 += dxhat;
      m2 += dxhat * xh[j];
      dscale[j] += dyi[j] * xh[j];
      doffset[j] += dyi[j];
    }
    m1 /= d;
    m2 /= d;
    for (int j = 0; j < d; ++j) {
      const double dxhat = static_cast<double>(dyi[j]) * scale[j];
      dxi[j] += static_cast<S>(rstd[i] * (dxhat - m1 - xh[j] * m2));
    }
  }
}

// Inverted dropout in place; mask records kept elements.
template <typename S>
void dropout_forward(S* x, uint8_t* mask, size_t n, double p, Rng& rng) {
  const S scale = static_cast<S>(1.0 / (1.0 - p));
  for (size_t i = 0; i < n; ++i) {
    if (rng.uniform() < p) {
      mask[i] = 0;
      x[i] = S(0);
    } else {
      mask[i] = 1;
      x[i] *= scale;
    }
  }
}

template <typename S>
void dropout_backward(S* dx, const uint8_t* mask, size_t n, double p) {
  const S scale = static_cast<S>(1.0 / (1.0 - p));
  for (size_t i = 0; i < n; ++i) dx[i] = mask[i] ? dx[i] * scale : S(0);
}

// loss = logsumexp(logits) - logits[target]; dlogits = softmax - onehot.
template <typename S>
double cross_entropy(const S* logits, int n, int target, S* dlogits, double grad_weight) {
  double mx = logits[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, static_cast<double>(logits[i]));
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += std::exp(static_cast<double>(logits[i]) - mx);
  const double lse = mx + std::log(sum);
  if (dlogits != nullptr) {
    for (int i = 0; i < n; ++i) {
      const double p = std::exp(static_cast<double>(logits[i]) - mx) / sum;
      dlogits[i] = static_cast<S>((p - (i == target ? 1.0 : 0.0)) * grad_weight);
    }
  }
  return lse - static_cast<double>(logits[target]);
}

template <typename S>
bool all_finite(const S* x, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    if (!std::isfinite(static_cast<double>(x[i]))) return false;
  }
  return true;
}

}  // namespace nn

namespace detail {

template <typename S>
struct LayerTrace {
  std::vector<S> in, q, k, v;          // T x H
  std::vector<S> probs, probs_dropped; // A x T x T
  std::vector<S> ctx;                  // T x H
  std::vector<S> res1, ln1_xhat, ln1_out;  // T x H
  std::vector<S> ln1_rstd;             // T
  std::vector<S> ffn_pre, ffn_act;     // T x F
  std::vector<S> res2, ln2_xhat, out;  // T x H
  std::vector<S> ln2_rstd;             // T
  std::vector<uint8_t> drop_attn, drop_attn_out, drop_ffn_out;
};

template <typename S>
struct Trace {
  int T = 0;
  bool training = false;
  std::vector<S> emb_xhat;       // T x E
  std::vector<S> emb_rstd;       // T
  std::vector<S> emb_out;        // T x E, post norm + dropout (projection input)
  std::vector<uint8_t> drop_emb;
  std::vector<LayerTrace<S>> layers;
  std::vector<S> pooled;         // H
};

// Resolved per-example ids (position ids defaulted, everything range-checked).
struct ResolvedIds {
  std::vector<int32_t> ids, segs, poss;
  int T = 0;
};

inline ResolvedIds resolve_ids(const ModelConfig& cfg, const Features& f) {
  ResolvedIds r;
  r.T = f.real_len;
  if (r.T <= 0) fail_data("encoder: empty input");
  if (static_cast<size_t>(r.T) > f.input_ids.size() ||
      static_cast<size_t>(r.T) > f.segment_ids.size() ||
      (!f.position_ids.empty() && static_cast<size_t>(r.T) > f.position_ids.size())) {
    fail_data("encoder: real_len exceeds feature buffers");
  }
  r.ids.assign(f.input_ids.begin(), f.input_ids.begin() + r.T);
  r.segs.assign(f.segment_ids.begin(), f.segment_ids.begin() + r.T);
  if (f.position_ids.empty()) {
    r.poss.resize(static_cast<size_t>(r.T));
    std::iota(r.poss.begin(), r.poss.end(), 0);
  } else {
    r.poss.assign(f.position_ids.begin(), f.position_ids.begin() + r.T);
  }
  for (int t = 0; t < r.T; ++t) {
    if (r.ids[t] < 0 || r.ids[t] >= cfg.vocab_size) {
      fail_data("encoder: input id " + std::to_string(r.ids[t]) + " out of range at position " +
                std::to_string(t));
    }
    if (r.segs[t] < 0 || r.segs[t] >= cfg.type_vocab) {
      fail_data("encoder: segment id out of range at position " + std::to_string(t));
    }
    if (r.poss[t] < 0 || r.poss[t] >= cfg.max_positions) {
      fail_data("encoder: position id out of range at position " + std::to_string(t));
    }
  }
  for (int32_t p : f.mlm_positions) {
    if (p < 0 || p >= r.T) fail_data("encoder: mlm position out of range");
  }
  return r;
}

// Full forward pass with cached intermediates. Attention runs over the
// unpadded prefix, which is exactly the additive -inf prefix mask.
template <typename S>
ForwardResult<S> run_forward(const ParameterSet<S>& p, const Features& f, RunMode mode,
                             uint64_t dropout_seed, Trace<S>* trace) {
  const ModelConfig& cfg = p.config;
  const ResolvedIds rid = resolve_ids(cfg, f);
  const int T = rid.T;
  const int E = cfg.embedding_size, H = cfg.hidden_size, A = cfg.heads, F = cfg.ff_size;
  const int D = H / A;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(D));
  const bool training = mode == RunMode::Train && cfg.dropout > 0.0f;
  const double pdrop = cfg.dropout;
  Rng drop_rng(mix_seed(dropout_seed, 0xd809));

  Trace<S> local;
  Trace<S>& tr = trace != nullptr ? *trace : local;
  tr.T = T;
  tr.training = training;
  tr.layers.assign(static_cast<size_t>(cfg.layers), LayerTrace<S>{});

  // Embeddings: token + position + segment, layer norm, dropout.
  std::vector<S> emb(static_cast<size_t>(T) * E);
  {
    const S* tok = p.ptr(p.refs.tok);
    const S* pos = p.ptr(p.refs.pos);
    const S* seg = p.ptr(p.refs.seg);
    for (int t = 0; t < T; ++t) {
      S* row = emb.data() + static_cast<size_t>(t) * E;
      const S* te = tok + static_cast<size_t>(rid.ids[t]) * E;
      const S* pe = pos + static_cast<size_t>(rid.poss[t]) * E;
      const S* se = seg + static_cast<size_t>(rid.segs[t]) * E;
      for (int j = 0; j < E; ++j) row[j] = te[j] + pe[j] + se[j];
    }
  }
  tr.emb_xhat.resize(emb.size());
  tr.emb_rstd.resize(static_cast<size_t>(T));
  tr.emb_out.resize(emb.size());
  nn::layernorm_forward(emb.data(), p.ptr(p.refs.elns), p.ptr(p.refs.elnb), tr.emb_xhat.data(),
                        tr.emb_rstd.data(), tr.emb_out.data(), T, E);
  if (training) {
    tr.drop_emb.resize(emb.size());
    nn::dropout_forward(tr.emb_out.data(), tr.drop_emb.data(), emb.size(), pdrop, drop_rng);
  }

  if (!nn::all_finite(tr.emb_out.data(), tr.emb_out.size())) {
    fail_data("non-finite activation detected in the embedding layer");
  }

  // Up-projection in the factorized variant.
  std::vector<S> x(static_cast<size_t>(T) * H);
  if (cfg.factorized()) {
    nn::affine(tr.emb_out.data(), p.ptr(p.refs.projw), p.ptr(p.refs.projb), x.data(), T, E, H);
  } else {
    x = tr.emb_out;
  }

  for (int l = 0; l < cfg.layers; ++l) {
    const BlockRefs& b = p.refs.blocks[static_cast<size_t>(cfg.share_layers ? 0 : l)];
    LayerTrace<S>& lt = tr.layers[static_cast<size_t>(l)];
    lt.in = x;

    lt.q.resize(static_cast<size_t>(T) * H);
    lt.k.resize(static_cast<size_t>(T) * H);
    lt.v.resize(static_cast<size_t>(T) * H);
    nn::affine(lt.in.data(), p.ptr(b.qw), p.ptr(b.qb), lt.q.data(), T, H, H);
    nn::affine(lt.in.data(), p.ptr(b.kw), p.ptr(b.kb), lt.k.data(), T, H, H);
    nn::affine(lt.in.data(), p.ptr(b.vw), p.ptr(b.vb), lt.v.data(), T, H, H);

    lt.probs.assign(static_cast<size_t>(A) * T * T, S(0));
    for (int a = 0; a < A; ++a) {
      const int off = a * D;
      for (int t = 0; t < T; ++t) {
        S* prow = lt.probs.data() + (static_cast<size_t>(a) * T + t) * T;
        double mx = -std::numeric_limits<double>::infinity();
        for (int s = 0; s < T; ++s) {
          double score = 0.0;
          const S* qr = lt.q.data() + static_cast<size_t>(t) * H + off;
          const S* kr = lt.k.data() + static_cast<size_t>(s) * H + off;
          for (int d = 0; d < D; ++d) score += static_cast<double>(qr[d]) * kr[d];
          score *= inv_sqrt_d;
          prow[s] = static_cast<S>(score);
          mx = std::max(mx, score);
        }
        double sum = 0.0;
        for (int s = 0; s < T; ++s) {
          const double e = std::exp(static_cast<double>(prow[s]) - mx);
          prow[s] = static_cast<S>(e);
          sum += e;
        }
        for (int s = 0; s < T; ++s) prow[s] = static_cast<S>(prow[s] / sum);
      }
    }
    lt.probs_dropped = lt.probs;
    if (training) {
      lt.drop_attn.resize(lt.probs.size());
      nn::dropout_forward(lt.probs_dropped.data(), lt.drop_attn.data(), lt.probs.size(), pdrop,
                          drop_rng);
    }

    lt.ctx.assign(static_cast<size_t>(T) * H, S(0));
    for (int a = 0; a < A; ++a) {
      const int off = a * D;
      for (int t = 0; t < T; ++t) {
        const S* prow = lt.probs_dropped.data() + (static_cast<size_t>(a) * T + t) * T;
        S* crow = lt.ctx.data() + static_cast<size_t>(t) * H + off;
        for (int s = 0; s < T; ++s) {
          const S w = prow[s];
          if (w == S(0)) continue;
          const S* vr = lt.v.data() + static_cast<size_t>(s) * H + off;
          for (int d = 0; d < D; ++d) crow[d] += w * vr[d];
        }
      }
    }

    lt.res1.resize(static_cast<size_t>(T) * H);
    nn::affine(lt.ctx.data(), p.ptr(b.ow), p.ptr(b.ob), lt.res1.data(), T, H, H);
    if (training) {
      lt.drop_attn_out.resize(lt.res1.size());
      nn::dropout_forward(lt.res1.data(), lt.drop_attn_out.data(), lt.res1.size(), pdrop,
                          drop_rng);
    }
    for (size_t i = 0; i < lt.res1.size(); ++i) lt.res1[i] += lt.in[i];

    lt.ln1_xhat.resize(lt.res1.size());
    lt.ln1_rstd.resize(static_cast<size_t>(T));
    lt.ln1_out.resize(lt.res1.size());
    nn::layernorm_forward(lt.res1.data(), p.ptr(b.ln1s), p.ptr(b.ln1b), lt.ln1_xhat.data(),
                          lt.ln1_rstd.data(), lt.ln1_out.data(), T, H);

    lt.ffn_pre.resize(static_cast<size_t>(T) * F);
    nn::affine(lt.ln1_out.data(), p.ptr(b.fw1), p.ptr(b.fb1), lt.ffn_pre.data(), T, H, F);
    lt.ffn_act.resize(lt.ffn_pre.size());
    for (size_t i = 0; i < lt.ffn_pre.size(); ++i) {
      lt.ffn_act[i] = static_cast<S>(nn::gelu(static_cast<double>(lt.ffn_pre[i])));
    }

    lt.res2.resize(static_cast<size_t>(T) * H);
    nn::affine(lt.ffn_act.data(), p.ptr(b.fw2), p.ptr(b.fb2), lt.res2.data(), T, F, H);
    if (training) {
      lt.drop_ffn_out.resize(lt.res2.size());
      nn::dropout_forward(lt.res2.data(), lt.drop_ffn_out.data(), lt.res2.size(), pdrop, drop_rng);
    }
    for (size_t i = 0; i < lt.res2.size(); ++i) lt.res2[i] += lt.ln1_out[i];

    lt.ln2_xhat.resize(lt.res2.size());
    lt.ln2_rstd.resize(static_cast<size_t>(T));
    lt.out.resize(lt.res2.size());
    nn::layernorm_forward(lt.res2.data(), p.ptr(b.ln2s), p.ptr(b.ln2b), lt.ln2_xhat.data(),
                          lt.ln2_rstd.data(), lt.out.data(), T, H);

    if (!nn::all_finite(lt.out.data(), lt.out.size())) {
      fail_data("non-finite activation detected in layer " + std::to_string(l));
    }
    x = lt.out;
  }

  ForwardResult<S> out;
  out.seq_len = T;
  out.hidden = x;

  // Pooler: tanh-activated affine map of the [CLS] state.
  out.pooled.resize(static_cast<size_t>(H));
  nn::affine(x.data(), p.ptr(p.refs.poolw), p.ptr(p.refs.poolb), out.pooled.data(), 1, H, H);
  for (auto& v : out.pooled) v = static_cast<S>(std::tanh(static_cast<double>(v)));
  tr.pooled = out.pooled;

  // MLM head at the queried positions: transform, gelu, norm, tied decode.
  const size_t n_mlm = f.mlm_positions.size();
  if (n_mlm > 0) {
    const int V = cfg.vocab_size;
    out.mlm_logits.resize(n_mlm * static_cast<size_t>(V));
    std::vector<S> act(static_cast<size_t>(E));
    std::vector<S> normed(static_cast<size_t>(E));
    std::vector<S> xhat(static_cast<size_t>(E));
    S rstd;
    for (size_t i = 0; i < n_mlm; ++i) {
      const S* hrow = x.data() + static_cast<size_t>(f.mlm_positions[i]) * H;
      nn::affine(hrow, p.ptr(p.refs.mtw), p.ptr(p.refs.mtb), act.data(), 1, H, E);
      for (int j = 0; j < E; ++j) act[static_cast<size_t>(j)] =
          static_cast<S>(nn::gelu(static_cast<double>(act[static_cast<size_t>(j)])));
      nn::layernorm_forward(act.data(), p.ptr(p.refs.mlns), p.ptr(p.refs.mlnb), xhat.data(), &rstd,
                            normed.data(), 1, E);
      const S* tok = p.ptr(p.refs.tok);
      const S* ob = p.ptr(p.refs.mob);
      S* lrow = out.mlm_logits.data() + i * static_cast<size_t>(V);
      for (int v = 0; v < V; ++v) {
        const S* te = tok + static_cast<size_t>(v) * E;
        S acc = ob[v];
        for (int j = 0; j < E; ++j) acc += normed[static_cast<size_t>(j)] * te[j];
        lrow[v] = acc;
      }
    }
  }

  out.nsp_logits.resize(2);
  nn::affine(out.pooled.data(), p.ptr(p.refs.nspw), p.ptr(p.refs.nspb), out.nsp_logits.data(), 1,
             H, 2);
  return out;
}

// Backpropagates d_hidden (T x H) and d_pooled (H) through the backbone,
// accumulating into grads. Shared-layer configs accumulate every reuse into
// the single stored block.
template <typename S>
void backbone_backward(const ParameterSet<S>& p, const Features& f, const Trace<S>& tr,
                       std::vector<S>& d_hidden, const std::vector<S>& d_pooled,
                       ParameterSet<S>& grads) {
  const ModelConfig& cfg = p.config;
  const ResolvedIds rid = resolve_ids(cfg, f);
  const int T = tr.T;
  const int E = cfg.embedding_size, H = cfg.hidden_size, A = cfg.heads, F = cfg.ff_size;
  const int D = H / A;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(D));
  const double pdrop = cfg.dropout;

  // Pooler backward feeds the [CLS] row of d_hidden.
  if (!d_pooled.empty()) {
    std::vector<S> dpre(static_cast<size_t>(H));
    for (int j = 0; j < H; ++j) {
      const double th = tr.pooled[static_cast<size_t>(j)];
      dpre[static_cast<size_t>(j)] = static_cast<S>(d_pooled[static_cast<size_t>(j)] * (1.0 - th * th));
    }
    const LayerTrace<S>& last = tr.layers.back();
    nn::affine_backward_params(last.out.data(), dpre.data(), grads.ptr(grads.refs.poolw),
                               grads.ptr(grads.refs.poolb), 1, H, H);
    nn::affine_backward_input(dpre.data(), p.ptr(p.refs.poolw), d_hidden.data(), 1, H, H);
  }

  std::vector<S> dx = std::move(d_hidden);
  for (int l = cfg.layers - 1; l >= 0; --l) {
    const size_t bi = static_cast<size_t>(cfg.share_layers ? 0 : l);
    const BlockRefs& b = p.refs.blocks[bi];
    const BlockRefs& gb = grads.refs.blocks[bi];
    const LayerTrace<S>& lt = tr.layers[static_cast<size_t>(l)];

    // ln2 -> res2
    std::vector<S> d_res2(static_cast<size_t>(T) * H, S(0));
    nn::layernorm_backward(dx.data(), lt.ln2_xhat.data(), lt.ln2_rstd.data(), p.ptr(b.ln2s),
                           d_res2.data(), grads.ptr(gb.ln2s), grads.ptr(gb.ln2b), T, H);

    // res2 = ln1_out + dropout(ffn_out)
    std::vector<S> d_ln1out = d_res2;
    std::vector<S> d_ffn_out = d_res2;
    if (tr.training) {
      nn::dropout_backward(d_ffn_out.data(), lt.drop_ffn_out.data(), d_ffn_out.size(), pdrop);
    }
    std::vector<S> d_act(static_cast<size_t>(T) * F, S(0));
    nn::affine_backward_params(lt.ffn_act.data(), d_ffn_out.data(), grads.ptr(gb.fw2),
                               grads.ptr(gb.fb2), T, F, H);
    nn::affine_backward_input(d_ffn_out.data(), p.ptr(b.fw2), d_act.data(), T, F, H);
    for (size_t i = 0; i < d_act.size(); ++i) {
      d_act[i] = static_cast<S>(d_act[i] * nn::gelu_grad(static_cast<double>(lt.ffn_pre[i])));
    }
    nn::affine_backward_params(lt.ln1_out.data(), d_act.data(), grads.ptr(gb.fw1),
                               grads.ptr(gb.fb1), T, H, F);
    nn::affine_backward_input(d_act.data(), p.ptr(b.fw1), d_ln1out.data(), T, H, F);

    // ln1 -> res1
    std::vector<S> d_res1(static_cast<size_t>(T) * H, S(0));
    nn::layernorm_backward(d_ln1out.data(), lt.ln1_xhat.data(), lt.ln1_rstd.data(), p.ptr(b.ln1s),
                           d_res1.data(), grads.ptr(gb.ln1s), grads.ptr(gb.ln1b), T, H);

    // res1 = in + dropout(attn_proj(ctx))
    std::vector<S> d_in = d_res1;
    std::vector<S> d_attn_proj = d_res1;
    if (tr.training) {
      nn::dropout_backward(d_attn_proj.data(), lt.drop_attn_out.data(), d_attn_proj.size(), pdrop);
    }
    std::vector<S> d_ctx(static_cast<size_t>(T) * H, S(0));
    nn::affine_backward_params(lt.ctx.data(), d_attn_proj.data(), grads.ptr(gb.ow),
                               grads.ptr(gb.ob), T, H, H);
    nn::affine_backward_input(d_attn_proj.data(), p.ptr(b.ow), d_ctx.data(), T, H, H);

    std::vector<S> d_q(static_cast<size_t>(T) * H, S(0));
    std::vector<S> d_k(static_cast<size_t>(T) * H, S(0));
    std::vector<S> d_v(static_cast<size_t>(T) * H, S(0));
    std::vector<S> d_probs(static_cast<size_t>(T) * T);
    for (int a = 0; a < A; ++a) {
      const int off = a * D;
      // d_probs_dropped and dV
      for (int t = 0; t < T; ++t) {
        const S* dcr = d_ctx.data() + static_cast<size_t>(t) * H + off;
        const S* prow = lt.probs_dropped.data() + (static_cast<size_t>(a) * T + t) * T;
        S* dp = d_probs.data() + static_cast<size_t>(t) * T;
        for (int s = 0; s < T; ++s) {
          const S* vr = lt.v.data() + static_cast<size_t>(s) * H + off;
          double acc = 0.0;
          for (int d = 0; d < D; ++d) acc += static_cast<double>(dcr[d]) * vr[d];
          dp[s] = static_cast<S>(acc);
          const S w = prow[s];
          if (w != S(0)) {
            S* dvr = d_v.data() + static_cast<size_t>(s) * H + off;
            for (int d = 0; d < D; ++d) dvr[d] += w * dcr[d];
          }
        }
      }
      if (tr.training) {
        const uint8_t* mask = lt.drop_attn.data() + static_cast<size_t>(a) * T * T;
        nn::dropout_backward(d_probs.data(), mask, static_cast<size_t>(T) * T, pdrop);
      }
      // softmax backward, then dQ/dK
      for (int t = 0; t < T; ++t) {
        const S* prow = lt.probs.data() + (static_cast<size_t>(a) * T + t) * T;
        S* dp = d_probs.data() + static_cast<size_t>(t) * T;
        double dot = 0.0;
        for (int s = 0; s < T; ++s) dot += static_cast<double>(dp[s]) * prow[s];
        for (int s = 0; s < T; ++s) {
          dp[s] = static_cast<S>(prow[s] * (static_cast<double>(dp[s]) - dot) * inv_sqrt_d);
        }
        const S* qr = lt.q.data() + static_cast<size_t>(t) * H + off;
        S* dqr = d_q.data() + static_cast<size_t>(t) * H + off;
        for (int s = 0; s < T; ++s) {
          const S g = dp[s];
          if (g == S(0)) continue;
          const S* kr = lt.k.data() + static_cast<size_t>(s) * H + off;
          S* dkr = d_k.data() + static_cast<size_t>(s) * H + off;
          for (int d = 0; d < D; ++d) {
            dqr[d] += g * kr[d];
            dkr[d] += g * qr[d];
          }
        }
      }
    }

    nn::affine_backward_params(lt.in.data(), d_q.data(), grads.ptr(gb.qw), grads.ptr(gb.qb), T, H, H);
    nn::affine_backward_input(d_q.data(), p.ptr(b.qw), d_in.data(), T, H, H);
    nn::affine_backward_params(lt.in.data(), d_k.data(), grads.ptr(gb.kw), grads.ptr(gb.kb), T, H, H);
    nn::affine_backward_input(d_k.data(), p.ptr(b.kw), d_in.data(), T, H, H);
    nn::affine_backward_params(lt.in.data(), d_v.data(), grads.ptr(gb.vw), grads.ptr(gb.vb), T, H, H);
    nn::affine_backward_input(d_v.data(), p.ptr(b.vw), d_in.data(), T, H, H);

    dx = std::move(d_in);
  }

  // Projection / embedding backward.
  std::vector<S> d_emb_out;
  if (cfg.factorized()) {
    d_emb_out.assign(static_cast<size_t>(T) * E, S(0));
    nn::affine_backward_params(tr.emb_out.data(), dx.data(), grads.ptr(grads.refs.projw),
                               grads.ptr(grads.refs.projb), T, E, H);
    nn::affine_backward_input(dx.data(), p.ptr(p.refs.projw), d_emb_out.data(), T, E, H);
  } else {
    d_emb_out = std::move(dx);
  }
  if (tr.training) {
    nn::dropout_backward(d_emb_out.data(), tr.drop_emb.data(), d_emb_out.size(), pdrop);
  }
  std::vector<S> d_emb(static_cast<size_t>(T) * E, S(0));
  nn::layernorm_backward(d_emb_out.data(), tr.emb_xhat.data(), tr.emb_rstd.data(),
                         p.ptr(p.refs.elns), d_emb.data(), grads.ptr(grads.refs.elns),
                         grads.ptr(grads.refs.elnb), T, E);

  S* d_tok = grads.ptr(grads.refs.tok);
  S* d_pos = grads.ptr(grads.refs.pos);
  S* d_seg = grads.ptr(grads.refs.seg);
  for (int t = 0; t < T; ++t) {
    const S* row = d_emb.data() + static_cast<size_t>(t) * E;
    S* td = d_tok + static_cast<size_t>(rid.ids[static_cast<size_t>(t)]) * E;
    S* pd = d_pos + static_cast<size_t>(rid.poss[static_cast<size_t>(t)]) * E;
    S* sd = d_seg + static_cast<size_t>(rid.segs[static_cast<size_t>(t)]) * E;
    for (int j = 0; j < E; ++j) {
      td[j] += row[j];
      pd[j] += row[j];
      sd[j] += row[j];
    }
  }
}

// MLM + NSP loss gradients into d_hidden/d_pooled and the head parameter
// slots; returns the loss breakdown.
template <typename S>
LossBreakdown pretrain_head_backward(const ParameterSet<S>& p, const Features& f,
                                     const Trace<S>& tr, const ForwardResult<S>& out,
                                     std::vector<S>& d_hidden, std::vector<S>& d_pooled,
                                     ParameterSet<S>& grads) {
  const ModelConfig& cfg = p.config;
  const int E = cfg.embedding_size, H = cfg.hidden_size, V = cfg.vocab_size;
  LossBreakdown loss;

  const size_t n_mlm = f.mlm_positions.size();
  loss.mlm_count = static_cast<int64_t>(n_mlm);
  if (n_mlm > 0) {
    std::vector<S> dlogits(static_cast<size_t>(V));
    std::vector<S> act(static_cast<size_t>(E)), xhat(static_cast<size_t>(E)),
        normed(static_cast<size_t>(E));
    std::vector<S> d_normed(static_cast<size_t>(E)), d_act(static_cast<size_t>(E)),
        d_pre(static_cast<size_t>(E));
    S rstd;
    double total = 0.0;
    for (size_t i = 0; i < n_mlm; ++i) {
      const int pos = f.mlm_positions[i];
      const int target = f.mlm_labels[i];
      if (target < 0 || target >= V) fail_data("encoder: mlm label out of range");
      const S* lrow = out.mlm_logits.data() + i * static_cast<size_t>(V);
      total += nn::cross_entropy(lrow, V, target, dlogits.data(), 1.0 / static_cast<double>(n_mlm));

      // Recompute the per-position trace of the MLM transform.
      const S* hrow = out.hidden.data() + static_cast<size_t>(pos) * H;
      std::vector<S> pre(static_cast<size_t>(E));
      nn::affine(hrow, p.ptr(p.refs.mtw), p.ptr(p.refs.mtb), pre.data(), 1, H, E);
      for (int j = 0; j < E; ++j) act[static_cast<size_t>(j)] =
          static_cast<S>(nn::gelu(static_cast<double>(pre[static_cast<size_t>(j)])));
      nn::layernorm_forward(act.data(), p.ptr(p.refs.mlns), p.ptr(p.refs.mlnb), xhat.data(), &rstd,
                            normed.data(), 1, E);

      // Tied decode backward: logits = normed . token_emb^T + bias.
      const S* tok = p.ptr(p.refs.tok);
      S* d_tok = grads.ptr(grads.refs.tok);
      S* d_ob = grads.ptr(grads.refs.mob);
      std::fill(d_normed.begin(), d_normed.end(), S(0));
      for (int v = 0; v < V; ++v) {
        const S g = dlogits[static_cast<size_t>(v)];
        d_ob[v] += g;
        if (g == S(0)) continue;
        const S* te = tok + static_cast<size_t>(v) * E;
        S* td = d_tok + static_cast<size_t>(v) * E;
        for (int j = 0; j < E; ++j) {
          d_normed[static_cast<size_t>(j)] += g * te[j];
          td[j] += g * normed[static_cast<size_t>(j)];
        }
      }
      std::fill(d_act.begin(), d_act.end(), S(0));
      nn::layernorm_backward(d_normed.data(), xhat.data(), &rstd, p.ptr(p.refs.mlns), d_act.data(),
                             grads.ptr(grads.refs.mlns), grads.ptr(grads.refs.mlnb), 1, E);
      for (int j = 0; j < E; ++j) {
        d_pre[static_cast<size_t>(j)] = static_cast<S>(
            d_act[static_cast<size_t>(j)] *
            nn::gelu_grad(static_cast<double>(pre[static_cast<size_t>(j)])));
      }
      nn::affine_backward_params(hrow, d_pre.data(), grads.ptr(grads.refs.mtw),
                                 grads.ptr(grads.refs.mtb), 1, H, E);
      nn::affine_backward_input(d_pre.data(), p.ptr(p.refs.mtw),
                                d_hidden.data() + static_cast<size_t>(pos) * H, 1, H, E);
    }
    loss.mlm = total / static_cast<double>(n_mlm);
  }

  if (f.nsp_label >= 0) {
    if (f.nsp_label > 1) fail_data("encoder: nsp label must be 0 or 1");
    std::vector<S> dlogits(2);
    loss.nsp = nn::cross_entropy(out.nsp_logits.data(), 2, f.nsp_label, dlogits.data(), 1.0);
    nn::affine_backward_params(tr.pooled.data(), dlogits.data(), grads.ptr(grads.refs.nspw),
                               grads.ptr(grads.refs.nspb), 1, H, 2);
    nn::affine_backward_input(dlogits.data(), p.ptr(p.refs.nspw), d_pooled.data(), 1, H, 2);
  }
  return loss;
}

}  // namespace detail

// Standard post-layer-norm transformer encoder forward pass.
template <typename S>
ForwardResult<S> forward(const ParameterSet<S>& params, const Features& features, RunMode mode,
                         uint64_t dropout_seed = 0) {
  return detail::run_forward(params, features, mode, dropout_seed,
                             static_cast<detail::Trace<S>*>(nullptr));
}

// Mean token-level cross-entropy over the MLM positions plus next-sentence
// cross-entropy; callable on any ForwardResult.
template <typename S>
LossBreakdown pretrain_loss(const ForwardResult<S>& out, const std::vector<int32_t>& mlm_labels,
                            int nsp_label) {
  LossBreakdown loss;
  const size_t n = mlm_labels.size();
  loss.mlm_count = static_cast<int64_t>(n);
  if (n > 0) {
    const int v = static_cast<int>(out.mlm_logits.size() / n);
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
      total += nn::cross_entropy<S>(out.mlm_logits.data() + i * static_cast<size_t>(v), v,
                                    mlm_labels[i], static_cast<S*>(nullptr), 0.0);
    }
    loss.mlm = total / static_cast<double>(n);
  }
  if (nsp_label >= 0) {
    loss.nsp = nn::cross_entropy<S>(out.nsp_logits.data(), 2, nsp_label,
                                    static_cast<S*>(nullptr), 0.0);
  }
  return loss;
}

// Analytic gradients of pretrain_loss with respect to every parameter,
// accumulated into grads. Returns the loss breakdown of the pass.
template <typename S>
LossBreakdown backward(const ParameterSet<S>& params, const Features& features,
                       ParameterSet<S>& grads, RunMode mode = RunMode::Eval,
                       uint64_t dropout_seed = 0) {
  detail::Trace<S> trace;
  ForwardResult<S> out = detail::run_forward(params, features, mode, dropout_seed, &trace);
  const int H = params.config.hidden_size;
  std::vector<S> d_hidden(out.hidden.size(), S(0));
  std::vector<S> d_pooled(static_cast<size_t>(H), S(0));
  LossBreakdown loss =
      detail::pretrain_head_backward(params, features, trace, out, d_hidden, d_pooled, grads);
  detail::backbone_backward(params, features, trace, d_hidden, d_pooled, grads);
  for (size_t i = 0; i < grads.arrays.size(); ++i) {
    if (!nn::all_finite(grads.ptr(i), grads.arrays[i].size)) {
      fail_data("non-finite gradient in parameter " + grads.arrays[i].name);
    }
  }
  return loss;
}

}  // namespace minibert
