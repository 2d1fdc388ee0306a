#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vsr/graph.hpp"
#include "vsr/rng.hpp"
#include "vsr/translator.hpp"

namespace vsr {

constexpr double kLayerNormEps = 1e-5;

enum class ReasonerMode { causal, bidirectional };

struct ReasonerConfig {
  int layers = 2;
  int heads = 4;
  int hidden = 64;
  int ffn = 256;
  int max_positions = 128;
  ReasonerMode mode = ReasonerMode::causal;
  double dropout = 0.0;  // training only

  void validate() const {
    if (layers < 1 || heads < 1 || hidden < 1 || ffn < 1 || max_positions < 1)
      throw config_error("reasoner dims must be positive");
    if (hidden % heads != 0) throw config_error("hidden must be divisible by heads");
    if (dropout < 0.0 || dropout >= 1.0) throw config_error("dropout out of [0, 1)");
  }
};

template <typename T>
struct AttentionBlockT {
  ParameterT<T> wq, bq, wk, bk, wv, bv, wo, bo;
};

template <typename T>
struct ReasonerLayerT {
  ParameterT<T> ln1_g, ln1_b;
  AttentionBlockT<T> attn;
  ParameterT<T> ln2_g, ln2_b;
  ParameterT<T> w1, b1, w2, b2;  // feed-forward
};

// Pre-norm decoder stack with learned absolute positions and a learnable
// summary query token (present whether or not the retrieval head uses it).
template <typename T>
struct ReasonerWeightsT {
  ReasonerConfig cfg;
  std::vector<ReasonerLayerT<T>> layers;
  ParameterT<T> lnf_g, lnf_b;
  ParameterT<T> pos;          // max_positions x hidden
  ParameterT<T> query_token;  // 1 x hidden
};

using ReasonerWeights = ReasonerWeightsT<float>;

namespace detail {
template <typename T>
ParameterT<T> normal_param(std::vector<std::size_t> shape, Rng& rng, double stddev) {
  ParameterT<T> p{TensorT<T>(std::move(shape))};
  for (T& v : p.value.data) v = static_cast<T>(rng.normal(0.0, stddev));
  return p;
}
template <typename T>
ParameterT<T> const_param(std::vector<std::size_t> shape, T fill) {
  ParameterT<T> p{TensorT<T>(std::move(shape))};
  p.value.fill(fill);
  return p;
}
}  // namespace detail

// Weights ~ normal(0, 0.02), biases 0, norm gains 1; deterministic in seed.
template <typename T>
ReasonerWeightsT<T> init_reasoner(const ReasonerConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(Rng::derive(seed, 0x5e450ull));
  const auto d = static_cast<std::size_t>(cfg.hidden);
  const auto f = static_cast<std::size_t>(cfg.ffn);
  ReasonerWeightsT<T> w;
  w.cfg = cfg;
  w.layers.resize(cfg.layers);
  for (auto& layer : w.layers) {
    layer.ln1_g = detail::const_param<T>({d}, T(1));
    layer.ln1_b = detail::const_param<T>({d}, T(0));
    layer.attn.wq = detail::normal_param<T>({d, d}, rng, 0.02);
    layer.attn.bq = detail::const_param<T>({d}, T(0));
    layer.attn.wk = detail::normal_param<T>({d, d}, rng, 0.02);
    layer.attn.bk = detail::const_param<T>({d}, T(0));
    layer.attn.wv = detail::normal_param<T>({d, d}, rng, 0.02);
    layer.attn.bv = detail::const_param<T>({d}, T(0));
    layer.attn.wo = detail::normal_param<T>({d, d}, rng, 0.02);
    layer.attn.bo = detail::const_param<T>({d}, T(0));
    layer.ln2_g = detail::const_param<T>({d}, T(1));
    layer.ln2_b = detail::const_param<T>({d}, T(0));
    layer.w1 = detail::normal_param<T>({d, f}, rng, 0.02);
    layer.b1 = detail::const_param<T>({f}, T(0));
    layer.w2 = detail::normal_param<T>({f, d}, rng, 0.02);
    layer.b2 = detail::const_param<T>({d}, T(0));
  }
  w.lnf_g = detail::const_param<T>({d}, T(1));
  w.lnf_b = detail::const_param<T>({d}, T(0));
  w.pos = detail::normal_param<T>({static_cast<std::size_t>(cfg.max_positions), d}, rng, 0.02);
  w.query_token = detail::normal_param<T>({std::size_t(1), d}, rng, 0.02);
  return w;
}

template <typename T>
std::size_t reasoner_param_count(const ReasonerWeightsT<T>& w) {
  std::size_t n = 0;
  for (const auto& l : w.layers) {
    n += l.ln1_g.numel() + l.ln1_b.numel() + l.ln2_g.numel() + l.ln2_b.numel();
    n += l.attn.wq.numel() + l.attn.bq.numel() + l.attn.wk.numel() + l.attn.bk.numel();
    n += l.attn.wv.numel() + l.attn.bv.numel() + l.attn.wo.numel() + l.attn.bo.numel();
    n += l.w1.numel() + l.b1.numel() + l.w2.numel() + l.b2.numel();
  }
  n += w.lnf_g.numel() + w.lnf_b.numel() + w.pos.numel() + w.query_token.numel();
  return n;
}

// Per-graph adapter handles threaded through the attention computation.
// Filled by the model assembly; empty Vars mean "not installed".
template <typename T>
struct AdapterVarsT {
  struct Layer {
    Var lora_q_a, lora_q_b, lora_v_a, lora_v_b;  // A: r x d, B: d x r
    Var prefix_k, prefix_v;                      // r x d cache rows
  };
  std::vector<Layer> layers;
  T lora_scale = T(1);
  T prefix_gate = T(0);
  std::size_t prefix_len = 0;
  bool has_lora = false;
  bool has_prefix = false;
};

namespace detail {
template <typename T>
Var apply_lora(GraphT<T>& g, Var base, Var x, Var a, Var b, T scale) {
  // base + scale * (x A^T) B^T
  Var down = ag::matmul_nt(g, x, a);
  Var up = ag::matmul_nt(g, down, b);
  return ag::add(g, base, ag::scale(g, up, scale));
}
}  // namespace detail

// Parallel (training-time) pass over a whole token sequence. Positions are
// assigned by arrival order starting at 0; prefix rows carry no position.
template <typename T>
Var forward_full(GraphT<T>& g, Var rows, ReasonerWeightsT<T>& w, ReasonerMode mode,
                 const AdapterVarsT<T>* adapters = nullptr, Rng* dropout_rng = nullptr) {
  const std::size_t t = g.val(rows).rows();
  const auto d = static_cast<std::size_t>(w.cfg.hidden);
  if (g.val(rows).cols() != d) throw shape_error("forward_full: token width");
  if (t > static_cast<std::size_t>(w.cfg.max_positions))
    throw capacity_error("sequence length " + std::to_string(t) + " exceeds max positions " +
                         std::to_string(w.cfg.max_positions));
  if (t == 0) throw argument_error("forward_full: empty sequence");
  const bool causal = mode == ReasonerMode::causal;
  const T eps = static_cast<T>(kLayerNormEps);
  const T rate = static_cast<T>(w.cfg.dropout);

  Var pos_all = g.param(w.pos);
  Var h = ag::add(g, rows, ag::slice_rows(g, pos_all, 0, t));
  for (int li = 0; li < w.cfg.layers; ++li) {
    auto& layer = w.layers[li];
    const typename AdapterVarsT<T>::Layer* ad =
        adapters && static_cast<std::size_t>(li) < adapters->layers.size() ? &adapters->layers[li]
                                                                           : nullptr;
    Var x1 = ag::layer_norm(g, h, g.param(layer.ln1_g), g.param(layer.ln1_b), eps);
    Var q = ag::linear(g, x1, g.param(layer.attn.wq), g.param(layer.attn.bq));
    Var k = ag::linear(g, x1, g.param(layer.attn.wk), g.param(layer.attn.bk));
    Var v = ag::linear(g, x1, g.param(layer.attn.wv), g.param(layer.attn.bv));
    if (adapters && adapters->has_lora && ad) {
      q = detail::apply_lora(g, q, x1, ad->lora_q_a, ad->lora_q_b, adapters->lora_scale);
      v = detail::apply_lora(g, v, x1, ad->lora_v_a, ad->lora_v_b, adapters->lora_scale);
    }
    std::size_t prefix = 0;
    T gate = T(0);
    if (adapters && adapters->has_prefix && ad) {
      prefix = adapters->prefix_len;
      gate = adapters->prefix_gate;
      k = ag::concat_rows(g, {ad->prefix_k, k});
      v = ag::concat_rows(g, {ad->prefix_v, v});
    }
    Var att = ag::attention(g, q, k, v, w.cfg.heads, prefix, causal, gate);
    att = ag::linear(g, att, g.param(layer.attn.wo), g.param(layer.attn.bo));
    if (dropout_rng) att = ag::dropout(g, att, rate, *dropout_rng);
    h = ag::add(g, h, att);
    Var x2 = ag::layer_norm(g, h, g.param(layer.ln2_g), g.param(layer.ln2_b), eps);
    Var ff = ag::linear(g, ag::gelu(g, ag::linear(g, x2, g.param(layer.w1), g.param(layer.b1))),
                        g.param(layer.w2), g.param(layer.b2));
    if (dropout_rng) ff = ag::dropout(g, ff, rate, *dropout_rng);
    h = ag::add(g, h, ff);
  }
  return ag::layer_norm(g, h, g.param(w.lnf_g), g.param(w.lnf_b), eps);
}

// ---- incremental streaming state ----

// Raw-tensor adapter view for the no-tape step path.
template <typename T>
struct StepAdaptersT {
  struct Layer {
    const TensorT<T>* lora_q_a = nullptr;
    const TensorT<T>* lora_q_b = nullptr;
    const TensorT<T>* lora_v_a = nullptr;
    const TensorT<T>* lora_v_b = nullptr;
  };
  std::vector<Layer> layers;
  T lora_scale = T(1);
  T prefix_gate = T(0);
  bool has_lora = false;
};

using StepAdapters = StepAdaptersT<float>;

// Cached keys/values for every seen position plus the next position index.
template <typename T>
struct SessionStateT {
  ReasonerConfig cfg;
  struct LayerCache {
    TensorT<T> k, v;  // (prefix_len + position) x hidden
  };
  std::vector<LayerCache> layers;
  std::size_t prefix_len = 0;
  std::size_t position = 0;     // real tokens in cache
  std::size_t n_protected = 0;  // leading pushed rows never evicted (prompt)
  TensorT<T> seen;              // every pushed input row, for eviction rebuild
  std::uint64_t attn_macs = 0;  // cumulative attention multiply-accumulates
  std::uint64_t last_step_macs = 0;

  std::size_t cache_rows() const { return prefix_len + position; }
};

using SessionState = SessionStateT<float>;

template <typename T>
SessionStateT<T> init_session(const ReasonerConfig& cfg) {
  SessionStateT<T> s;
  s.cfg = cfg;
  s.layers.resize(cfg.layers);
  const auto d = static_cast<std::size_t>(cfg.hidden);
  for (auto& l : s.layers) {
    l.k = TensorT<T>({std::size_t(0), d});
    l.v = TensorT<T>({std::size_t(0), d});
  }
  s.seen = TensorT<T>({std::size_t(0), d});
  return s;
}

namespace detail {
template <typename T>
void append_cache_row(TensorT<T>& cache, const std::vector<T>& row) {
  cache.data.insert(cache.data.end(), row.begin(), row.end());
  cache.shape[0] += 1;
}

template <typename T>
void lora_row(const T* x, const TensorT<T>& a, const TensorT<T>& b, T scale, std::size_t d,
              T* out) {
  // out += scale * (x A^T) B^T, single row
  const std::size_t r = a.rows();
  std::vector<T> down(r, T(0));
  for (std::size_t ri = 0; ri < r; ++ri) {
    const T* arow = a.row_ptr(ri);
    T acc = T(0);
    for (std::size_t c = 0; c < d; ++c) acc += x[c] * arow[c];
    down[ri] = acc;
  }
  for (std::size_t c = 0; c < d; ++c) {
    const T* brow = b.row_ptr(c);
    T acc = T(0);
    for (std::size_t ri = 0; ri < r; ++ri) acc += down[ri] * brow[ri];
    out[c] += scale * acc;
  }
}
}  // namespace detail

// One incremental token: computes its hidden state from cached context and
// appends its keys/values. Equals the last row of forward_full over the same
// prefix. Causal mode only.
template <typename T>
std::vector<T> step(SessionStateT<T>& state, const T* token, ReasonerWeightsT<T>& w,
                    const StepAdaptersT<T>* adapters = nullptr) {
  if (w.cfg.mode == ReasonerMode::bidirectional)
    throw contract_error("step requires causal mode");
  if (state.position >= static_cast<std::size_t>(state.cfg.max_positions))
    throw capacity_error("session at max positions " + std::to_string(state.cfg.max_positions));
  const auto d = static_cast<std::size_t>(w.cfg.hidden);
  const auto f = static_cast<std::size_t>(w.cfg.ffn);
  const T eps = static_cast<T>(kLayerNormEps);

  std::vector<T> h(token, token + d);
  const T* posrow = w.pos.value.row_ptr(state.position);
  for (std::size_t c = 0; c < d; ++c) h[c] += posrow[c];

  std::vector<T> x1(d), qrow(d), krow(d), vrow(d), ctx(d), proj(d), ff_in(f);
  std::vector<T> scratch;
  std::uint64_t macs = 0;
  for (int li = 0; li < w.cfg.layers; ++li) {
    auto& layer = w.layers[li];
    kern::layer_norm_row(h.data(), d, layer.ln1_g.value.data.data(), layer.ln1_b.value.data.data(),
                         eps, x1.data());
    kern::linear_row(x1.data(), layer.attn.wq.value, &layer.attn.bq.value, qrow.data());
    kern::linear_row(x1.data(), layer.attn.wk.value, &layer.attn.bk.value, krow.data());
    kern::linear_row(x1.data(), layer.attn.wv.value, &layer.attn.bv.value, vrow.data());
    if (adapters && adapters->has_lora && static_cast<std::size_t>(li) < adapters->layers.size()) {
      const auto& ad = adapters->layers[li];
      if (ad.lora_q_a) detail::lora_row(x1.data(), *ad.lora_q_a, *ad.lora_q_b,
                                        adapters->lora_scale, d, qrow.data());
      if (ad.lora_v_a) detail::lora_row(x1.data(), *ad.lora_v_a, *ad.lora_v_b,
                                        adapters->lora_scale, d, vrow.data());
    }
    auto& cache = state.layers[li];
    detail::append_cache_row(cache.k, krow);
    detail::append_cache_row(cache.v, vrow);
    const std::size_t span = cache.k.rows();
    kern::attend_row(qrow.data(), cache.k, cache.v, d, w.cfg.heads, state.prefix_len,
                     span - state.prefix_len, adapters ? adapters->prefix_gate : T(0), ctx.data(),
                     static_cast<T*>(nullptr), &scratch);
    macs += 2ull * span * d;
    kern::linear_row(ctx.data(), layer.attn.wo.value, &layer.attn.bo.value, proj.data());
    for (std::size_t c = 0; c < d; ++c) h[c] += proj[c];
    kern::layer_norm_row(h.data(), d, layer.ln2_g.value.data.data(), layer.ln2_b.value.data.data(),
                         eps, x1.data());
    kern::linear_row(x1.data(), layer.w1.value, &layer.b1.value, ff_in.data());
    for (std::size_t c = 0; c < f; ++c) ff_in[c] = kern::gelu(ff_in[c]);
    kern::linear_row(ff_in.data(), layer.w2.value, &layer.b2.value, proj.data());
    for (std::size_t c = 0; c < d; ++c) h[c] += proj[c];
  }
  state.position += 1;
  state.attn_macs += macs;
  state.last_step_macs = macs;
  std::vector<T> out(d);
  kern::layer_norm_row(h.data(), d, w.lnf_g.value.data.data(), w.lnf_b.value.data.data(), eps,
                       out.data());
  return out;
}

// Streaming wrapper: records the pushed row and, when the position table is
// full, evicts the oldest unprotected row and rebuilds the cache over the
// retained window (one full replay; rare and bounded by max_positions).
template <typename T>
std::vector<T> session_push(SessionStateT<T>& state, const T* token, ReasonerWeightsT<T>& w,
                            const StepAdaptersT<T>* adapters = nullptr) {
  const auto d = static_cast<std::size_t>(w.cfg.hidden);
  if (state.position >= static_cast<std::size_t>(state.cfg.max_positions)) {
    if (state.seen.rows() <= state.n_protected)
      throw capacity_error("session full of protected rows");
    // drop oldest unprotected seen row
    const std::size_t drop = state.n_protected;
    state.seen.data.erase(state.seen.data.begin() + drop * d,
                          state.seen.data.begin() + (drop + 1) * d);
    state.seen.shape[0] -= 1;
    // rebuild: keep prefix cache rows, replay the retained window
    std::vector<TensorT<T>> pk(state.layers.size()), pv(state.layers.size());
    for (std::size_t li = 0; li < state.layers.size(); ++li) {
      pk[li] = TensorT<T>({state.prefix_len, d});
      pv[li] = TensorT<T>({state.prefix_len, d});
      std::copy(state.layers[li].k.data.begin(),
                state.layers[li].k.data.begin() + state.prefix_len * d, pk[li].data.begin());
      std::copy(state.layers[li].v.data.begin(),
                state.layers[li].v.data.begin() + state.prefix_len * d, pv[li].data.begin());
    }
    TensorT<T> retained = state.seen;
    const std::size_t n_protected = state.n_protected;
    const std::uint64_t macs = state.attn_macs;
    SessionStateT<T> fresh = init_session<T>(state.cfg);
    fresh.prefix_len = state.prefix_len;
    fresh.n_protected = n_protected;
    fresh.attn_macs = macs;
    for (std::size_t li = 0; li < fresh.layers.size(); ++li) {
      fresh.layers[li].k = std::move(pk[li]);
      fresh.layers[li].v = std::move(pv[li]);
    }
    state = std::move(fresh);
    for (std::size_t r = 0; r < retained.rows(); ++r) {
      step(state, retained.row_ptr(r), w, adapters);
      detail::append_cache_row(state.seen, std::vector<T>(retained.row_ptr(r),
                                                          retained.row_ptr(r) + d));
    }
  }
  std::vector<T> out = step(state, token, w, adapters);
  detail::append_cache_row(state.seen, std::vector<T>(token, token + d));
  return out;
}

// Appends the learnable query token, tagged for the retrieval head.
inline TranslatedSequence append_summary(const TranslatedSequence& seq,
                                         const ReasonerWeights& w) {
  const std::size_t d = w.query_token.value.cols();
  if (seq.size() > 0 && seq.tokens.cols() != d) throw shape_error("append_summary width");
  if (seq.size() + 1 > static_cast<std::size_t>(w.cfg.max_positions))
    throw capacity_error("append_summary exceeds max positions");
  TranslatedSequence out = seq;
  out.tokens.data.insert(out.tokens.data.end(), w.query_token.value.data.begin(),
                         w.query_token.value.data.end());
  if (out.tokens.shape.empty()) out.tokens.shape = {std::size_t(1), d};
  else out.tokens.shape[0] += 1;
  out.tags.push_back(TokenTag::query);
  return out;
}

}  // namespace vsr
