#pragma once

#include <algorithm>
#include <utility>
#include <vector>

#include "vsr/reasoner.hpp"

// Task heads. Each one is a composition of layer norms and single linear maps
// over the reasoner's final output; no attention or temporal operators live
// here.

namespace vsr {

struct HeadsConfig {
  int categories = 10;      // K
  int horizons = 4;         // N_f
  int proposals = 10;       // N_m
  int vocab_size = 16;      // text/caption vocabulary incl. reserved ids
  int max_caption_len = 8;
  int anticipation_gap = 1;             // units between a token and horizon 1
  bool retrieval_from_last_visual = false;  // read summary from last visual token

  void validate() const {
    if (categories < 2) throw config_error("heads: categories must be >= 2");
    if (horizons < 1) throw config_error("heads: horizons must be >= 1");
    if (proposals < 1) throw config_error("heads: proposals must be >= 1");
    if (vocab_size < 4) throw config_error("heads: vocab too small for reserved ids");
    if (max_caption_len < 1) throw config_error("heads: max_caption_len must be >= 1");
    if (anticipation_gap < 1) throw config_error("heads: anticipation_gap must be >= 1");
  }
};

// Current-category and next-category classifiers over the same hidden state.
template <typename T>
struct OnlineHeadT {
  ParameterT<T> w_cur, b_cur;    // d x K
  ParameterT<T> w_next, b_next;  // d x K
};

// One shared classifier behind per-horizon normalization separators.
template <typename T>
struct FutureHeadT {
  struct Separator {
    ParameterT<T> g, b;
  };
  std::vector<Separator> separators;  // N_f
  ParameterT<T> w, b;                 // d x K
};

// Fixed set of proposals: per-proposal normalization separators feeding a
// shared class head (K real classes + no-object) and a boundary head whose
// two logits squash to (center, width) in (0,1) of the memory span.
template <typename T>
struct MemoryHeadT {
  struct Separator {
    ParameterT<T> g, b;
  };
  std::vector<Separator> separators;  // N_m
  ParameterT<T> w_cls, b_cls;         // d x (K+1)
  ParameterT<T> w_box, b_box;         // d x 2
};

template <typename T>
struct DenseHeadT {
  ParameterT<T> w_cls, b_cls;  // d x K
  ParameterT<T> w_sal, b_sal;  // d x 1
};

// Small causal generator over the caption vocabulary with tied input/output
// embeddings; a conditioning hidden state is injected as a position-0 row.
template <typename T>
struct CaptionGeneratorT {
  ReasonerWeightsT<T> gen;
  ParameterT<T> embed;  // vocab x d
};

template <typename T>
struct HeadsT {
  HeadsConfig cfg;
  OnlineHeadT<T> online;
  FutureHeadT<T> future;
  MemoryHeadT<T> memory;
  DenseHeadT<T> dense;
  CaptionGeneratorT<T> caption;
  ParameterT<T> text_embed;  // vocab x d, shared text-conditioning table
};

using Heads = HeadsT<float>;

template <typename T>
HeadsT<T> init_heads(const HeadsConfig& cfg, const ReasonerConfig& rcfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(Rng::derive(seed, 0x4ead5ull));
  const auto d = static_cast<std::size_t>(rcfg.hidden);
  const auto k = static_cast<std::size_t>(cfg.categories);
  const auto v = static_cast<std::size_t>(cfg.vocab_size);
  HeadsT<T> h;
  h.cfg = cfg;
  h.online.w_cur = detail::normal_param<T>({d, k}, rng, 0.02);
  h.online.b_cur = detail::const_param<T>({k}, T(0));
  h.online.w_next = detail::normal_param<T>({d, k}, rng, 0.02);
  h.online.b_next = detail::const_param<T>({k}, T(0));
  h.future.separators.resize(cfg.horizons);
  for (auto& s : h.future.separators) {
    s.g = detail::const_param<T>({d}, T(1));
    s.b = detail::const_param<T>({d}, T(0));
  }
  h.future.w = detail::normal_param<T>({d, k}, rng, 0.02);
  h.future.b = detail::const_param<T>({k}, T(0));
  h.memory.separators.resize(cfg.proposals);
  for (auto& s : h.memory.separators) {
    s.g = detail::const_param<T>({d}, T(1));
    s.b = detail::const_param<T>({d}, T(0));
  }
  h.memory.w_cls = detail::normal_param<T>({d, k + 1}, rng, 0.02);
  h.memory.b_cls = detail::const_param<T>({k + 1}, T(0));
  h.memory.w_box = detail::normal_param<T>({d, std::size_t(2)}, rng, 0.02);
  h.memory.b_box = detail::const_param<T>({std::size_t(2)}, T(0));
  h.dense.w_cls = detail::normal_param<T>({d, k}, rng, 0.02);
  h.dense.b_cls = detail::const_param<T>({k}, T(0));
  h.dense.w_sal = detail::normal_param<T>({d, std::size_t(1)}, rng, 0.02);
  h.dense.b_sal = detail::const_param<T>({std::size_t(1)}, T(0));
  ReasonerConfig gen_cfg;
  gen_cfg.layers = 2;
  gen_cfg.heads = rcfg.heads;
  gen_cfg.hidden = rcfg.hidden;
  gen_cfg.ffn = 2 * rcfg.hidden;
  gen_cfg.max_positions = cfg.max_caption_len + 1;
  gen_cfg.mode = ReasonerMode::causal;
  h.caption.gen = init_reasoner<T>(gen_cfg, Rng::derive(seed, 0xca97ull));
  h.caption.embed = detail::normal_param<T>({v, d}, rng, 0.02);
  h.text_embed = detail::normal_param<T>({v, d}, rng, 0.02);
  return h;
}

// ---- graph-side head applications (training) ----

template <typename T>
std::pair<Var, Var> online_predict(GraphT<T>& g, Var hidden, OnlineHeadT<T>& head) {
  if (g.val(hidden).rows() == 0) throw argument_error("online_predict: empty sequence");
  Var cur = ag::linear(g, hidden, g.param(head.w_cur), g.param(head.b_cur));
  Var next = ag::linear(g, hidden, g.param(head.w_next), g.param(head.b_next));
  return {cur, next};
}

// One [t x K] logits block per horizon.
template <typename T>
std::vector<Var> anticipate(GraphT<T>& g, Var hidden, FutureHeadT<T>& head) {
  std::vector<Var> out;
  Var w = g.param(head.w);
  Var b = g.param(head.b);
  const T eps = static_cast<T>(kLayerNormEps);
  for (auto& sep : head.separators) {
    Var a = ag::layer_norm(g, hidden, g.param(sep.g), g.param(sep.b), eps);
    out.push_back(ag::linear(g, a, w, b));
  }
  return out;
}

template <typename T>
struct ProposalVars {
  std::vector<Var> logits;   // N_m of [1 x (K+1)]
  std::vector<Var> box_raw;  // N_m of [1 x 2], pre-sigmoid
};

template <typename T>
ProposalVars<T> retrieve_memory(GraphT<T>& g, Var summary_row, MemoryHeadT<T>& head) {
  ProposalVars<T> out;
  Var wc = g.param(head.w_cls);
  Var bc = g.param(head.b_cls);
  Var wb = g.param(head.w_box);
  Var bb = g.param(head.b_box);
  const T eps = static_cast<T>(kLayerNormEps);
  for (auto& sep : head.separators) {
    Var m = ag::layer_norm(g, summary_row, g.param(sep.g), g.param(sep.b), eps);
    out.logits.push_back(ag::linear(g, m, wc, bc));
    out.box_raw.push_back(ag::linear(g, m, wb, bb));
  }
  return out;
}

template <typename T>
std::pair<Var, Var> dense_predict(GraphT<T>& g, Var hidden, DenseHeadT<T>& head) {
  Var cls = ag::linear(g, hidden, g.param(head.w_cls), g.param(head.b_cls));
  Var sal = ag::linear(g, hidden, g.param(head.w_sal), g.param(head.b_sal));
  return {cls, sal};
}

// Teacher-forced caption loss for one conditioning row. Targets include the
// trailing end-of-text id; logits are tied to the embedding table.
template <typename T>
Var caption_loss(GraphT<T>& g, Var cond_row, CaptionGeneratorT<T>& capgen,
                 const std::vector<int>& caption_ids) {
  if (caption_ids.empty()) throw argument_error("caption_loss: empty caption");
  Var table = g.param(capgen.embed);
  const std::size_t m = caption_ids.size();
  const std::size_t max_in =
      std::min(m, static_cast<std::size_t>(capgen.gen.cfg.max_positions) - 1);
  std::vector<Var> rows = {cond_row};
  if (max_in > 1) {
    std::vector<int> input_ids(caption_ids.begin(), caption_ids.begin() + (max_in - 1));
    rows.push_back(ag::embedding(g, table, input_ids));
  }
  Var inputs = ag::concat_rows(g, rows);
  Var hidden = forward_full(g, inputs, capgen.gen, ReasonerMode::causal);
  Var logits = ag::matmul_nt(g, hidden, table);
  std::vector<int> targets(caption_ids.begin(), caption_ids.begin() + max_in);
  return ag::ce_rows(g, logits, targets);
}

// ---- plain-kernel head applications (evaluation / streaming) ----

template <typename T>
std::pair<std::vector<T>, std::vector<T>> online_logits(const T* c, const OnlineHeadT<T>& head) {
  const std::size_t k = head.w_cur.value.cols();
  std::vector<T> cur(k), next(k);
  kern::linear_row(c, head.w_cur.value, &head.b_cur.value, cur.data());
  kern::linear_row(c, head.w_next.value, &head.b_next.value, next.data());
  return {cur, next};
}

template <typename T>
std::vector<std::vector<T>> future_logits(const T* c, const FutureHeadT<T>& head) {
  const std::size_t d = head.w.value.rows();
  const std::size_t k = head.w.value.cols();
  std::vector<std::vector<T>> out;
  std::vector<T> normed(d);
  for (const auto& sep : head.separators) {
    kern::layer_norm_row(c, d, sep.g.value.data.data(), sep.b.value.data.data(),
                         static_cast<T>(kLayerNormEps), normed.data());
    std::vector<T> logits(k);
    kern::linear_row(normed.data(), head.w.value, &head.b.value, logits.data());
    out.push_back(std::move(logits));
  }
  return out;
}

template <typename T>
struct Proposal {
  std::vector<T> class_probs;  // K+1, last is no-object
  T center, width;             // in (0,1) of the memory span
};

template <typename T>
std::vector<Proposal<T>> memory_proposals(const T* c, const MemoryHeadT<T>& head) {
  const std::size_t d = head.w_cls.value.rows();
  std::vector<Proposal<T>> out;
  std::vector<T> normed(d);
  for (const auto& sep : head.separators) {
    kern::layer_norm_row(c, d, sep.g.value.data.data(), sep.b.value.data.data(),
                         static_cast<T>(kLayerNormEps), normed.data());
    Proposal<T> p;
    p.class_probs.resize(head.w_cls.value.cols());
    kern::linear_row(normed.data(), head.w_cls.value, &head.b_cls.value, p.class_probs.data());
    kern::softmax_inplace(p.class_probs.data(), p.class_probs.size());
    T box[2];
    kern::linear_row(normed.data(), head.w_box.value, &head.b_box.value, box);
    p.center = kern::sigmoid(box[0]);
    p.width = kern::sigmoid(box[1]);
    out.push_back(std::move(p));
  }
  return out;
}

template <typename T>
std::pair<std::vector<T>, T> dense_logits(const T* c, const DenseHeadT<T>& head) {
  std::vector<T> cls(head.w_cls.value.cols());
  kern::linear_row(c, head.w_cls.value, &head.b_cls.value, cls.data());
  T sal;
  kern::linear_row(c, head.w_sal.value, &head.b_sal.value, &sal);
  return {cls, sal};
}

// Appends condition text rows after the visual memory.
inline TranslatedSequence condition_on_text(const TranslatedSequence& memory,
                                            const Tensor& text_rows, int max_positions) {
  if (memory.size() + text_rows.rows() > static_cast<std::size_t>(max_positions))
    throw capacity_error("condition_on_text exceeds max positions");
  if (text_rows.rows() == 0) return memory;
  if (text_rows.cols() != memory.tokens.cols()) throw shape_error("condition_on_text width");
  TranslatedSequence out = memory;
  out.tokens.data.insert(out.tokens.data.end(), text_rows.data.begin(), text_rows.data.end());
  out.tokens.shape[0] += text_rows.rows();
  out.tags.insert(out.tags.end(), text_rows.rows(), TokenTag::text);
  return out;
}

// Greedy decode conditioned on one hidden state; argmax ties resolve to the
// lowest token id, generation halts at end-of-text or max_len.
template <typename T>
std::vector<int> caption_greedy(const T* cond_row, CaptionGeneratorT<T>& capgen, int max_len,
                                int end_of_text_id) {
  if (max_len < 1) throw argument_error("caption: max_len must be >= 1");
  SessionStateT<T> st = init_session<T>(capgen.gen.cfg);
  std::vector<T> h = step(st, cond_row, capgen.gen);
  std::vector<int> out;
  const std::size_t v = capgen.embed.value.rows();
  std::vector<T> logits(v);
  while (static_cast<int>(out.size()) < max_len) {
    T best = T(0);
    int best_id = 0;
    for (std::size_t j = 0; j < v; ++j) {
      const T* row = capgen.embed.value.row_ptr(j);
      T acc = T(0);
      for (std::size_t c = 0; c < capgen.embed.value.cols(); ++c) acc += h[c] * row[c];
      logits[j] = acc;
      if (j == 0 || acc > best) {
        best = acc;
        best_id = static_cast<int>(j);
      }
    }
    out.push_back(best_id);
    if (best_id == end_of_text_id) break;
    if (static_cast<int>(out.size()) >= max_len) break;
    if (st.position >= static_cast<std::size_t>(capgen.gen.cfg.max_positions)) break;
    h = step(st, capgen.embed.value.row_ptr(static_cast<std::size_t>(best_id)), capgen.gen);
  }
  return out;
}

}  // namespace vsr
