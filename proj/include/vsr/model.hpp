#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "vsr/adapters.hpp"
#include "vsr/heads.hpp"
#include "vsr/translator.hpp"

namespace vsr {

// Everything learnable in one place: the translator, the reasoner stack, the
// task heads (caption generator and text embedding included), and whichever
// adapter bank the tuning method installs.
template <typename T>
struct ModelT {
  ReasonerConfig rcfg;
  HeadsConfig hcfg;
  TuningConfig tcfg;
  std::size_t feature_dim = 0;

  TranslatorT<T> translator;
  ReasonerWeightsT<T> reasoner;
  HeadsT<T> heads;
  LoraFactorsT<T> lora;
  PrefixBankT<T> prefix;
  PromptBankT<T> prompt;
};

using Model = ModelT<float>;

template <typename T>
void apply_partition(ModelT<T>& m, const TuningConfig& tcfg);

template <typename T>
ModelT<T> init_model(const ReasonerConfig& rcfg, const HeadsConfig& hcfg,
                     const TuningConfig& tcfg, std::size_t feature_dim, std::uint64_t seed) {
  rcfg.validate();
  hcfg.validate();
  tcfg.validate();
  ModelT<T> m;
  m.rcfg = rcfg;
  m.hcfg = hcfg;
  m.tcfg = tcfg;
  m.feature_dim = feature_dim;
  Rng trng(Rng::derive(seed, 0x7a15ull));
  m.translator = init_translator<T>(feature_dim, static_cast<std::size_t>(rcfg.hidden), trng);
  m.reasoner = init_reasoner<T>(rcfg, Rng::derive(seed, 0x5ea50ull));
  m.heads = init_heads<T>(hcfg, rcfg, Rng::derive(seed, 0x4ead0ull));
  if (tcfg.method == TuningMethod::lora)
    m.lora = init_lora<T>(rcfg, tcfg.r, Rng::derive(seed, 0x10a40ull));
  if (tcfg.method == TuningMethod::prefix)
    m.prefix = init_prefix<T>(rcfg, tcfg.r, Rng::derive(seed, 0x94e10ull));
  if (tcfg.method == TuningMethod::prompt)
    m.prompt = init_prompt<T>(rcfg, tcfg.r, m.translator);
  apply_partition(m, tcfg);
  return m;
}

// Canonical parameter walk; checkpoint blob order and optimizer state order
// both come from this.
template <typename T>
void visit_params(ModelT<T>& m,
                  const std::function<void(const std::string&, ParameterT<T>&)>& fn) {
  fn("translator.W", m.translator.weight);
  fn("translator.b", m.translator.bias);
  fn("text_embed.table", m.heads.text_embed);
  fn("reasoner.pos", m.reasoner.pos);
  fn("reasoner.query_token", m.reasoner.query_token);
  for (std::size_t i = 0; i < m.reasoner.layers.size(); ++i) {
    auto& l = m.reasoner.layers[i];
    const std::string p = "reasoner.layer" + std::to_string(i) + ".";
    fn(p + "ln1.g", l.ln1_g);
    fn(p + "ln1.b", l.ln1_b);
    fn(p + "attn.Wq", l.attn.wq);
    fn(p + "attn.bq", l.attn.bq);
    fn(p + "attn.Wk", l.attn.wk);
    fn(p + "attn.bk", l.attn.bk);
    fn(p + "attn.Wv", l.attn.wv);
    fn(p + "attn.bv", l.attn.bv);
    fn(p + "attn.Wo", l.attn.wo);
    fn(p + "attn.bo", l.attn.bo);
    fn(p + "ln2.g", l.ln2_g);
    fn(p + "ln2.b", l.ln2_b);
    fn(p + "ffn.W1", l.w1);
    fn(p + "ffn.b1", l.b1);
    fn(p + "ffn.W2", l.w2);
    fn(p + "ffn.b2", l.b2);
  }
  fn("reasoner.final_ln.g", m.reasoner.lnf_g);
  fn("reasoner.final_ln.b", m.reasoner.lnf_b);
  fn("heads.online.W_cur", m.heads.online.w_cur);
  fn("heads.online.b_cur", m.heads.online.b_cur);
  fn("heads.online.W_next", m.heads.online.w_next);
  fn("heads.online.b_next", m.heads.online.b_next);
  for (std::size_t j = 0; j < m.heads.future.separators.size(); ++j) {
    const std::string p = "heads.future.ln" + std::to_string(j) + ".";
    fn(p + "g", m.heads.future.separators[j].g);
    fn(p + "b", m.heads.future.separators[j].b);
  }
  fn("heads.future.W", m.heads.future.w);
  fn("heads.future.b", m.heads.future.b);
  for (std::size_t j = 0; j < m.heads.memory.separators.size(); ++j) {
    const std::string p = "heads.memory.ln" + std::to_string(j) + ".";
    fn(p + "g", m.heads.memory.separators[j].g);
    fn(p + "b", m.heads.memory.separators[j].b);
  }
  fn("heads.memory.W_cls", m.heads.memory.w_cls);
  fn("heads.memory.b_cls", m.heads.memory.b_cls);
  fn("heads.memory.W_box", m.heads.memory.w_box);
  fn("heads.memory.b_box", m.heads.memory.b_box);
  fn("heads.dense.W_cls", m.heads.dense.w_cls);
  fn("heads.dense.b_cls", m.heads.dense.b_cls);
  fn("heads.dense.W_sal", m.heads.dense.w_sal);
  fn("heads.dense.b_sal", m.heads.dense.b_sal);
  fn("caption.embed", m.heads.caption.embed);
  {
    auto& cg = m.heads.caption.gen;
    fn("caption.gen.pos", cg.pos);
    fn("caption.gen.query_token", cg.query_token);
    for (std::size_t i = 0; i < cg.layers.size(); ++i) {
      auto& l = cg.layers[i];
      const std::string p = "caption.gen.layer" + std::to_string(i) + ".";
      fn(p + "ln1.g", l.ln1_g);
      fn(p + "ln1.b", l.ln1_b);
      fn(p + "attn.Wq", l.attn.wq);
      fn(p + "attn.bq", l.attn.bq);
      fn(p + "attn.Wk", l.attn.wk);
      fn(p + "attn.bk", l.attn.bk);
      fn(p + "attn.Wv", l.attn.wv);
      fn(p + "attn.bv", l.attn.bv);
      fn(p + "attn.Wo", l.attn.wo);
      fn(p + "attn.bo", l.attn.bo);
      fn(p + "ln2.g", l.ln2_g);
      fn(p + "ln2.b", l.ln2_b);
      fn(p + "ffn.W1", l.w1);
      fn(p + "ffn.b1", l.b1);
      fn(p + "ffn.W2", l.w2);
      fn(p + "ffn.b2", l.b2);
    }
    fn("caption.gen.final_ln.g", cg.lnf_g);
    fn("caption.gen.final_ln.b", cg.lnf_b);
  }
  for (std::size_t i = 0; i < m.lora.layers.size(); ++i) {
    const std::string p = "adapters.lora.layer" + std::to_string(i) + ".";
    fn(p + "q.A", m.lora.layers[i].q_a);
    fn(p + "q.B", m.lora.layers[i].q_b);
    fn(p + "v.A", m.lora.layers[i].v_a);
    fn(p + "v.B", m.lora.layers[i].v_b);
  }
  for (std::size_t i = 0; i < m.prefix.layers.size(); ++i) {
    const std::string p = "adapters.prefix.layer" + std::to_string(i) + ".";
    fn(p + "k", m.prefix.layers[i].k);
    fn(p + "v", m.prefix.layers[i].v);
  }
  if (m.prompt.r > 0) fn("adapters.prompt.rows", m.prompt.rows);
}

// Trainable set: translator, heads (text embedding, caption generator and the
// summary query token included), plus whatever the tuning method opens up.
template <typename T>
void apply_partition(ModelT<T>& m, const TuningConfig& tcfg) {
  tcfg.validate();
  m.tcfg = tcfg;
  visit_params<T>(m, [](const std::string&, ParameterT<T>& p) { p.trainable = false; });

  const auto mark = [&](ParameterT<T>& p) { p.trainable = true; };
  mark(m.translator.weight);
  mark(m.translator.bias);
  mark(m.heads.text_embed);
  mark(m.reasoner.query_token);
  mark(m.heads.online.w_cur);
  mark(m.heads.online.b_cur);
  mark(m.heads.online.w_next);
  mark(m.heads.online.b_next);
  for (auto& s : m.heads.future.separators) {
    mark(s.g);
    mark(s.b);
  }
  mark(m.heads.future.w);
  mark(m.heads.future.b);
  for (auto& s : m.heads.memory.separators) {
    mark(s.g);
    mark(s.b);
  }
  mark(m.heads.memory.w_cls);
  mark(m.heads.memory.b_cls);
  mark(m.heads.memory.w_box);
  mark(m.heads.memory.b_box);
  mark(m.heads.dense.w_cls);
  mark(m.heads.dense.b_cls);
  mark(m.heads.dense.w_sal);
  mark(m.heads.dense.b_sal);
  mark(m.heads.caption.embed);
  visit_params<T>(m, [&](const std::string& name, ParameterT<T>& p) {
    if (name.rfind("caption.gen.", 0) == 0) p.trainable = true;
  });

  switch (tcfg.method) {
    case TuningMethod::basic:
      break;
    case TuningMethod::partial: {
      const auto mark_block = [&](std::size_t i) {
        auto& l = m.reasoner.layers[i];
        for (ParameterT<T>* p : {&l.ln1_g, &l.ln1_b, &l.attn.wq, &l.attn.bq, &l.attn.wk,
                                 &l.attn.bk, &l.attn.wv, &l.attn.bv, &l.attn.wo, &l.attn.bo,
                                 &l.ln2_g, &l.ln2_b, &l.w1, &l.b1, &l.w2, &l.b2})
          p->trainable = true;
      };
      switch (tcfg.partial_target) {
        case PartialTarget::bias:
          for (auto& l : m.reasoner.layers) {
            for (ParameterT<T>* p : {&l.attn.bq, &l.attn.bk, &l.attn.bv, &l.attn.bo, &l.b1,
                                     &l.b2, &l.ln1_b, &l.ln2_b})
              p->trainable = true;
          }
          m.reasoner.lnf_b.trainable = true;
          break;
        case PartialTarget::first:
          mark_block(0);
          break;
        case PartialTarget::last:
          mark_block(m.reasoner.layers.size() - 1);
          break;
        case PartialTarget::first_last:
          mark_block(0);
          mark_block(m.reasoner.layers.size() - 1);
          break;
      }
      break;
    }
    case TuningMethod::lora:
      for (auto& l : m.lora.layers) {
        mark(l.q_a);
        mark(l.q_b);
        mark(l.v_a);
        mark(l.v_b);
      }
      break;
    case TuningMethod::prompt:
      mark(m.prompt.rows);
      break;
    case TuningMethod::prefix:
      for (auto& l : m.prefix.layers) {
        mark(l.k);
        mark(l.v);
      }
      break;
  }
}

template <typename T>
std::vector<std::pair<std::string, ParameterT<T>*>> trainable_params(ModelT<T>& m) {
  std::vector<std::pair<std::string, ParameterT<T>*>> out;
  visit_params<T>(m, [&](const std::string& name, ParameterT<T>& p) {
    if (p.trainable) out.emplace_back(name, &p);
  });
  return out;
}

template <typename T>
void zero_grads(ModelT<T>& m) {
  visit_params<T>(m, [](const std::string&, ParameterT<T>& p) { p.reset_grad(); });
}

// Structure-preserving precision change (float training model -> double
// gradient-check model and back).
template <typename To, typename From>
ModelT<To> convert_model(ModelT<From>& src) {
  ModelT<To> dst = init_model<To>(src.rcfg, src.hcfg, src.tcfg, src.feature_dim, 0);
  std::vector<ParameterT<From>*> from;
  visit_params<From>(src, [&](const std::string&, ParameterT<From>& p) { from.push_back(&p); });
  std::size_t i = 0;
  visit_params<To>(dst, [&](const std::string&, ParameterT<To>& p) {
    p.value = cast_tensor<From, To>(from[i]->value);
    p.grad = TensorT<To>::zeros(p.value.shape);
    p.trainable = from[i]->trainable;
    ++i;
  });
  return dst;
}

// ---- adapter handles ----

template <typename T>
AdapterVarsT<T> make_adapter_vars(GraphT<T>& g, ModelT<T>& m) {
  AdapterVarsT<T> av;
  av.layers.resize(static_cast<std::size_t>(m.rcfg.layers));
  if (m.tcfg.method == TuningMethod::lora) {
    av.has_lora = true;
    av.lora_scale = m.lora.scale;
    for (std::size_t i = 0; i < m.lora.layers.size(); ++i) {
      av.layers[i].lora_q_a = g.param(m.lora.layers[i].q_a);
      av.layers[i].lora_q_b = g.param(m.lora.layers[i].q_b);
      av.layers[i].lora_v_a = g.param(m.lora.layers[i].v_a);
      av.layers[i].lora_v_b = g.param(m.lora.layers[i].v_b);
    }
  }
  if (m.tcfg.method == TuningMethod::prefix) {
    av.has_prefix = true;
    av.prefix_len = static_cast<std::size_t>(m.prefix.r);
    av.prefix_gate = m.prefix.gate;
    for (std::size_t i = 0; i < m.prefix.layers.size(); ++i) {
      av.layers[i].prefix_k = g.param(m.prefix.layers[i].k);
      av.layers[i].prefix_v = g.param(m.prefix.layers[i].v);
    }
  }
  return av;
}

template <typename T>
StepAdaptersT<T> make_step_adapters(const ModelT<T>& m) {
  StepAdaptersT<T> sa;
  sa.layers.resize(static_cast<std::size_t>(m.rcfg.layers));
  if (m.tcfg.method == TuningMethod::lora) {
    sa.has_lora = true;
    sa.lora_scale = m.lora.scale;
    for (std::size_t i = 0; i < m.lora.layers.size(); ++i) {
      sa.layers[i].lora_q_a = &m.lora.layers[i].q_a.value;
      sa.layers[i].lora_q_b = &m.lora.layers[i].q_b.value;
      sa.layers[i].lora_v_a = &m.lora.layers[i].v_a.value;
      sa.layers[i].lora_v_b = &m.lora.layers[i].v_b.value;
    }
  }
  if (m.tcfg.method == TuningMethod::prefix) sa.prefix_gate = m.prefix.gate;
  return sa;
}

// ---- sequence assembly ----

// Token layout of one forward pass: [prompt][pre text][visual][post text][summary].
struct AssemblyOptions {
  const std::vector<int>* pre_text_ids = nullptr;   // condition known up front
  const std::vector<int>* post_text_ids = nullptr;  // retrieval query
  bool summary = false;
};

template <typename T>
struct Assembled {
  Var hidden;  // layout.total() x d
  SequenceLayout layout;
};

// Training/eval graph pass over one stream.
template <typename T>
Assembled<T> assemble_forward(GraphT<T>& g, ModelT<T>& m, const TensorT<T>& visual_features,
                              const AssemblyOptions& opts, ReasonerMode mode,
                              Rng* dropout_rng = nullptr) {
  SequenceLayout layout;
  std::vector<Var> parts;
  Var text_table;
  if (opts.pre_text_ids || opts.post_text_ids) text_table = g.param(m.heads.text_embed);
  if (opts.pre_text_ids && !opts.pre_text_ids->empty()) {
    parts.push_back(ag::embedding(g, text_table, *opts.pre_text_ids));
    layout.n_text_pre = opts.pre_text_ids->size();
  }
  parts.push_back(translate(g, g.constant(visual_features), m.translator));
  layout.n_visual = visual_features.rows();
  if (opts.post_text_ids && !opts.post_text_ids->empty()) {
    parts.push_back(ag::embedding(g, text_table, *opts.post_text_ids));
    layout.n_text_post = opts.post_text_ids->size();
  }
  if (opts.summary) {
    parts.push_back(g.param(m.reasoner.query_token));
    layout.n_summary = 1;
  }
  Var rows = parts.size() == 1 ? parts[0] : ag::concat_rows(g, parts);
  if (m.tcfg.method == TuningMethod::prompt) {
    rows = prompt_prepend(g, rows, m.prompt, m.rcfg);
    layout.n_prompt = static_cast<std::size_t>(m.prompt.r);
  }
  AdapterVarsT<T> av = make_adapter_vars(g, m);
  const AdapterVarsT<T>* avp =
      (m.tcfg.method == TuningMethod::lora || m.tcfg.method == TuningMethod::prefix) ? &av
                                                                                     : nullptr;
  Assembled<T> out;
  out.hidden = forward_full(g, rows, m.reasoner, mode, avp, dropout_rng);
  out.layout = layout;
  return out;
}

// Plain-tensor assembly of the same layout for the streaming path.
inline TranslatedSequence assemble_sequence(Model& m, const VisualTokens& visual,
                                            const AssemblyOptions& opts) {
  TranslatedSequence seq = translate(visual, m.translator);
  if (opts.pre_text_ids && !opts.pre_text_ids->empty()) {
    TranslatedSequence with_text;
    const std::size_t d = seq.tokens.cols();
    const auto& ids = *opts.pre_text_ids;
    with_text.tokens = Tensor({ids.size() + seq.size(), d});
    for (std::size_t i = 0; i < ids.size(); ++i)
      std::copy(m.heads.text_embed.value.row_ptr(static_cast<std::size_t>(ids[i])),
                m.heads.text_embed.value.row_ptr(static_cast<std::size_t>(ids[i])) + d,
                with_text.tokens.row_ptr(i));
    std::copy(seq.tokens.data.begin(), seq.tokens.data.end(),
              with_text.tokens.row_ptr(ids.size()));
    with_text.tags.assign(ids.size(), TokenTag::text);
    with_text.tags.insert(with_text.tags.end(), seq.tags.begin(), seq.tags.end());
    with_text.timestamps = seq.timestamps;
    seq = std::move(with_text);
  }
  if (opts.post_text_ids && !opts.post_text_ids->empty()) {
    const auto& ids = *opts.post_text_ids;
    Tensor text_rows({ids.size(), seq.tokens.cols()});
    for (std::size_t i = 0; i < ids.size(); ++i)
      std::copy(m.heads.text_embed.value.row_ptr(static_cast<std::size_t>(ids[i])),
                m.heads.text_embed.value.row_ptr(static_cast<std::size_t>(ids[i])) +
                    seq.tokens.cols(),
                text_rows.row_ptr(i));
    seq = condition_on_text(seq, text_rows, m.rcfg.max_positions);
  }
  if (opts.summary) seq = append_summary(seq, m.reasoner);
  if (m.tcfg.method == TuningMethod::prompt) seq = prompt_prepend(seq, m.prompt, m.rcfg);
  return seq;
}

}  // namespace vsr
