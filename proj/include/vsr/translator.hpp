#pragma once

#include <cmath>
#include <vector>

#include "vsr/graph.hpp"
#include "vsr/ingest.hpp"
#include "vsr/rng.hpp"
#include "vsr/tensor.hpp"

namespace vsr {

enum class TokenTag { visual, text, query, prompt };

// Token layout of one reasoner input sequence, in position order:
//   [prompt rows][pre text][visual tokens][post text][summary]
// Pre text is the condition of an online/dense task, post text the condition
// of a retrieval query.
struct SequenceLayout {
  std::size_t n_prompt = 0;
  std::size_t n_text_pre = 0;
  std::size_t n_visual = 0;
  std::size_t n_text_post = 0;
  std::size_t n_summary = 0;

  std::size_t total() const { return n_prompt + n_text_pre + n_visual + n_text_post + n_summary; }
  std::size_t visual_begin() const { return n_prompt + n_text_pre; }
  std::size_t visual_end() const { return visual_begin() + n_visual; }
  std::size_t summary_index() const { return total() - 1; }
};

// Unit tokens lifted into reasoner hidden space, with per-token modality tags.
struct TranslatedSequence {
  Tensor tokens;  // N x d
  std::vector<TokenTag> tags;
  std::vector<double> timestamps;  // visual tokens only, index-aligned with tags

  std::size_t size() const { return tokens.rows(); }
};

// One linear projection from feature space (d_v) into reasoner space (d).
// Always trainable under every tuning method.
template <typename T>
struct TranslatorT {
  ParameterT<T> weight;  // d_v x d
  ParameterT<T> bias;    // d

  std::size_t feature_dim() const { return weight.value.rows(); }
  std::size_t hidden_dim() const { return weight.value.cols(); }
};

using Translator = TranslatorT<float>;

// Fan-in uniform init keeps translated norms near embedding norms.
template <typename T>
TranslatorT<T> init_translator(std::size_t d_v, std::size_t d, Rng& rng) {
  TranslatorT<T> t;
  t.weight = ParameterT<T>(TensorT<T>({d_v, d}));
  t.bias = ParameterT<T>(TensorT<T>({d}));
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_v));
  for (T& v : t.weight.value.data) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

// Inference path: plain kernels, tags/timestamps carried through.
inline TranslatedSequence translate(const VisualTokens& x, const Translator& tr) {
  if (x.tokens.cols() != tr.feature_dim())
    throw shape_error("translate: feature dim " + std::to_string(x.tokens.cols()) + " vs " +
                      std::to_string(tr.feature_dim()));
  TranslatedSequence out;
  out.tokens = kern::linear(x.tokens, tr.weight.value, &tr.bias.value);
  out.tags.assign(x.tokens.rows(), TokenTag::visual);
  out.timestamps = x.timestamps;
  return out;
}

// Training path: same projection recorded on the tape.
template <typename T>
Var translate(GraphT<T>& g, Var visual_features, TranslatorT<T>& tr) {
  if (g.val(visual_features).cols() != tr.feature_dim())
    throw shape_error("translate: feature dim mismatch");
  return ag::linear(g, visual_features, g.param(tr.weight), g.param(tr.bias));
}

}  // namespace vsr
