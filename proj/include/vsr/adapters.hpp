#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vsr/reasoner.hpp"

namespace vsr {

enum class TuningMethod { basic, partial, lora, prompt, prefix };
enum class PartialTarget { bias, first, last, first_last };

struct TuningConfig {
  TuningMethod method = TuningMethod::basic;
  PartialTarget partial_target = PartialTarget::bias;
  int r = 4;  // PEFT rank / token count
  bool partial_target_set = true;

  void validate() const {
    if (method == TuningMethod::partial && !partial_target_set)
      throw config_error("partial tuning requires a partial_target");
    if ((method == TuningMethod::lora || method == TuningMethod::prompt ||
         method == TuningMethod::prefix) &&
        r < 1)
      throw config_error("PEFT r must be >= 1");
  }
};

std::string to_string(TuningMethod m);
std::string to_string(PartialTarget t);
TuningMethod tuning_method_from(const std::string& s);
PartialTarget partial_target_from(const std::string& s);

// Low-rank factors on the query and value projections of every layer.
// B starts at zero so the adapted model equals the frozen base bit-for-bit.
template <typename T>
struct LoraFactorsT {
  struct Layer {
    ParameterT<T> q_a, q_b;  // A: r x d, B: d x r
    ParameterT<T> v_a, v_b;
  };
  std::vector<Layer> layers;
  int r = 0;
  T scale = T(1);  // alpha / r with alpha = r
};

// Per-layer cache rows injected before any real token. Values start at zero
// and a fixed large-negative score bias keeps them output-neutral at init;
// the keys are trainable, so optimization can open the attention mass.
template <typename T>
struct PrefixBankT {
  struct Layer {
    ParameterT<T> k, v;  // r x d
  };
  std::vector<Layer> layers;
  int r = 0;
  T gate = T(-10);
};

// r learnable rows prepended to the input sequence.
template <typename T>
struct PromptBankT {
  ParameterT<T> rows;  // r x d
  int r = 0;
};

using LoraFactors = LoraFactorsT<float>;
using PrefixBank = PrefixBankT<float>;
using PromptBank = PromptBankT<float>;

template <typename T>
LoraFactorsT<T> init_lora(const ReasonerConfig& cfg, int r, std::uint64_t seed) {
  if (r < 1) throw config_error("lora r must be >= 1");
  Rng rng(Rng::derive(seed, 0x10a4ull));
  const auto d = static_cast<std::size_t>(cfg.hidden);
  const auto rr = static_cast<std::size_t>(r);
  LoraFactorsT<T> f;
  f.r = r;
  f.scale = T(1);
  f.layers.resize(cfg.layers);
  for (auto& l : f.layers) {
    l.q_a = detail::normal_param<T>({rr, d}, rng, 0.02);
    l.q_b = detail::const_param<T>({d, rr}, T(0));
    l.v_a = detail::normal_param<T>({rr, d}, rng, 0.02);
    l.v_b = detail::const_param<T>({d, rr}, T(0));
  }
  return f;
}

template <typename T>
PrefixBankT<T> init_prefix(const ReasonerConfig& cfg, int r, std::uint64_t seed) {
  if (r < 1) throw config_error("prefix r must be >= 1");
  Rng rng(Rng::derive(seed, 0x94e1ull));
  const auto d = static_cast<std::size_t>(cfg.hidden);
  const auto rr = static_cast<std::size_t>(r);
  PrefixBankT<T> b;
  b.r = r;
  b.layers.resize(cfg.layers);
  for (auto& l : b.layers) {
    l.k = detail::normal_param<T>({rr, d}, rng, 0.02);
    l.v = detail::const_param<T>({rr, d}, T(0));
  }
  return b;
}

// Prompt rows start from the translator bias vector.
template <typename T>
PromptBankT<T> init_prompt(const ReasonerConfig& cfg, int r, const TranslatorT<T>& tr) {
  if (r < 1) throw config_error("prompt r must be >= 1");
  const auto d = static_cast<std::size_t>(cfg.hidden);
  PromptBankT<T> b;
  b.r = r;
  b.rows = ParameterT<T>(TensorT<T>({static_cast<std::size_t>(r), d}));
  for (int i = 0; i < r; ++i)
    std::copy(tr.bias.value.data.begin(), tr.bias.value.data.end(),
              b.rows.value.row_ptr(static_cast<std::size_t>(i)));
  return b;
}

// Prepends the virtual rows; position indices of the real tokens shift by r.
template <typename T>
Var prompt_prepend(GraphT<T>& g, Var rows, PromptBankT<T>& bank, const ReasonerConfig& cfg) {
  if (bank.r == 0) return rows;
  if (g.val(rows).rows() + static_cast<std::size_t>(bank.r) >
      static_cast<std::size_t>(cfg.max_positions))
    throw capacity_error("prompt_prepend exceeds max positions");
  return ag::concat_rows(g, {g.param(bank.rows), rows});
}

inline TranslatedSequence prompt_prepend(const TranslatedSequence& seq, const PromptBank& bank,
                                         const ReasonerConfig& cfg) {
  if (bank.r == 0) return seq;
  if (seq.size() + static_cast<std::size_t>(bank.r) >
      static_cast<std::size_t>(cfg.max_positions))
    throw capacity_error("prompt_prepend exceeds max positions");
  TranslatedSequence out;
  const std::size_t d = bank.rows.value.cols();
  out.tokens = Tensor({seq.size() + static_cast<std::size_t>(bank.r), d});
  std::copy(bank.rows.value.data.begin(), bank.rows.value.data.end(), out.tokens.data.begin());
  std::copy(seq.tokens.data.begin(), seq.tokens.data.end(),
            out.tokens.data.begin() + static_cast<std::size_t>(bank.r) * d);
  out.tags.assign(static_cast<std::size_t>(bank.r), TokenTag::prompt);
  out.tags.insert(out.tags.end(), seq.tags.begin(), seq.tags.end());
  out.timestamps = seq.timestamps;
  return out;
}

// Pre-seeds every layer cache with the bank rows. The position counter is
// untouched: prefixes carry no position embedding.
template <typename T>
void prefix_inject(SessionStateT<T>& state, const PrefixBankT<T>& bank) {
  if (state.position != 0 || state.prefix_len != 0)
    throw contract_error("prefix_inject into a non-empty session");
  if (bank.layers.size() != state.layers.size())
    throw shape_error("prefix bank layer count");
  for (std::size_t li = 0; li < state.layers.size(); ++li) {
    state.layers[li].k = bank.layers[li].k.value;
    state.layers[li].v = bank.layers[li].v.value;
  }
  state.prefix_len = static_cast<std::size_t>(bank.r);
}

// Added trainable parameters versus basic tuning (translator and heads are
// always trainable and excluded). Closed forms, checked elsewhere against an
// enumeration of the real partition.
inline long long count_trainable(const ReasonerConfig& cfg, const TuningConfig& tuning) {
  const long long l = cfg.layers;
  const long long d = cfg.hidden;
  const long long f = cfg.ffn;
  switch (tuning.method) {
    case TuningMethod::basic:
      return 0;
    case TuningMethod::partial: {
      const long long per_block = 4 * d * d + 2 * d * f + 9 * d + f;
      switch (tuning.partial_target) {
        case PartialTarget::bias:
          // every projection/ffn bias plus every norm shift, final norm included
          return l * (7 * d + f) + d;
        case PartialTarget::first:
        case PartialTarget::last:
          return per_block;
        case PartialTarget::first_last:
          return l >= 2 ? 2 * per_block : per_block;
      }
      throw config_error("unknown partial target");
    }
    case TuningMethod::lora:
      return l * 2 * 2 * static_cast<long long>(tuning.r) * d;
    case TuningMethod::prefix:
      return l * 2 * static_cast<long long>(tuning.r) * d;
    case TuningMethod::prompt:
      return static_cast<long long>(tuning.r) * d;
  }
  throw config_error("unknown tuning method");
}

}  // namespace vsr
