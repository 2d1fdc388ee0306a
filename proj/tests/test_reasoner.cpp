#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "test_helpers.hpp"
#include "vsr/heads.hpp"
#include "vsr/reasoner.hpp"

using namespace vsr;

namespace {

ReasonerConfig small_config() {
  ReasonerConfig cfg;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.hidden = 16;
  cfg.ffn = 32;
  cfg.max_positions = 32;
  return cfg;
}

Tensor eval_full(ReasonerWeights& w, const Tensor& rows, ReasonerMode mode,
                 const AdapterVarsT<float>* adapters = nullptr) {
  Graph g;
  g.recording = false;
  return g.val(forward_full(g, g.constant(rows), w, mode, adapters));
}

}  // namespace

TEST_CASE("init determinism and parameter count") {
  auto cfg = small_config();
  auto a = init_reasoner<float>(cfg, 7);
  auto b = init_reasoner<float>(cfg, 7);
  auto c = init_reasoner<float>(cfg, 8);
  bool identical = true, differs = false;
  CHECK(a.layers[0].attn.wq.value.data == b.layers[0].attn.wq.value.data);
  CHECK(a.pos.value.data == b.pos.value.data);
  if (a.layers[0].attn.wq.value.data != c.layers[0].attn.wq.value.data) differs = true;
  CHECK(identical);
  CHECK(differs);

  // exact closed form: 12 L d^2 + 13 L d + P d + 3 d with d_ff = 4 d
  ReasonerConfig big;
  big.layers = 3;
  big.heads = 4;
  big.hidden = 32;
  big.ffn = 128;
  big.max_positions = 20;
  auto w = init_reasoner<float>(big, 1);
  const std::size_t l = 3, d = 32, p = 20;
  const std::size_t expect = 12 * l * d * d + 13 * l * d + p * d + 3 * d;
  CHECK(reasoner_param_count(w) == expect);
  CHECK(reasoner_param_count(w) >= 12 * l * d * d);
}

TEST_CASE("forward_full shape, capacity, and causality") {
  auto cfg = small_config();
  auto w = init_reasoner<float>(cfg, 3);
  Rng rng(11);
  Tensor rows = test::random_tensor_f({6, 16}, rng);

  auto out = eval_full(w, rows, ReasonerMode::causal);
  CHECK(out.rows() == 6);
  CHECK(out.cols() == 16);

  Tensor too_long = test::random_tensor_f({33, 16}, rng);
  Graph g;
  CHECK_THROWS_AS(forward_full(g, g.constant(too_long), w, ReasonerMode::causal), capacity_error);

  // perturb token j: outputs before j are bit-identical in causal mode
  for (std::size_t j : {std::size_t(2), std::size_t(5)}) {
    Tensor perturbed = rows;
    perturbed.at(j, 3) += 0.75f;
    auto out2 = eval_full(w, perturbed, ReasonerMode::causal);
    for (std::size_t i = 0; i < j; ++i)
      for (std::size_t c = 0; c < 16; ++c) CHECK(out.at(i, c) == out2.at(i, c));
    bool at_j_changed = false;
    for (std::size_t c = 0; c < 16; ++c)
      if (out.at(j, c) != out2.at(j, c)) at_j_changed = true;
    CHECK(at_j_changed);
  }
}

TEST_CASE("bidirectional mode propagates information backward") {
  auto cfg = small_config();
  cfg.mode = ReasonerMode::bidirectional;
  auto w = init_reasoner<float>(cfg, 5);
  Rng rng(13);
  Tensor rows = test::random_tensor_f({5, 16}, rng);
  Tensor perturbed = rows;
  perturbed.at(4, 0) += 1.0f;
  auto a = eval_full(w, rows, ReasonerMode::bidirectional);
  auto b = eval_full(w, perturbed, ReasonerMode::bidirectional);
  bool first_row_changed = false;
  for (std::size_t c = 0; c < 16; ++c)
    if (a.at(0, c) != b.at(0, c)) first_row_changed = true;
  CHECK(first_row_changed);
}

TEST_CASE("step equals forward_full row by row") {
  Rng seeds(2024);
  for (int rep = 0; rep < 25; ++rep) {
    ReasonerConfig cfg;
    cfg.layers = 1 + static_cast<int>(seeds.below(3));
    cfg.heads = 1 << seeds.below(3);
    cfg.hidden = cfg.heads * static_cast<int>(4 + seeds.below(5));
    cfg.ffn = cfg.hidden * 2;
    cfg.max_positions = 96;
    auto w = init_reasoner<float>(cfg, seeds.next_u64());
    const std::size_t t = 1 + seeds.below(64);
    Rng rng(seeds.next_u64());
    Tensor rows = test::random_tensor_f({t, static_cast<std::size_t>(cfg.hidden)}, rng);

    auto full = eval_full(w, rows, ReasonerMode::causal);
    auto st = init_session<float>(cfg);
    double max_err = 0.0;
    for (std::size_t i = 0; i < t; ++i) {
      auto c0 = step(st, rows.row_ptr(i), w);
      CHECK(st.position == i + 1);
      for (std::size_t c = 0; c < c0.size(); ++c)
        max_err = std::max(max_err, std::abs(static_cast<double>(c0[c]) - full.at(i, c)));
    }
    CHECK(max_err < 1e-5);
  }
}

TEST_CASE("first step equals a length-1 forward_full") {
  auto cfg = small_config();
  auto w = init_reasoner<float>(cfg, 21);
  Rng rng(22);
  Tensor row = test::random_tensor_f({1, 16}, rng);
  auto full = eval_full(w, row, ReasonerMode::causal);
  auto st = init_session<float>(cfg);
  auto c0 = step(st, row.row_ptr(0), w);
  for (std::size_t c = 0; c < 16; ++c)
    CHECK(std::abs(c0[c] - full.at(0, c)) < 1e-6);
}

TEST_CASE("step contract violations") {
  auto cfg = small_config();
  cfg.mode = ReasonerMode::bidirectional;
  auto w = init_reasoner<float>(cfg, 2);
  auto st = init_session<float>(cfg);
  Tensor row({1, 16});
  CHECK_THROWS_AS(step(st, row.row_ptr(0), w), contract_error);

  cfg.mode = ReasonerMode::causal;
  cfg.max_positions = 3;
  auto w2 = init_reasoner<float>(cfg, 2);
  auto st2 = init_session<float>(cfg);
  for (int i = 0; i < 3; ++i) step(st2, row.row_ptr(0), w2);
  CHECK_THROWS_AS(step(st2, row.row_ptr(0), w2), capacity_error);
}

TEST_CASE("session eviction rebuilds over the retained window") {
  ReasonerConfig cfg = small_config();
  cfg.max_positions = 8;
  auto w = init_reasoner<float>(cfg, 17);
  Rng rng(18);
  const std::size_t total = 13;
  Tensor rows = test::random_tensor_f({total, 16}, rng);

  auto st = init_session<float>(cfg);
  std::vector<float> last;
  for (std::size_t i = 0; i < total; ++i) last = session_push(st, rows.row_ptr(i), w);
  CHECK(st.position == 8);

  // reference: full forward over the last max_positions inputs
  Tensor window({std::size_t(8), 16});
  for (std::size_t i = 0; i < 8; ++i)
    std::copy(rows.row_ptr(total - 8 + i), rows.row_ptr(total - 8 + i) + 16, window.row_ptr(i));
  auto full = eval_full(w, window, ReasonerMode::causal);
  for (std::size_t c = 0; c < 16; ++c)
    CHECK(std::abs(last[c] - full.at(7, c)) < 1e-5);
}

TEST_CASE("per-step attention work grows linearly") {
  auto cfg = small_config();
  auto w = init_reasoner<float>(cfg, 4);
  auto st = init_session<float>(cfg);
  Rng rng(5);
  Tensor rows = test::random_tensor_f({10, 16}, rng);
  std::vector<std::uint64_t> per_step;
  for (std::size_t i = 0; i < 10; ++i) {
    step(st, rows.row_ptr(i), w);
    per_step.push_back(st.last_step_macs);
  }
  const std::uint64_t slope = per_step[1] - per_step[0];
  CHECK(slope > 0);
  for (std::size_t i = 1; i < per_step.size(); ++i)
    CHECK(per_step[i] - per_step[i - 1] == slope);  // constant increment = linear growth
  CHECK(per_step[0] == static_cast<std::uint64_t>(cfg.layers) * 2 * 1 * 16);
}

TEST_CASE("append_summary grows the sequence and keeps causality") {
  auto cfg = small_config();
  auto w = init_reasoner<float>(cfg, 6);
  Rng rng(7);
  TranslatedSequence seq;
  seq.tokens = test::random_tensor_f({4, 16}, rng);
  seq.tags.assign(4, TokenTag::visual);
  seq.timestamps = {1, 2, 3, 4};
  auto with_summary = append_summary(seq, w);
  CHECK(with_summary.size() == 5);
  CHECK(with_summary.tags.back() == TokenTag::query);

  auto base = eval_full(w, seq.tokens, ReasonerMode::causal);
  auto extended = eval_full(w, with_summary.tokens, ReasonerMode::causal);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 16; ++c) CHECK(base.at(i, c) == extended.at(i, c));
}

TEST_CASE("full reasoner with online head passes the gradient check") {
  ReasonerConfig cfg;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.hidden = 12;
  cfg.ffn = 24;
  cfg.max_positions = 8;
  auto w = init_reasoner<double>(cfg, 31);
  Rng rng(32);
  auto x = test::random_tensor_d({5, 12}, rng, 0.5);
  ParameterT<double> head_w{test::random_tensor_d({12, 3}, rng, 0.3)};
  ParameterT<double> head_b{test::random_tensor_d({3}, rng, 0.1)};

  std::vector<std::pair<std::string, ParameterT<double>*>> params = {{"head.W", &head_w},
                                                                     {"head.b", &head_b}};
  std::size_t idx = 0;
  for (auto& layer : w.layers) {
    for (ParameterT<double>* p :
         {&layer.ln1_g, &layer.ln1_b, &layer.attn.wq, &layer.attn.bq, &layer.attn.wk,
          &layer.attn.bk, &layer.attn.wv, &layer.attn.bv, &layer.attn.wo, &layer.attn.bo,
          &layer.ln2_g, &layer.ln2_b, &layer.w1, &layer.b1, &layer.w2, &layer.b2})
      params.emplace_back("layer" + std::to_string(idx++), p);
  }
  params.emplace_back("final_ln.g", &w.lnf_g);
  params.emplace_back("final_ln.b", &w.lnf_b);
  params.emplace_back("pos", &w.pos);

  const double err = test::check_gradients(
      [&](GraphD& g) {
        Var hidden = forward_full(g, g.constant(x), w, ReasonerMode::causal);
        Var logits = ag::linear(g, hidden, g.param(head_w), g.param(head_b));
        return ag::ce_rows(g, logits, {0, 2, 1, 0, 2});
      },
      params, 1e-4);
  CHECK(err < 1e-4);
}

TEST_CASE("dropout applies only in train mode and is seeded") {
  auto cfg = small_config();
  cfg.dropout = 0.5;
  auto w = init_reasoner<float>(cfg, 41);
  Rng rng(42);
  Tensor rows = test::random_tensor_f({4, 16}, rng);

  auto inference = eval_full(w, rows, ReasonerMode::causal);
  auto inference2 = eval_full(w, rows, ReasonerMode::causal);
  CHECK(inference.data == inference2.data);

  Graph g1, g2;
  g1.train_mode = g2.train_mode = true;
  Rng d1(5), d2(5);
  const AdapterVarsT<float>* no_adapters = nullptr;
  auto t1 =
      g1.val(forward_full(g1, g1.constant(rows), w, ReasonerMode::causal, no_adapters, &d1));
  auto t2 =
      g2.val(forward_full(g2, g2.constant(rows), w, ReasonerMode::causal, no_adapters, &d2));
  CHECK(t1.data == t2.data);   // same dropout stream
  CHECK(t1.data != inference.data);
}
