#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_helpers.hpp"
#include "vsr/model.hpp"

using namespace vsr;

namespace {

ReasonerConfig small_config() {
  ReasonerConfig cfg;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.hidden = 16;
  cfg.ffn = 64;
  cfg.max_positions = 32;
  return cfg;
}

HeadsConfig small_heads() {
  HeadsConfig h;
  h.categories = 4;
  h.horizons = 2;
  h.proposals = 3;
  h.vocab_size = 12;
  h.max_caption_len = 5;
  return h;
}

Model make_model(TuningConfig tcfg) {
  return init_model<float>(small_config(), small_heads(), tcfg, 8, 77);
}

Tensor eval_model(Model& m, const Tensor& visual, AssemblyOptions opts = {}) {
  Graph g;
  g.recording = false;
  return g.val(assemble_forward(g, m, visual, opts, m.rcfg.mode).hidden);
}

}  // namespace

TEST_CASE("partition: basic trains translator and heads exactly") {
  auto m = make_model({TuningMethod::basic, PartialTarget::bias, 4, true});
  auto trainables = trainable_params(m);
  for (const auto& [name, p] : trainables) {
    const bool ok = name.rfind("translator.", 0) == 0 || name.rfind("heads.", 0) == 0 ||
                    name.rfind("caption.", 0) == 0 || name == "text_embed.table" ||
                    name == "reasoner.query_token";
    CHECK_MESSAGE(ok, name);
  }
  visit_params<float>(m, [&](const std::string& name, Parameter& p) {
    if (name.rfind("reasoner.layer", 0) == 0) CHECK_FALSE(p.trainable);
  });
}

TEST_CASE("partition: bias target opens every bias and norm shift") {
  auto m = make_model({TuningMethod::partial, PartialTarget::bias, 4, true});
  visit_params<float>(m, [&](const std::string& name, Parameter& p) {
    if (name.rfind("reasoner.layer", 0) != 0 && name.rfind("reasoner.final_ln", 0) != 0) return;
    const bool is_shift = name.ends_with(".bq") || name.ends_with(".bk") ||
                          name.ends_with(".bv") || name.ends_with(".bo") ||
                          name.ends_with(".b1") || name.ends_with(".b2") ||
                          name.ends_with("ln1.b") || name.ends_with("ln2.b") ||
                          name.ends_with("final_ln.b");
    CHECK_MESSAGE(p.trainable == is_shift, name);
  });
}

TEST_CASE("partition: lora opens exactly two factor pairs per layer") {
  auto m = make_model({TuningMethod::lora, PartialTarget::bias, 4, true});
  int lora_trainable = 0;
  visit_params<float>(m, [&](const std::string& name, Parameter& p) {
    if (name.rfind("adapters.lora.", 0) == 0) {
      CHECK(p.trainable);
      ++lora_trainable;
    } else if (name.rfind("reasoner.layer", 0) == 0) {
      CHECK_FALSE(p.trainable);
    }
  });
  CHECK(lora_trainable == 2 * 2 * 2);  // layers x {q, v} x {A, B}
}

TEST_CASE("partial config requires a target") {
  TuningConfig t;
  t.method = TuningMethod::partial;
  t.partial_target_set = false;
  CHECK_THROWS_AS(t.validate(), config_error);
}

TEST_CASE("lora at init is a bit-exact identity") {
  auto base = make_model({TuningMethod::basic, PartialTarget::bias, 4, true});
  auto adapted = make_model({TuningMethod::lora, PartialTarget::bias, 4, true});
  Rng rng(5);
  Tensor visual = test::random_tensor_f({6, 8}, rng);
  auto a = eval_model(base, visual);
  auto b = eval_model(adapted, visual);
  CHECK(a.data == b.data);
}

TEST_CASE("lora constructed case: r=d with identity factors adds c*x") {
  // x W + (alpha/r) (x A^T) B^T with A = c I, B = I gives x W + c x
  const std::size_t d = 4;
  Rng wrng(3);
  ParameterT<double> w{test::random_tensor_d({d, d}, wrng, 0.5)};
  TensorT<double> a_eye({d, d}), b_eye({d, d});
  for (std::size_t i = 0; i < d; ++i) {
    a_eye.at(i, i) = 2.5;
    b_eye.at(i, i) = 1.0;
  }
  Rng rng(4);
  auto x = test::random_tensor_d({3, d}, rng);
  GraphD g;
  Var base = ag::matmul(g, g.constant(x), g.param(w));
  Var down = ag::matmul_nt(g, g.constant(x), g.constant(a_eye));
  Var up = ag::matmul_nt(g, down, g.constant(b_eye));
  Var out = ag::add(g, base, up);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < d; ++j)
      CHECK(g.val(out).at(i, j) ==
            doctest::Approx(g.val(base).at(i, j) + 2.5 * x.at(i, j)).epsilon(1e-12));
}

TEST_CASE("lora gradient reaches factors but not the frozen base") {
  auto m = init_model<double>(small_config(), small_heads(),
                              {TuningMethod::lora, PartialTarget::bias, 2, true}, 8, 78);
  // at the zero-B start only B receives gradient; move B off zero so the
  // gradient reaches both factors
  Rng brng(60);
  for (auto& l : m.lora.layers) {
    for (double& v : l.q_b.value.data) v = 0.05 * brng.normal();
    for (double& v : l.v_b.value.data) v = 0.05 * brng.normal();
  }
  Rng rng(6);
  auto visual = test::random_tensor_d({5, 8}, rng);
  // a plain sum over the final norm is constant (unit gains); mix instead
  auto mix = test::random_tensor_d({5, 16}, rng);
  zero_grads(m);
  GraphD g;
  auto asm_out = assemble_forward(g, m, visual, {}, ReasonerMode::causal);
  Var loss = ag::sum_all(g, ag::mul(g, asm_out.hidden, g.constant(mix)));
  g.backward(loss);
  double a_norm = 0.0, b_norm = 0.0;
  visit_params<double>(m, [&](const std::string& name, ParameterT<double>& p) {
    double norm = 0.0;
    for (double v : p.grad.data) norm += v * v;
    if (name.rfind("adapters.lora.", 0) == 0 && name.ends_with(".A")) a_norm += norm;
    if (name.rfind("adapters.lora.", 0) == 0 && name.ends_with(".B")) b_norm += norm;
    if (name.rfind("reasoner.layer", 0) == 0) CHECK(norm == 0.0);  // frozen, not materialized
  });
  CHECK(a_norm > 0.0);
  CHECK(b_norm > 0.0);

  // keep |loss| small so finite-difference noise stays below the absolute
  // denominator floor of the checker
  const double err = test::check_gradients(
      [&](GraphD& gg) {
        auto out = assemble_forward(gg, m, visual, {}, ReasonerMode::causal);
        return ag::scale(gg, ag::sum_all(gg, ag::mul(gg, out.hidden, gg.constant(mix))), 0.02);
      },
      trainable_params(m), 3e-4);
  CHECK(err < 1e-4);
}

TEST_CASE("prompt prepend shifts length and keeps virtual tokens blind to input") {
  auto m = make_model({TuningMethod::prompt, PartialTarget::bias, 3, true});
  Rng rng(7);
  Tensor visual = test::random_tensor_f({5, 8}, rng);

  Graph g;
  g.recording = false;
  auto out = assemble_forward(g, m, visual, {}, ReasonerMode::causal);
  CHECK(out.layout.n_prompt == 3);
  CHECK(g.val(out.hidden).rows() == 8);

  // causal mask: virtual rows are independent of the real tokens
  Tensor visual2 = visual;
  visual2.at(0, 0) += 2.0f;
  Graph g2;
  g2.recording = false;
  auto out2 = assemble_forward(g2, m, visual2, {}, ReasonerMode::causal);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c = 0; c < 16; ++c)
      CHECK(g.val(out.hidden).at(i, c) == g2.val(out2.hidden).at(i, c));

  // r = 0 behaves as identity
  PromptBank empty;
  TranslatedSequence seq;
  seq.tokens = visual;
  seq.tags.assign(5, TokenTag::visual);
  auto same = prompt_prepend(seq, empty, m.rcfg);
  CHECK(same.tokens.data == seq.tokens.data);
}

TEST_CASE("prompt embeddings start from the translator bias") {
  auto m = make_model({TuningMethod::prompt, PartialTarget::bias, 2, true});
  for (int i = 0; i < 2; ++i)
    for (std::size_t c = 0; c < 16; ++c)
      CHECK(m.prompt.rows.value.at(static_cast<std::size_t>(i), c) ==
            m.translator.bias.value.data[c]);
}

TEST_CASE("prefix injection seeds caches and leaves the position counter") {
  auto m = make_model({TuningMethod::prefix, PartialTarget::bias, 4, true});
  auto st = init_session<float>(m.rcfg);
  prefix_inject(st, m.prefix);
  CHECK(st.prefix_len == 4);
  CHECK(st.position == 0);
  for (const auto& l : st.layers) {
    CHECK(l.k.rows() == 4);
    CHECK(l.v.rows() == 4);
  }
  CHECK_THROWS_AS(prefix_inject(st, m.prefix), contract_error);
}

TEST_CASE("prefix with masked gate matches the basic model") {
  auto base = make_model({TuningMethod::basic, PartialTarget::bias, 4, true});
  auto adapted = make_model({TuningMethod::prefix, PartialTarget::bias, 4, true});
  adapted.prefix.gate = -1e30f;  // fully closed
  Rng rng(8);
  Tensor visual = test::random_tensor_f({6, 8}, rng);
  auto a = eval_model(base, visual);
  auto b = eval_model(adapted, visual);
  for (std::size_t i = 0; i < a.numel(); ++i)
    CHECK(std::abs(a.data[i] - b.data[i]) < 1e-6);

  // zero prefix values contribute zero vectors even with an open gate
  adapted.prefix.gate = 0.0f;
  for (auto& l : adapted.prefix.layers) l.k.value.fill(0.0f);
  auto c = eval_model(adapted, visual);
  CHECK(c.all_finite());
}

TEST_CASE("step equals forward_full with prefix installed") {
  auto m = make_model({TuningMethod::prefix, PartialTarget::bias, 3, true});
  Rng rng(9);
  Tensor visual = test::random_tensor_f({7, 8}, rng);
  auto full = eval_model(m, visual);

  auto seq = assemble_sequence(m, VisualTokens{visual, std::vector<double>(7, 0.0)}, {});
  auto st = init_session<float>(m.rcfg);
  prefix_inject(st, m.prefix);
  auto sa = make_step_adapters(m);
  double max_err = 0.0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    auto c0 = step(st, seq.tokens.row_ptr(i), m.reasoner, &sa);
    for (std::size_t c = 0; c < c0.size(); ++c)
      max_err = std::max(max_err, std::abs(static_cast<double>(c0[c]) - full.at(i, c)));
  }
  CHECK(max_err < 1e-5);
  for (const auto& l : st.layers) CHECK(l.k.rows() == 3 + 7);
}

TEST_CASE("count_trainable closed forms match a shape enumeration") {
  auto rcfg = small_config();
  for (TuningMethod method : {TuningMethod::basic, TuningMethod::lora, TuningMethod::prompt,
                              TuningMethod::prefix}) {
    for (int r : {1, 2, 4, 8}) {
      TuningConfig t{method, PartialTarget::bias, r, true};
      auto basic_model = make_model({TuningMethod::basic, PartialTarget::bias, r, true});
      auto model = make_model(t);
      long long basic_count = 0, method_count = 0;
      visit_params<float>(basic_model, [&](const std::string&, Parameter& p) {
        if (p.trainable) basic_count += static_cast<long long>(p.numel());
      });
      visit_params<float>(model, [&](const std::string&, Parameter& p) {
        if (p.trainable) method_count += static_cast<long long>(p.numel());
      });
      CHECK(count_trainable(rcfg, t) == method_count - basic_count);
      if (method != TuningMethod::lora && method != TuningMethod::prefix &&
          method != TuningMethod::prompt)
        break;  // r only matters for PEFT methods
    }
  }
  for (PartialTarget target : {PartialTarget::bias, PartialTarget::first, PartialTarget::last,
                               PartialTarget::first_last}) {
    TuningConfig t{TuningMethod::partial, target, 4, true};
    auto basic_model = make_model({TuningMethod::basic, PartialTarget::bias, 4, true});
    auto model = make_model(t);
    long long basic_count = 0, method_count = 0;
    visit_params<float>(basic_model, [&](const std::string&, Parameter& p) {
      if (p.trainable) basic_count += static_cast<long long>(p.numel());
    });
    visit_params<float>(model, [&](const std::string&, Parameter& p) {
      if (p.trainable) method_count += static_cast<long long>(p.numel());
    });
    CHECK(count_trainable(rcfg, t) == method_count - basic_count);
  }
}

TEST_CASE("count_trainable reproduces the published per-method arithmetic") {
  ReasonerConfig gpt2;
  gpt2.layers = 12;
  gpt2.heads = 12;
  gpt2.hidden = 768;
  gpt2.ffn = 3072;
  gpt2.max_positions = 1024;

  CHECK(count_trainable(gpt2, {TuningMethod::lora, PartialTarget::bias, 1, true}) == 36864);
  CHECK(count_trainable(gpt2, {TuningMethod::lora, PartialTarget::bias, 2, true}) == 73728);
  CHECK(count_trainable(gpt2, {TuningMethod::lora, PartialTarget::bias, 4, true}) == 147456);
  CHECK(count_trainable(gpt2, {TuningMethod::lora, PartialTarget::bias, 8, true}) == 294912);

  CHECK(count_trainable(gpt2, {TuningMethod::prefix, PartialTarget::bias, 1, true}) == 18432);
  CHECK(count_trainable(gpt2, {TuningMethod::prefix, PartialTarget::bias, 2, true}) == 36864);
  CHECK(count_trainable(gpt2, {TuningMethod::prefix, PartialTarget::bias, 4, true}) == 73728);
  CHECK(count_trainable(gpt2, {TuningMethod::prefix, PartialTarget::bias, 8, true}) == 147456);

  CHECK(count_trainable(gpt2, {TuningMethod::prompt, PartialTarget::bias, 8, true}) == 6144);

  CHECK(count_trainable(gpt2, {TuningMethod::partial, PartialTarget::bias, 4, true}) == 102144);
  CHECK(count_trainable(gpt2, {TuningMethod::partial, PartialTarget::first, 4, true}) == 7087872);
  CHECK(count_trainable(gpt2, {TuningMethod::partial, PartialTarget::first_last, 4, true}) ==
        14175744);
  CHECK(count_trainable(gpt2, {TuningMethod::basic, PartialTarget::bias, 4, true}) == 0);
}

TEST_CASE("prefix gradient check over the adapter partition") {
  auto m = init_model<double>(small_config(), small_heads(),
                              {TuningMethod::prefix, PartialTarget::bias, 2, true}, 8, 79);
  Rng rng(10);
  auto visual = test::random_tensor_d({4, 8}, rng);
  auto mix = test::random_tensor_d({4, 16}, rng);
  // move the bank off its output-neutral start so the gradients are large
  // enough for finite differences to resolve
  for (auto& l : m.prefix.layers) {
    for (double& v : l.k.value.data) v += 0.2 * rng.normal();
    for (double& v : l.v.value.data) v += 0.2 * rng.normal();
  }
  std::vector<std::pair<std::string, ParameterT<double>*>> params;
  visit_params<double>(m, [&](const std::string& name, ParameterT<double>& p) {
    if (name.rfind("adapters.prefix.", 0) == 0) params.emplace_back(name, &p);
  });
  REQUIRE(params.size() == 4);
  const double err = test::check_gradients(
      [&](GraphD& g) {
        auto out = assemble_forward(g, m, visual, {}, ReasonerMode::causal);
        return ag::scale(g, ag::sum_all(g, ag::mul(g, out.hidden, g.constant(mix))), 0.02);
      },
      params, 3e-4);
  CHECK(err < 1e-4);
}
