#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "test_helpers.hpp"
#include "vsr/matching.hpp"

using namespace vsr;

namespace {

// Exhaustive assignment search: min-cost injection of the smaller side.
double brute_force_cost(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  const int m = static_cast<int>(cost[0].size());
  double best = std::numeric_limits<double>::infinity();
  if (n <= m) {
    std::vector<int> cols(static_cast<std::size_t>(m));
    std::iota(cols.begin(), cols.end(), 0);
    std::sort(cols.begin(), cols.end());
    do {
      double total = 0.0;
      for (int i = 0; i < n; ++i) total += cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(cols[static_cast<std::size_t>(i)])];
      best = std::min(best, total);
    } while (std::next_permutation(cols.begin(), cols.end()));
  } else {
    std::vector<int> rows(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), 0);
    do {
      double total = 0.0;
      for (int j = 0; j < m; ++j) total += cost[static_cast<std::size_t>(rows[static_cast<std::size_t>(j)])][static_cast<std::size_t>(j)];
      best = std::min(best, total);
    } while (std::next_permutation(rows.begin(), rows.end()));
  }
  return best;
}

// grid-valued costs keep permutation sums exactly representable
std::vector<std::vector<double>> random_cost(Rng& rng, int n, int m) {
  std::vector<std::vector<double>> cost(static_cast<std::size_t>(n),
                                        std::vector<double>(static_cast<std::size_t>(m)));
  for (auto& row : cost)
    for (double& v : row) v = static_cast<double>(static_cast<int>(rng.below(129)) - 32) / 16.0;
  return cost;
}

}  // namespace

TEST_CASE("hungarian hand cases") {
  Assignment diag = hungarian({{0, 5, 5}, {5, 0, 5}, {5, 5, 0}});
  CHECK(diag.total_cost == 0.0);
  CHECK(diag.pairs == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}, {2, 2}});

  Assignment two = hungarian({{1, 2}, {3, 0}});
  CHECK(two.total_cost == 1.0);
  CHECK(two.pairs == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}});

  CHECK_THROWS_AS(hungarian({{1.0, std::nan("")}}), argument_error);
  CHECK_THROWS_AS(hungarian({{1.0, std::numeric_limits<double>::infinity()}}), argument_error);
}

TEST_CASE("hungarian equals exhaustive permutation search") {
  Rng rng(2025);
  for (int rep = 0; rep < 1000; ++rep) {
    const int n = 1 + static_cast<int>(rng.below(7));
    const int m = 1 + static_cast<int>(rng.below(7));
    auto cost = random_cost(rng, n, m);
    Assignment got = hungarian(cost);
    CHECK(got.pairs.size() == static_cast<std::size_t>(std::min(n, m)));
    CHECK(got.total_cost == brute_force_cost(cost));
    // indices unique on both sides
    std::vector<int> ls, rs;
    for (auto [i, j] : got.pairs) {
      ls.push_back(i);
      rs.push_back(j);
    }
    std::sort(ls.begin(), ls.end());
    std::sort(rs.begin(), rs.end());
    CHECK(std::adjacent_find(ls.begin(), ls.end()) == ls.end());
    CHECK(std::adjacent_find(rs.begin(), rs.end()) == rs.end());
  }
}

TEST_CASE("tiou cases") {
  CHECK(tiou(0, 10, 5, 15) == doctest::Approx(1.0 / 3.0));
  CHECK(tiou(0, 1, 2, 3) == 0.0);
  CHECK(tiou(0, 1, 0, 1) == 1.0);
  CHECK(tiou(2, 2, 2, 2) == 1.0);  // identical points
  CHECK(tiou(2, 2, 3, 3) == 0.0);  // distinct degenerate intervals
}

namespace {

// builds an N_m-proposal head output directly from raw parameters
struct RawProposals {
  std::vector<ParameterT<double>> logits;
  std::vector<ParameterT<double>> boxes;

  ProposalVars<double> vars(GraphD& g) {
    ProposalVars<double> pv;
    for (auto& l : logits) pv.logits.push_back(g.param(l));
    for (auto& b : boxes) pv.box_raw.push_back(g.param(b));
    return pv;
  }
};

RawProposals random_proposals(Rng& rng, int n_prop, int k) {
  RawProposals rp;
  for (int j = 0; j < n_prop; ++j) {
    rp.logits.emplace_back(test::random_tensor_d({1, static_cast<std::size_t>(k + 1)}, rng, 0.8));
    rp.boxes.emplace_back(test::random_tensor_d({1, 2}, rng, 0.8));
  }
  return rp;
}

}  // namespace

TEST_CASE("set loss: exact proposal incurs no box terms") {
  RawProposals rp;
  // proposal 0 matches the target exactly with a confident class
  ParameterT<double> logits{TensorT<double>::from_rows(1, 4, {20.0, 0.0, 0.0, 0.0})};
  const double center = 0.5, width = 0.25;
  const double inv_c = std::log(center / (1 - center));
  const double inv_w = std::log(width / (1 - width));
  ParameterT<double> box{TensorT<double>::from_rows(1, 2, {inv_c, inv_w})};
  rp.logits.push_back(logits);
  rp.boxes.push_back(box);

  GraphD g;
  auto pv = rp.vars(g);
  SetLossWeights weights;
  auto [loss, assign] = segment_set_loss(g, pv, {{center, width, 0}}, weights);
  CHECK(assign.pairs == std::vector<std::pair<int, int>>{{0, 0}});
  CHECK(g.val(loss).data[0] < 1e-3);  // class CE ~ 0, L1 = 0, 1 - tIoU = 0
}

TEST_CASE("set loss: zero targets reduces to no-object classification") {
  Rng rng(31);
  auto rp = random_proposals(rng, 3, 2);
  GraphD g;
  auto pv = rp.vars(g);
  SetLossWeights weights;
  auto [loss, assign] = segment_set_loss(g, pv, {}, weights);
  CHECK(assign.pairs.empty());
  double expect = 0.0;
  for (int j = 0; j < 3; ++j)
    expect += weights.cls * weights.no_object * kern::cross_entropy(rp.logits[static_cast<std::size_t>(j)].value, 2);
  expect /= 3.0;
  CHECK(g.val(loss).data[0] == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("set loss: capacity and permutation invariance") {
  Rng rng(32);
  auto rp = random_proposals(rng, 2, 3);
  GraphD g;
  auto pv = rp.vars(g);
  std::vector<TargetSegment> three = {{0.2, 0.1, 0}, {0.5, 0.2, 1}, {0.8, 0.1, 2}};
  CHECK_THROWS_AS(segment_set_loss(g, pv, three, SetLossWeights{}), capacity_error);

  auto rp2 = random_proposals(rng, 5, 3);
  std::vector<TargetSegment> targets = {{0.2, 0.1, 0}, {0.6, 0.3, 1}, {0.85, 0.1, 2}};
  GraphD ga;
  auto pva = rp2.vars(ga);
  auto [loss_a, assign_a] = segment_set_loss(ga, pva, targets, SetLossWeights{});
  std::reverse(targets.begin(), targets.end());
  GraphD gb;
  auto pvb = rp2.vars(gb);
  auto [loss_b, assign_b] = segment_set_loss(gb, pvb, targets, SetLossWeights{});
  CHECK(ga.val(loss_a).data[0] == doctest::Approx(gb.val(loss_b).data[0]).epsilon(1e-12));

  // chosen assignment cost is minimal against random permutations
  CHECK(assign_a.pairs.size() == 3);
}

TEST_CASE("set loss assignment cost is minimal over manual permutations") {
  Rng rng(33);
  for (int rep = 0; rep < 50; ++rep) {
    const int n_prop = 2 + static_cast<int>(rng.below(4));
    const int n_tgt = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n_prop)));
    auto rp = random_proposals(rng, n_prop, 3);
    std::vector<TargetSegment> targets;
    for (int t = 0; t < n_tgt; ++t) {
      const double c = 0.1 + 0.8 * rng.uniform();
      const double w = 0.05 + 0.3 * rng.uniform();
      targets.push_back({c, w, static_cast<int>(rng.below(3))});
    }
    GraphD g;
    auto pv = rp.vars(g);
    SetLossWeights weights;
    auto [loss, assign] = segment_set_loss(g, pv, targets, weights);

    // recompute the cost matrix independently and brute-force the minimum
    std::vector<std::vector<double>> cost(static_cast<std::size_t>(n_prop),
                                          std::vector<double>(static_cast<std::size_t>(n_tgt)));
    for (int j = 0; j < n_prop; ++j) {
      TensorT<double> probs = rp.logits[static_cast<std::size_t>(j)].value;
      kern::softmax_inplace(probs.data.data(), probs.data.size());
      const double c = kern::sigmoid(rp.boxes[static_cast<std::size_t>(j)].value.data[0]);
      const double w = kern::sigmoid(rp.boxes[static_cast<std::size_t>(j)].value.data[1]);
      for (int t = 0; t < n_tgt; ++t) {
        const auto& tg = targets[static_cast<std::size_t>(t)];
        cost[static_cast<std::size_t>(j)][static_cast<std::size_t>(t)] =
            weights.cls * (1.0 - probs.data[static_cast<std::size_t>(tg.category)]) +
            weights.l1 * (std::abs(c - tg.center) + std::abs(w - tg.width)) +
            weights.iou * (1.0 - tiou(c - w / 2, c + w / 2, tg.center - tg.width / 2,
                                      tg.center + tg.width / 2));
      }
    }
    double got = 0.0;
    for (auto [j, t] : assign.pairs) got += cost[static_cast<std::size_t>(j)][static_cast<std::size_t>(t)];
    CHECK(got == doctest::Approx(brute_force_cost(cost)).epsilon(1e-9));
  }
}

TEST_CASE("set loss gradient check at fixed assignment") {
  Rng rng(34);
  auto rp = random_proposals(rng, 4, 3);
  std::vector<TargetSegment> targets = {{0.3, 0.2, 1}, {0.7, 0.25, 2}};
  std::vector<std::pair<std::string, ParameterT<double>*>> params;
  for (std::size_t j = 0; j < rp.logits.size(); ++j) {
    params.emplace_back("logits" + std::to_string(j), &rp.logits[j]);
    params.emplace_back("box" + std::to_string(j), &rp.boxes[j]);
  }
  const double err = test::check_gradients(
      [&](GraphD& g) {
        auto pv = rp.vars(g);
        return segment_set_loss(g, pv, targets, SetLossWeights{}).first;
      },
      params, 1e-5);
  CHECK(err < 1e-6);
}
