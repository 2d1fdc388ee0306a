#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "test_helpers.hpp"
#include "vsr/metrics.hpp"

using namespace vsr;

TEST_CASE("class_mean_recall_at_k") {
  // all correct at rank 1
  CHECK(class_mean_recall_at_k({{0, 1, 2, 3, 4}, {1, 0, 2, 3, 4}}, {0, 1}, 5) == 100.0);
  // class 0 hit 1/1, class 1 hit 0/1
  CHECK(class_mean_recall_at_k({{0, 2, 3, 4, 5}, {0, 2, 3, 4, 5}}, {0, 1}, 6) == 50.0);
  // duplicates in a list count once
  CHECK(class_mean_recall_at_k({{2, 2, 2, 2, 2}}, {2}, 3) == 100.0);
  CHECK(class_mean_recall_at_k({{2, 2, 2, 2, 2}}, {1}, 3) == 0.0);
  CHECK_THROWS_AS(class_mean_recall_at_k({}, {}, 4), argument_error);
  // k cuts the list
  CHECK(class_mean_recall_at_k({{0, 1, 2}}, {2}, 3, 2) == 0.0);
}

TEST_CASE("framewise_accuracy") {
  CHECK(framewise_accuracy({1, 2, 3}, {1, 2, 3}) == 100.0);
  CHECK(framewise_accuracy({1, 2, 3}, {4, 5, 6}) == 0.0);
  CHECK(framewise_accuracy({1, 2, 3, 4}, {1, 2, 3, 9}) == 75.0);
}

TEST_CASE("label runs and segments") {
  CHECK(label_runs({1, 1, 2, 2, 2, 1}) == std::vector<int>{1, 2, 1});
  auto segs = runs_to_segments({3, 3, 5, 5, 5});
  REQUIRE(segs.size() == 2);
  CHECK(segs[0].start == 0.0);
  CHECK(segs[0].end == 2.0);
  CHECK(segs[0].category == 3);
  CHECK(segs[1].start == 2.0);
  CHECK(segs[1].end == 5.0);
}

TEST_CASE("segmental_f1") {
  std::vector<Segment> gt = {{0, 4, 1, 1}, {4, 8, 2, 1}};
  CHECK(segmental_f1(gt, gt) == 100.0);
  std::vector<Segment> disjoint = {{20, 24, 1, 1}};
  CHECK(segmental_f1(disjoint, gt) == 0.0);
  // one prediction matching one of two gt: P = 100, R = 50, F1 = 66.7
  std::vector<Segment> partial = {{0, 4, 1, 1}};
  CHECK(segmental_f1(partial, gt) == doctest::Approx(200.0 / 3.0).epsilon(1e-9));
  CHECK(segmental_f1({}, {}) == 0.0);
}

TEST_CASE("edit_score") {
  CHECK(edit_score({1, 2, 3}, {1, 2, 3}) == 100.0);
  CHECK(edit_score({1}, {1, 2, 3}) == doctest::Approx(100.0 / 3.0).epsilon(1e-9));
  CHECK(edit_score({}, {1, 2}) == 0.0);
  CHECK(edit_score({}, {}) == 100.0);
}

TEST_CASE("detection_map hand cases") {
  const std::vector<double> thresholds = {0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<Segment> gt = {{5, 15, 0, 1}};
  std::vector<Segment> exact = {{5, 15, 0, 0.9}};
  CHECK(detection_map(exact, gt, thresholds) == doctest::Approx(1.0));

  // tIoU = 1/3: TP at 0.1-0.3, FP at 0.4-0.5
  std::vector<Segment> shifted = {{0, 10, 0, 0.9}};
  CHECK(detection_map(shifted, gt, thresholds) == doctest::Approx(0.6));

  CHECK(detection_map({}, gt, thresholds) == 0.0);
}

namespace {

// Independent truth for small instances: re-derives greedy rank matching and
// integrates precision over recall by direct scan at every TP position.
double oracle_ap(std::vector<Segment> pred, const std::vector<Segment>& gt, double thr) {
  if (gt.empty()) return 0.0;
  std::stable_sort(pred.begin(), pred.end(), [](const Segment& a, const Segment& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.start != b.start) return a.start < b.start;
    return a.category < b.category;
  });
  std::vector<char> taken(gt.size(), 0);
  std::vector<int> tp_flags;
  for (const auto& p : pred) {
    int best = -1;
    double best_iou = 0.0;
    for (std::size_t j = 0; j < gt.size(); ++j) {
      if (taken[j]) continue;
      const double iou = tiou(p.start, p.end, gt[j].start, gt[j].end);
      if (iou > best_iou) {
        best_iou = iou;
        best = static_cast<int>(j);
      }
    }
    if (best >= 0 && best_iou >= thr) {
      taken[static_cast<std::size_t>(best)] = 1;
      tp_flags.push_back(1);
    } else {
      tp_flags.push_back(0);
    }
  }
  double ap = 0.0;
  int tp_so_far = 0;
  for (std::size_t i = 0; i < tp_flags.size(); ++i) {
    if (!tp_flags[i]) continue;
    ++tp_so_far;
    // best precision at any rank >= i with recall >= this recall level
    double best_prec = 0.0;
    int tp2 = 0;
    for (std::size_t r = 0; r < tp_flags.size(); ++r) {
      tp2 += tp_flags[r];
      if (r >= i) best_prec = std::max(best_prec, static_cast<double>(tp2) / static_cast<double>(r + 1));
    }
    ap += best_prec / static_cast<double>(gt.size());
  }
  return ap;
}

double oracle_map(const std::vector<Segment>& pred, const std::vector<Segment>& gt,
                  const std::vector<double>& thresholds) {
  std::vector<int> classes;
  for (const auto& s : gt)
    if (std::find(classes.begin(), classes.end(), s.category) == classes.end())
      classes.push_back(s.category);
  if (classes.empty()) return 0.0;
  double total = 0.0;
  for (double thr : thresholds) {
    double per_class = 0.0;
    for (int c : classes) {
      std::vector<Segment> pc, gc;
      for (const auto& s : pred)
        if (s.category == c) pc.push_back(s);
      for (const auto& s : gt)
        if (s.category == c) gc.push_back(s);
      per_class += oracle_ap(pc, gc, thr);
    }
    total += per_class / static_cast<double>(classes.size());
  }
  return total / static_cast<double>(thresholds.size());
}

}  // namespace

TEST_CASE("detection_map equals the exhaustive oracle on small instances") {
  Rng rng(808);
  const std::vector<double> thresholds = {0.1, 0.2, 0.3, 0.4, 0.5};
  for (int rep = 0; rep < 500; ++rep) {
    const int n_gt = 1 + static_cast<int>(rng.below(3));
    const int n_pred = static_cast<int>(rng.below(6));
    std::vector<Segment> gt, pred;
    for (int i = 0; i < n_gt; ++i) {
      const double s = 10.0 * rng.uniform();
      gt.push_back({s, s + 1.0 + 5.0 * rng.uniform(), static_cast<int>(rng.below(3)), 1.0});
    }
    for (int i = 0; i < n_pred; ++i) {
      const double s = 10.0 * rng.uniform();
      // score on a grid so rank ties exercise the deterministic tie rule
      pred.push_back({s, s + 1.0 + 5.0 * rng.uniform(), static_cast<int>(rng.below(3)),
                      static_cast<double>(rng.below(5)) / 4.0});
    }
    CHECK(detection_map(pred, gt, thresholds) ==
          doctest::Approx(oracle_map(pred, gt, thresholds)).epsilon(1e-12));
  }
}

TEST_CASE("detection_map is invariant to prediction order") {
  Rng rng(4242);
  const std::vector<double> thresholds = {0.1, 0.3, 0.5};
  std::vector<Segment> gt = {{0, 5, 0, 1}, {5, 9, 1, 1}, {2, 8, 0, 1}};
  std::vector<Segment> pred;
  for (int i = 0; i < 6; ++i) {
    const double s = 8.0 * rng.uniform();
    pred.push_back({s, s + 2.0, static_cast<int>(rng.below(2)), rng.uniform()});
  }
  const double base = detection_map(pred, gt, thresholds);
  for (int rep = 0; rep < 10; ++rep) {
    for (std::size_t i = pred.size(); i-- > 1;)
      std::swap(pred[i], pred[rng.below(i + 1)]);
    CHECK(detection_map(pred, gt, thresholds) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("rank_at_k") {
  std::vector<Segment> gt = {{0, 10, 0, 1}};
  CHECK(rank_at_k({{{0, 10, 0, 0.9}}}, gt, 1, 0.3) == 1.0);
  CHECK(rank_at_k({{{0, 10, 0, 0.9}}}, gt, 1, 0.5) == 1.0);

  // top-1 tIoU 0.4: hit at 0.3, miss at 0.5
  std::vector<std::vector<Segment>> preds = {{{0.0, 4.0, 0, 0.9}}};
  std::vector<Segment> gt2 = {{0, 10, 0, 1}};
  const double iou = tiou(0.0, 4.0, 0.0, 10.0);
  CHECK(iou == doctest::Approx(0.4).epsilon(1e-9));
  CHECK(rank_at_k(preds, gt2, 1, 0.3) == 1.0);
  CHECK(rank_at_k(preds, gt2, 1, 0.5) == 0.0);

  CHECK(rank_at_k({{{50, 60, 0, 0.9}}}, gt, 1, 0.3) == 0.0);
  // k = 2 rescues a low-ranked hit
  CHECK(rank_at_k({{{50, 60, 0, 0.9}, {0, 10, 0, 0.8}}}, gt, 2, 0.5) == 1.0);
}

TEST_CASE("rouge_l") {
  CHECK(rouge_l({1, 2, 3}, {1, 2, 3}) == 1.0);
  CHECK(rouge_l({1, 2}, {3, 4}) == 0.0);
  // cand "a b c", ref "a c": LCS 2, P = 2/3, R = 1, F = 0.8
  CHECK(rouge_l({1, 2, 3}, {1, 3}) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(rouge_l({}, {}) == 1.0);
  CHECK(rouge_l({1}, {}) == 0.0);
}

TEST_CASE("metric outputs stay in range on random inputs") {
  Rng rng(999);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<int> pred, gt;
    for (int i = 0; i < 20; ++i) {
      pred.push_back(static_cast<int>(rng.below(4)));
      gt.push_back(static_cast<int>(rng.below(4)));
    }
    const double acc = framewise_accuracy(pred, gt);
    CHECK(acc >= 0.0);
    CHECK(acc <= 100.0);
    const double ed = edit_score(label_runs(pred), label_runs(gt));
    CHECK(ed >= 0.0);
    CHECK(ed <= 100.0);
    const double f1 = segmental_f1(runs_to_segments(pred), runs_to_segments(gt));
    CHECK(f1 >= 0.0);
    CHECK(f1 <= 100.0);
  }
}
