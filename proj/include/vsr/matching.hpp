#pragma once

#include <utility>
#include <vector>

#include "vsr/graph.hpp"
#include "vsr/heads.hpp"

namespace vsr {

// Minimum-cost assignment between proposals (rows) and targets (columns).
// Indices are unique on both sides; pair count = min(rows, cols).
struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (proposal index, target index)
  double total_cost = 0.0;
};

// Rectangular matrices are padded square with a constant above every real
// entry; padded pairs are dropped from the result. O(max(n,m)^3), exact.
Assignment hungarian(const std::vector<std::vector<double>>& cost);

struct SetLossWeights {
  double cls = 1.0;
  double l1 = 5.0;
  double iou = 2.0;
  double no_object = 0.1;  // down-weight on unmatched-class cross-entropy

  void validate() const {
    if (cls < 0 || l1 < 0 || iou < 0 || no_object < 0)
      throw config_error("set loss weights must be non-negative");
  }
};

// Temporal intersection-over-union. Zero-width degenerate intervals have
// tIoU 0 unless they are identical points.
inline double tiou(double s1, double e1, double s2, double e2) {
  const double overlap = std::max(0.0, std::min(e1, e2) - std::max(s1, s2));
  const double uni = (e1 - s1) + (e2 - s2) - overlap;
  if (uni <= 0.0) return (s1 == s2 && e1 == e2) ? 1.0 : 0.0;
  return overlap / uni;
}

// Ground-truth segment normalized to the memory span.
struct TargetSegment {
  double center = 0.0;
  double width = 0.0;
  int category = 0;
};

namespace detail {

template <typename T>
Var scalar_const(GraphT<T>& g, double v) {
  TensorT<T> t({std::size_t(1), std::size_t(1)});
  t.data[0] = static_cast<T>(v);
  return g.constant(std::move(t));
}

template <typename T>
Var slice_col(GraphT<T>& g, Var row_vec, std::size_t col, std::size_t width) {
  // column selector as a constant matmul keeps the op set small
  const std::size_t n = g.val(row_vec).cols();
  (void)width;
  TensorT<T> sel({n, std::size_t(1)});
  sel.data[col] = T(1);
  return ag::matmul(g, row_vec, g.constant(std::move(sel)));
}

}  // namespace detail

// DETR-style set loss at a fixed assignment. The matching is computed from
// detached forward values and treated as a constant during backward.
// Matched proposals incur class CE + L1 + (1 - tIoU); unmatched proposals
// incur down-weighted no-object CE. The mean is over proposals.
template <typename T>
std::pair<Var, Assignment> segment_set_loss(GraphT<T>& g, ProposalVars<T>& proposals,
                                            const std::vector<TargetSegment>& targets,
                                            const SetLossWeights& weights) {
  weights.validate();
  const std::size_t n_prop = proposals.logits.size();
  if (targets.size() > n_prop)
    throw capacity_error("segment_set_loss: " + std::to_string(targets.size()) +
                         " targets exceed " + std::to_string(n_prop) + " proposals");
  const std::size_t n_cls = g.val(proposals.logits[0]).cols();  // K + 1
  const int no_object = static_cast<int>(n_cls) - 1;

  // detached per-proposal class probabilities and decoded boxes for the cost
  std::vector<std::vector<double>> probs(n_prop);
  std::vector<double> centers(n_prop), widths(n_prop);
  for (std::size_t j = 0; j < n_prop; ++j) {
    TensorT<T> p = g.val(proposals.logits[j]);
    kern::softmax_inplace(p.data.data(), p.data.size());
    probs[j].assign(p.data.begin(), p.data.end());
    const auto& b = g.val(proposals.box_raw[j]);
    centers[j] = static_cast<double>(kern::sigmoid(b.data[0]));
    widths[j] = static_cast<double>(kern::sigmoid(b.data[1]));
  }

  Assignment assignment;
  if (!targets.empty()) {
    std::vector<std::vector<double>> cost(n_prop, std::vector<double>(targets.size()));
    for (std::size_t j = 0; j < n_prop; ++j) {
      const double s1 = centers[j] - widths[j] / 2, e1 = centers[j] + widths[j] / 2;
      for (std::size_t t = 0; t < targets.size(); ++t) {
        const auto& tg = targets[t];
        if (tg.category < 0 || tg.category >= no_object)
          throw index_error("target category " + std::to_string(tg.category));
        const double s2 = tg.center - tg.width / 2, e2 = tg.center + tg.width / 2;
        cost[j][t] = weights.cls * (1.0 - probs[j][static_cast<std::size_t>(tg.category)]) +
                     weights.l1 * (std::abs(centers[j] - tg.center) +
                                   std::abs(widths[j] - tg.width)) +
                     weights.iou * (1.0 - tiou(s1, e1, s2, e2));
      }
    }
    assignment = hungarian(cost);
  }

  std::vector<int> matched_target(n_prop, -1);
  for (auto [j, t] : assignment.pairs) matched_target[static_cast<std::size_t>(j)] = t;

  std::vector<Var> terms;
  const T half = T(0.5);
  for (std::size_t j = 0; j < n_prop; ++j) {
    const int t = matched_target[j];
    if (t < 0) {
      Var ce = ag::ce_rows(g, proposals.logits[j], {no_object});
      terms.push_back(ag::scale(g, ce, static_cast<T>(weights.cls * weights.no_object)));
      continue;
    }
    const auto& tg = targets[static_cast<std::size_t>(t)];
    Var ce = ag::ce_rows(g, proposals.logits[j], {tg.category});
    terms.push_back(ag::scale(g, ce, static_cast<T>(weights.cls)));

    Var box = ag::sigmoid(g, proposals.box_raw[j]);
    Var c = detail::slice_col(g, box, 0, 2);
    Var w = detail::slice_col(g, box, 1, 2);
    Var dc = ag::abs_(g, ag::sub(g, c, detail::scalar_const(g, tg.center)));
    Var dw = ag::abs_(g, ag::sub(g, w, detail::scalar_const(g, tg.width)));
    terms.push_back(ag::scale(g, ag::add(g, dc, dw), static_cast<T>(weights.l1)));

    Var s1 = ag::sub(g, c, ag::scale(g, w, half));
    Var e1 = ag::add(g, c, ag::scale(g, w, half));
    Var s2 = detail::scalar_const(g, tg.center - tg.width / 2);
    Var e2 = detail::scalar_const(g, tg.center + tg.width / 2);
    Var overlap = ag::relu(g, ag::sub(g, ag::min_(g, e1, e2), ag::max_(g, s1, s2)));
    Var uni = ag::sub(g, ag::add(g, w, detail::scalar_const(g, tg.width)), overlap);
    Var one_minus_iou = ag::add_const(g, ag::scale(g, ag::div(g, overlap, uni), T(-1)), T(1));
    terms.push_back(ag::scale(g, one_minus_iou, static_cast<T>(weights.iou)));
  }
  Var loss = ag::scale(g, ag::sum_list(g, terms), T(1) / static_cast<T>(n_prop));
  return {loss, assignment};
}

}  // namespace vsr
