#include "vsr/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "vsr/errors.hpp"

namespace vsr {

double class_mean_recall_at_k(const std::vector<std::vector<int>>& topk,
                              const std::vector<int>& gt_labels, int num_classes, int k) {
  if (gt_labels.empty()) throw argument_error("class_mean_recall_at_k: empty ground truth");
  if (topk.size() != gt_labels.size())
    throw shape_error("class_mean_recall_at_k: prediction/label count mismatch");
  std::vector<int> hits(static_cast<std::size_t>(num_classes), 0);
  std::vector<int> totals(static_cast<std::size_t>(num_classes), 0);
  for (std::size_t i = 0; i < gt_labels.size(); ++i) {
    const int gt = gt_labels[i];
    if (gt < 0 || gt >= num_classes) throw index_error("gt label " + std::to_string(gt));
    totals[static_cast<std::size_t>(gt)] += 1;
    const auto& list = topk[i];
    const std::size_t take = std::min<std::size_t>(list.size(), static_cast<std::size_t>(k));
    for (std::size_t j = 0; j < take; ++j) {
      if (list[j] == gt) {  // duplicates count once: first hit ends the scan
        hits[static_cast<std::size_t>(gt)] += 1;
        break;
      }
    }
  }
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < num_classes; ++c) {
    if (totals[static_cast<std::size_t>(c)] == 0) continue;
    sum += static_cast<double>(hits[static_cast<std::size_t>(c)]) / totals[static_cast<std::size_t>(c)];
    present += 1;
  }
  if (present == 0) throw argument_error("class_mean_recall_at_k: no class present");
  return 100.0 * sum / present;
}

double framewise_accuracy(const std::vector<int>& pred_labels, const std::vector<int>& gt_labels) {
  if (gt_labels.empty()) throw argument_error("framewise_accuracy: empty ground truth");
  if (pred_labels.size() != gt_labels.size())
    throw shape_error("framewise_accuracy: length mismatch");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gt_labels.size(); ++i)
    if (pred_labels[i] == gt_labels[i]) ++correct;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(gt_labels.size());
}

std::vector<int> label_runs(const std::vector<int>& labels) {
  std::vector<int> runs;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (i == 0 || labels[i] != labels[i - 1]) runs.push_back(labels[i]);
  return runs;
}

std::vector<Segment> runs_to_segments(const std::vector<int>& labels) {
  std::vector<Segment> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= labels.size(); ++i) {
    if (i == labels.size() || (i > 0 && labels[i] != labels[i - 1])) {
      if (i > start) out.push_back({static_cast<double>(start), static_cast<double>(i),
                                    labels[start], 1.0});
      start = i;
    }
  }
  return out;
}

double segmental_f1(const std::vector<Segment>& pred, const std::vector<Segment>& gt,
                    double tau) {
  if (pred.empty() && gt.empty()) return 0.0;
  if (pred.empty() || gt.empty()) return 0.0;
  std::vector<char> matched(gt.size(), 0);
  std::size_t tp = 0;
  for (const auto& p : pred) {
    double best = -1.0;
    std::size_t best_idx = 0;
    for (std::size_t j = 0; j < gt.size(); ++j) {
      if (matched[j] || gt[j].category != p.category) continue;
      const double iou = tiou(p.start, p.end, gt[j].start, gt[j].end);
      if (iou > best) {
        best = iou;
        best_idx = j;
      }
    }
    if (best >= tau && best > 0.0) {
      matched[best_idx] = 1;
      ++tp;
    }
  }
  const double precision = static_cast<double>(tp) / static_cast<double>(pred.size());
  const double recall = static_cast<double>(tp) / static_cast<double>(gt.size());
  if (precision + recall == 0.0) return 0.0;
  return 100.0 * 2.0 * precision * recall / (precision + recall);
}

namespace {
std::size_t levenshtein(const std::vector<int>& a, const std::vector<int>& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}
}  // namespace

double edit_score(const std::vector<int>& pred_runs, const std::vector<int>& gt_runs) {
  const std::size_t longest = std::max(pred_runs.size(), gt_runs.size());
  if (longest == 0) return 100.0;  // two empty sequences are equal
  const double d = static_cast<double>(levenshtein(pred_runs, gt_runs));
  return std::max(0.0, 100.0 * (1.0 - d / static_cast<double>(longest)));
}

double detection_ap_single(const std::vector<Segment>& pred, const std::vector<Segment>& gt,
                           double threshold) {
  if (gt.empty()) return 0.0;
  std::vector<Segment> ranked = pred;
  std::sort(ranked.begin(), ranked.end(), [](const Segment& a, const Segment& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.start != b.start) return a.start < b.start;
    return a.category < b.category;
  });
  std::vector<char> used(gt.size(), 0);
  std::vector<char> is_tp(ranked.size(), 0);
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    double best = 0.0;
    std::size_t best_idx = gt.size();
    for (std::size_t j = 0; j < gt.size(); ++j) {
      if (used[j]) continue;
      const double iou = tiou(ranked[i].start, ranked[i].end, gt[j].start, gt[j].end);
      if (iou > best) {
        best = iou;
        best_idx = j;
      }
    }
    if (best_idx < gt.size() && best >= threshold) {
      used[best_idx] = 1;
      is_tp[i] = 1;
    }
  }
  // all-point interpolated AP: area under the monotone precision envelope
  std::size_t tp = 0;
  std::vector<double> precision(ranked.size()), recall(ranked.size());
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    tp += is_tp[i] ? 1u : 0u;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(tp) / static_cast<double>(gt.size());
  }
  for (std::size_t i = ranked.size(); i-- > 1;)
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

double detection_map(const std::vector<Segment>& pred, const std::vector<Segment>& gt,
                     const std::vector<double>& thresholds) {
  if (thresholds.empty()) throw argument_error("detection_map: no thresholds");
  std::vector<int> classes;
  for (const auto& s : gt)
    if (std::find(classes.begin(), classes.end(), s.category) == classes.end())
      classes.push_back(s.category);
  if (classes.empty()) return 0.0;
  std::sort(classes.begin(), classes.end());
  double over_thresholds = 0.0;
  for (double thr : thresholds) {
    double over_classes = 0.0;
    for (int c : classes) {
      std::vector<Segment> pc, gc;
      for (const auto& s : pred)
        if (s.category == c) pc.push_back(s);
      for (const auto& s : gt)
        if (s.category == c) gc.push_back(s);
      over_classes += detection_ap_single(pc, gc, thr);
    }
    over_thresholds += over_classes / static_cast<double>(classes.size());
  }
  return over_thresholds / static_cast<double>(thresholds.size());
}

double rank_at_k(const std::vector<std::vector<Segment>>& ranked_preds,
                 const std::vector<Segment>& gt, int k, double min_iou) {
  if (ranked_preds.size() != gt.size()) throw shape_error("rank_at_k: sample count mismatch");
  if (gt.empty()) throw argument_error("rank_at_k: empty ground truth");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const std::size_t take = std::min<std::size_t>(ranked_preds[i].size(),
                                                   static_cast<std::size_t>(k));
    for (std::size_t j = 0; j < take; ++j) {
      if (tiou(ranked_preds[i][j].start, ranked_preds[i][j].end, gt[i].start, gt[i].end) >=
          min_iou) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(gt.size());
}

double rouge_l(const std::vector<int>& candidate, const std::vector<int>& reference) {
  if (candidate.empty() || reference.empty())
    return (candidate.empty() && reference.empty()) ? 1.0 : 0.0;
  const std::size_t n = candidate.size(), m = reference.size();
  std::vector<std::size_t> prev(m + 1, 0), cur(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      if (candidate[i - 1] == reference[j - 1]) cur[j] = prev[j - 1] + 1;
      else cur[j] = std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const double lcs = static_cast<double>(prev[m]);
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(n);
  const double r = lcs / static_cast<double>(m);
  return 2.0 * p * r / (p + r);
}

}  // namespace vsr
