#pragma once

#include <map>
#include <string>
#include <vector>

#include "vsr/matching.hpp"

namespace vsr {

// (start, end, category, score) interval; score is meaningful on predictions
// only. Units (seconds or token indices) are consistent per dataset.
struct Segment {
  double start = 0.0;
  double end = 0.0;
  int category = 0;
  double score = 0.0;
};

struct MetricReport {
  std::map<std::string, double> values;
  std::map<std::string, double> metadata;  // thresholds, class count, sample count
};

// Per class: fraction of its instances whose label appears in the top-k list
// (duplicates count once); unweighted mean over classes with >= 1 instance.
double class_mean_recall_at_k(const std::vector<std::vector<int>>& topk,
                              const std::vector<int>& gt_labels, int num_classes, int k = 5);

double framewise_accuracy(const std::vector<int>& pred_labels, const std::vector<int>& gt_labels);

// Greedy per-class matching at overlap threshold tau over segment lists.
double segmental_f1(const std::vector<Segment>& pred, const std::vector<Segment>& gt,
                    double tau = 0.25);

// 100 * (1 - Levenshtein / max length) over label-run sequences, floored at 0.
double edit_score(const std::vector<int>& pred_runs, const std::vector<int>& gt_runs);

// Maximal constant runs of a per-token label sequence.
std::vector<int> label_runs(const std::vector<int>& labels);
std::vector<Segment> runs_to_segments(const std::vector<int>& labels);

// Mean AP over classes then thresholds; greedy rank-order matching and
// all-point interpolation. Ties in score break by earlier start, lower class.
double detection_map(const std::vector<Segment>& pred, const std::vector<Segment>& gt,
                     const std::vector<double>& thresholds);
double detection_ap_single(const std::vector<Segment>& pred, const std::vector<Segment>& gt,
                           double threshold);  // one class, one threshold

// Fraction of samples whose top-k ranked intervals contain one with
// tIoU >= min_iou against the ground truth.
double rank_at_k(const std::vector<std::vector<Segment>>& ranked_preds,
                 const std::vector<Segment>& gt, int k, double min_iou);

// LCS-based F score in [0, 1], plain harmonic mean.
double rouge_l(const std::vector<int>& candidate, const std::vector<int>& reference);

}  // namespace vsr
