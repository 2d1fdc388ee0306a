#pragma once

#include <cstdint>
#include <vector>

#include "vsr/ingest.hpp"
#include "vsr/metrics.hpp"

namespace vsr {

// Deterministic event-stream world: a semi-Markov category process emitting
// noisy prototype features, with queries and captions over a tiny vocabulary.
struct WorldConfig {
  int categories = 10;     // K
  int feature_dim = 64;    // d_v
  double noise = 0.25;     // per-dimension emission sigma
  int duration_min = 2;    // units
  int duration_max = 6;    // units
  int frames_per_unit = 4; // F_s
  double fps = 8.0;
  int caption_length = 3;  // template words before end-of-text
  std::uint64_t seed = 1;

  void validate() const {
    if (categories < 2) throw config_error("world: categories must be >= 2");
    if (feature_dim < 1) throw config_error("world: feature_dim must be >= 1");
    if (noise < 0.0) throw config_error("world: noise must be >= 0");
    if (duration_min < 1) throw config_error("world: duration_min must be >= 1");
    if (duration_max < duration_min) throw config_error("world: duration_max < duration_min");
    if (frames_per_unit < 1) throw config_error("world: frames_per_unit must be >= 1");
    if (!(fps > 0.0)) throw config_error("world: fps must be positive");
    if (caption_length < 1) throw config_error("world: caption_length must be >= 1");
  }
};

struct World {
  WorldConfig cfg;
  Tensor prototypes;  // K x d_v, unit norm
  Vocabulary vocab;
  std::vector<std::vector<int>> caption_templates;  // per category, ends with end-of-text
  std::vector<std::vector<int>> query_templates;    // per category, ends with end-of-text
};

// Number of future labels generated past the stream end, independent of the
// task's configured horizon.
constexpr int kFutureReserve = 16;

struct StreamSample {
  FrameFeatures features;
  std::vector<int> unit_labels;        // per unit
  std::vector<Segment> segments;       // unit scale, tiling the stream
  std::vector<int> future_labels;      // kFutureReserve labels past the end
  TextTokens query;                    // category-naming question
  int query_category = 0;
  Segment query_answer_recent;         // most recent segment of the category
  std::vector<Segment> query_answers_all;
  std::vector<std::vector<int>> unit_captions;  // per unit, ends with end-of-text
};

// Unit-norm prototypes, uniform non-self transitions, deterministic in seed.
World build_world(const WorldConfig& cfg);

StreamSample sample_stream(const World& world, int n_units, std::uint64_t seed);

// Nearest-prototype (cosine) labels per pooled unit token.
std::vector<int> oracle_classify(const VisualTokens& tokens, const World& world);
double oracle_accuracy(const std::vector<int>& oracle_labels, const std::vector<int>& gt);

}  // namespace vsr
