#include "vsr/synthworld.hpp"

#include <cmath>
#include <string>

#include "vsr/errors.hpp"
#include "vsr/rng.hpp"

namespace vsr {

namespace {

const std::vector<std::string> kFillerWords = {"the", "a",    "is",    "now",
                                               "here", "find", "watch", "then"};

std::string category_word(int k) { return "act" + std::to_string(k); }

}  // namespace

World build_world(const WorldConfig& cfg) {
  cfg.validate();
  World world;
  world.cfg = cfg;

  Rng rng(Rng::derive(cfg.seed, 0x30081ull));
  const auto k = static_cast<std::size_t>(cfg.categories);
  const auto d = static_cast<std::size_t>(cfg.feature_dim);
  world.prototypes = Tensor({k, d});
  for (std::size_t c = 0; c < k; ++c) {
    float* row = world.prototypes.row_ptr(c);
    double norm_sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      row[j] = static_cast<float>(rng.normal());
      norm_sq += static_cast<double>(row[j]) * row[j];
    }
    const float inv = static_cast<float>(1.0 / std::sqrt(norm_sq));
    for (std::size_t j = 0; j < d; ++j) row[j] *= inv;
  }

  std::vector<std::string> words = kFillerWords;
  for (int c = 0; c < cfg.categories; ++c) words.push_back(category_word(c));
  world.vocab = Vocabulary(words);

  for (int c = 0; c < cfg.categories; ++c) {
    std::vector<int> caption;
    caption.push_back(world.vocab.id_of("the"));
    caption.push_back(world.vocab.id_of(category_word(c)));
    std::size_t filler = 2;  // skip "the"/"a" so templates stay distinct
    while (static_cast<int>(caption.size()) < cfg.caption_length) {
      caption.push_back(world.vocab.id_of(kFillerWords[filler % kFillerWords.size()]));
      ++filler;
    }
    caption.resize(static_cast<std::size_t>(cfg.caption_length));
    caption.push_back(Vocabulary::kEndOfText);
    world.caption_templates.push_back(std::move(caption));
    world.query_templates.push_back(
        {world.vocab.id_of("find"), world.vocab.id_of(category_word(c)), Vocabulary::kEndOfText});
  }
  return world;
}

StreamSample sample_stream(const World& world, int n_units, std::uint64_t seed) {
  if (n_units < 1) throw argument_error("sample_stream: n_units must be >= 1");
  const auto& cfg = world.cfg;

  // Separate substreams keep the label chain prefix-stable when a longer
  // stream is generated from the same seed.
  Rng rng_labels(Rng::derive(seed, 1));
  Rng rng_frames(Rng::derive(seed, 2));
  Rng rng_query(Rng::derive(seed, 3));

  StreamSample s;
  const int total_units = n_units + kFutureReserve;
  std::vector<int> chain;
  chain.reserve(static_cast<std::size_t>(total_units));
  int current = static_cast<int>(rng_labels.below(static_cast<std::uint64_t>(cfg.categories)));
  while (static_cast<int>(chain.size()) < total_units) {
    const int span = cfg.duration_min +
                     static_cast<int>(rng_labels.below(
                         static_cast<std::uint64_t>(cfg.duration_max - cfg.duration_min + 1)));
    const int begin = static_cast<int>(chain.size());
    for (int u = 0; u < span && static_cast<int>(chain.size()) < total_units; ++u)
      chain.push_back(current);
    const int end = static_cast<int>(chain.size());
    if (begin < n_units) {
      Segment seg;
      seg.start = begin;
      seg.end = std::min(end, n_units);
      seg.category = current;
      seg.score = 1.0;
      s.segments.push_back(seg);
    }
    // uniform over the other K-1 categories, no self transitions
    int next = static_cast<int>(rng_labels.below(static_cast<std::uint64_t>(cfg.categories - 1)));
    if (next >= current) ++next;
    current = next;
  }
  s.unit_labels.assign(chain.begin(), chain.begin() + n_units);
  s.future_labels.assign(chain.begin() + n_units, chain.begin() + total_units);

  const auto d = static_cast<std::size_t>(cfg.feature_dim);
  const std::size_t frames = static_cast<std::size_t>(n_units) *
                             static_cast<std::size_t>(cfg.frames_per_unit);
  s.features.fps = static_cast<float>(cfg.fps);
  s.features.features = Tensor({frames, d});
  for (int u = 0; u < n_units; ++u) {
    const float* proto = world.prototypes.row_ptr(static_cast<std::size_t>(s.unit_labels[u]));
    for (int f = 0; f < cfg.frames_per_unit; ++f) {
      float* row = s.features.features.row_ptr(
          static_cast<std::size_t>(u) * cfg.frames_per_unit + f);
      for (std::size_t j = 0; j < d; ++j)
        row[j] = proto[j] + static_cast<float>(cfg.noise * rng_frames.normal());
    }
  }

  for (int u = 0; u < n_units; ++u)
    s.unit_captions.push_back(world.caption_templates[static_cast<std::size_t>(s.unit_labels[u])]);

  // query one category present in the stream
  std::vector<int> present;
  for (const auto& seg : s.segments)
    if (std::find(present.begin(), present.end(), seg.category) == present.end())
      present.push_back(seg.category);
  s.query_category = present[rng_query.below(present.size())];
  s.query.ids = world.query_templates[static_cast<std::size_t>(s.query_category)];
  s.query.raw = "find " + category_word(s.query_category);
  for (const auto& seg : s.segments) {
    if (seg.category != s.query_category) continue;
    s.query_answers_all.push_back(seg);
    s.query_answer_recent = seg;  // segments are in order; the last one sticks
  }
  return s;
}

std::vector<int> oracle_classify(const VisualTokens& tokens, const World& world) {
  const std::size_t n = tokens.tokens.rows();
  const std::size_t d = tokens.tokens.cols();
  if (d != static_cast<std::size_t>(world.cfg.feature_dim))
    throw shape_error("oracle_classify: feature dim");
  std::vector<int> labels(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const float* tok = tokens.tokens.row_ptr(i);
    double tok_norm = 0.0;
    for (std::size_t j = 0; j < d; ++j) tok_norm += static_cast<double>(tok[j]) * tok[j];
    tok_norm = std::sqrt(tok_norm);
    double best = -2.0;
    int best_k = 0;
    for (int c = 0; c < world.cfg.categories; ++c) {
      const float* proto = world.prototypes.row_ptr(static_cast<std::size_t>(c));
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += static_cast<double>(tok[j]) * proto[j];
      const double cosine = tok_norm > 0.0 ? dot / tok_norm : 0.0;  // prototypes are unit norm
      if (cosine > best) {
        best = cosine;
        best_k = c;
      }
    }
    labels[i] = best_k;
  }
  return labels;
}

double oracle_accuracy(const std::vector<int>& oracle_labels, const std::vector<int>& gt) {
  if (oracle_labels.size() != gt.size() || gt.empty())
    throw shape_error("oracle_accuracy: length mismatch");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < gt.size(); ++i)
    if (oracle_labels[i] == gt[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(gt.size());
}

}  // namespace vsr
