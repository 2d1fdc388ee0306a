#pragma once

#include <map>
#include <string>
#include <vector>

#include "vsr/tensor.hpp"

namespace vsr {

// Raw ingested stream: F frames of precomputed d_v-dim features at a fixed rate.
struct FrameFeatures {
  Tensor features;  // F x d_v
  float fps = 0.0f;

  std::size_t frame_count() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }
};

// Frames grouped into fixed-size temporal units; a trailing partial unit is
// padded by repeating its last available frame.
struct UnitSequence {
  Tensor frames;  // (N_v * F_s) x d_v, regrouped with padding applied
  std::size_t unit_size = 0;
  float fps = 0.0f;

  std::size_t unit_count() const { return unit_size ? frames.rows() / unit_size : 0; }
  double unit_span_seconds() const { return static_cast<double>(unit_size) / fps; }
};

// One pooled token per unit plus its end time.
struct VisualTokens {
  Tensor tokens;  // N_v x d_v
  std::vector<double> timestamps;
};

struct TextTokens {
  std::vector<int> ids;
  std::string raw;
};

// Reserved ids: 0 padding, 1 unknown, 2 end-of-text. File ids start at 3.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnknown = 1;
  static constexpr int kEndOfText = 2;
  static constexpr int kReserved = 3;

  Vocabulary() = default;
  explicit Vocabulary(const std::vector<std::string>& words);

  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  int id_of(const std::string& word) const;  // kUnknown when absent
  const std::string& word_of(int id) const;
  int size() const { return static_cast<int>(words_.size()) + kReserved; }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::map<std::string, int> index_;
};

// VLF container: magic "VLF1", u32 version(=1), u32 F, u32 d_v, f32 fps, then
// F*d_v little-endian f32 values, row-major. Bit-exact across store/load.
FrameFeatures load_features(const std::string& path);
void store_features(const std::string& path, const FrameFeatures& stream);

UnitSequence unitize(const FrameFeatures& stream, std::size_t unit_size);
VisualTokens pool_units(const UnitSequence& units);

// Whitespace split, ASCII case fold, unknown -> 1, end-of-text appended.
TextTokens tokenize(const std::string& text, const Vocabulary& vocab);

}  // namespace vsr
