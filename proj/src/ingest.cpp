#include "vsr/ingest.hpp"

#include <cctype>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "vsr/errors.hpp"

namespace vsr {

namespace {

constexpr char kMagic[4] = {'V', 'L', 'F', '1'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

bool read_u32(std::istream& in, std::uint32_t& v) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

void write_f32(std::ostream& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  write_u32(out, bits);
}

bool read_f32(std::istream& in, float& f) {
  std::uint32_t bits;
  if (!read_u32(in, bits)) return false;
  std::memcpy(&f, &bits, 4);
  return true;
}

}  // namespace

FrameFeatures load_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open feature file " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw format_error("bad magic in " + path);
  std::uint32_t version = 0, frames = 0, dim = 0;
  float fps = 0.0f;
  if (!read_u32(in, version)) throw truncation_error("header of " + path);
  if (version != kVersion)
    throw format_error("unsupported version " + std::to_string(version) + " in " + path);
  if (!read_u32(in, frames) || !read_u32(in, dim) || !read_f32(in, fps))
    throw truncation_error("header of " + path);
  if (frames < 1 || dim < 1 || !(fps > 0.0f))
    throw format_error("degenerate header in " + path);
  FrameFeatures stream;
  stream.fps = fps;
  stream.features = Tensor({frames, dim});
  for (std::size_t i = 0; i < stream.features.numel(); ++i) {
    if (!read_f32(in, stream.features.data[i]))
      throw truncation_error(path + ": payload ends before " + std::to_string(frames) + " rows");
  }
  return stream;
}

void store_features(const std::string& path, const FrameFeatures& stream) {
  if (stream.frame_count() < 1 || stream.dim() < 1)
    throw argument_error("store_features: empty stream");
  if (!(stream.fps > 0.0f)) throw argument_error("store_features: fps must be positive");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot write feature file " + path);
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  write_u32(out, static_cast<std::uint32_t>(stream.frame_count()));
  write_u32(out, static_cast<std::uint32_t>(stream.dim()));
  write_f32(out, stream.fps);
  for (float v : stream.features.data) write_f32(out, v);
  if (!out) throw io_error("short write to " + path);
}

UnitSequence unitize(const FrameFeatures& stream, std::size_t unit_size) {
  if (unit_size < 1) throw argument_error("unitize: unit size must be >= 1");
  const std::size_t f = stream.frame_count();
  const std::size_t d = stream.dim();
  const std::size_t n_units = (f + unit_size - 1) / unit_size;
  UnitSequence seq;
  seq.unit_size = unit_size;
  seq.fps = stream.fps;
  seq.frames = Tensor({n_units * unit_size, d});
  for (std::size_t i = 0; i < n_units * unit_size; ++i) {
    const std::size_t src = i < f ? i : f - 1;  // pad by repeating the last frame
    std::copy(stream.features.row_ptr(src), stream.features.row_ptr(src) + d,
              seq.frames.row_ptr(i));
  }
  return seq;
}

VisualTokens pool_units(const UnitSequence& units) {
  const std::size_t n = units.unit_count();
  if (n == 0) throw argument_error("pool_units: empty unit sequence");
  const std::size_t d = units.frames.cols();
  VisualTokens out;
  out.tokens = Tensor({n, d});
  out.timestamps.resize(n);
  const float inv = 1.0f / static_cast<float>(units.unit_size);
  for (std::size_t u = 0; u < n; ++u) {
    float* tok = out.tokens.row_ptr(u);
    for (std::size_t r = 0; r < units.unit_size; ++r) {
      const float* frame = units.frames.row_ptr(u * units.unit_size + r);
      for (std::size_t j = 0; j < d; ++j) tok[j] += frame[j];
    }
    for (std::size_t j = 0; j < d; ++j) tok[j] *= inv;
    out.timestamps[u] = static_cast<double>(u + 1) * units.unit_span_seconds();
  }
  return out;
}

Vocabulary::Vocabulary(const std::vector<std::string>& words) : words_(words) {
  for (std::size_t i = 0; i < words_.size(); ++i) {
    auto [it, fresh] = index_.emplace(words_[i], static_cast<int>(i) + kReserved);
    if (!fresh) throw argument_error("duplicate vocabulary word: " + words_[i]);
    (void)it;
  }
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open vocabulary " + path);
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) words.push_back(line);
  }
  return Vocabulary(words);
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("cannot write vocabulary " + path);
  for (const auto& w : words_) out << w << "\n";
}

int Vocabulary::id_of(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnknown : it->second;
}

const std::string& Vocabulary::word_of(int id) const {
  static const std::string kReservedNames[kReserved] = {"<pad>", "<unk>", "<eot>"};
  if (id < 0 || id >= size()) throw index_error("vocabulary id " + std::to_string(id));
  if (id < kReserved) return kReservedNames[id];
  return words_[static_cast<std::size_t>(id - kReserved)];
}

TextTokens tokenize(const std::string& text, const Vocabulary& vocab) {
  TextTokens out;
  out.raw = text;
  std::string word;
  std::istringstream words(text);
  while (words >> word) {
    for (char& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    out.ids.push_back(vocab.id_of(word));
  }
  out.ids.push_back(Vocabulary::kEndOfText);
  return out;
}

}  // namespace vsr
