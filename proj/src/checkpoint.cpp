#include "vsr/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "vsr/config.hpp"

namespace vsr {

using nlohmann::json;

namespace {
constexpr char kMagic[4] = {'V', 'S', 'C', '1'};

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw truncation_error("checkpoint header");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}
}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t bytes) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

void save_checkpoint(const std::string& path, Model& model, std::uint64_t step,
                     std::uint64_t rng_state, const json& extra) {
  json manifest;
  manifest["format"] = 1;
  manifest["step"] = step;
  manifest["rng_state"] = rng_state;
  manifest["feature_dim"] = model.feature_dim;
  manifest["reasoner"] = to_json(model.rcfg);
  manifest["heads"] = to_json(model.hcfg);
  manifest["tuning"] = to_json(model.tcfg);
  manifest["extra"] = extra;

  json params = json::array();
  std::uint64_t offset = 0;
  std::uint64_t global_hash = 0xcbf29ce484222325ull;
  visit_params<float>(model, [&](const std::string& name, Parameter& p) {
    json entry;
    entry["name"] = name;
    entry["shape"] = p.value.shape;
    entry["trainable"] = p.trainable;
    entry["offset"] = offset;
    entry["hash"] = fnv1a64(p.value.data.data(), p.value.data.size() * sizeof(float));
    params.push_back(entry);
    offset += p.value.numel();
    global_hash ^= entry["hash"].get<std::uint64_t>();
  });
  manifest["params"] = params;
  manifest["total_floats"] = offset;
  manifest["global_hash"] = global_hash;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot write checkpoint " + path);
  out.write(kMagic, 4);
  const std::string text = manifest.dump();
  write_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  visit_params<float>(model, [&](const std::string&, Parameter& p) {
    out.write(reinterpret_cast<const char*>(p.value.data.data()),
              static_cast<std::streamsize>(p.value.data.size() * sizeof(float)));
  });
  if (!out) throw io_error("short write to checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open checkpoint " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw format_error("bad checkpoint magic in " + path);
  const std::uint64_t text_len = read_u64(in);
  std::string text(text_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(text_len)))
    throw truncation_error("checkpoint manifest in " + path);
  json manifest;
  try {
    manifest = json::parse(text);
  } catch (const json::exception& e) {
    throw format_error(std::string("checkpoint manifest: ") + e.what());
  }
  if (manifest.at("format").get<int>() != 1) throw format_error("unsupported checkpoint format");

  Checkpoint ck;
  ck.step = manifest.at("step").get<std::uint64_t>();
  ck.rng_state = manifest.at("rng_state").get<std::uint64_t>();
  ck.extra = manifest.value("extra", json::object());
  const auto rcfg = reasoner_config_from_json(manifest.at("reasoner"));
  const auto hcfg = heads_config_from_json(manifest.at("heads"));
  const auto tcfg = tuning_config_from_json(manifest.at("tuning"));
  const auto d_v = manifest.at("feature_dim").get<std::size_t>();
  ck.model = init_model<float>(rcfg, hcfg, tcfg, d_v, 0);

  const json& params = manifest.at("params");
  std::size_t idx = 0;
  visit_params<float>(ck.model, [&](const std::string& name, Parameter& p) {
    if (idx >= params.size()) throw format_error("checkpoint parameter list too short");
    const json& entry = params[idx];
    if (entry.at("name").get<std::string>() != name)
      throw format_error("checkpoint parameter order mismatch at " + name);
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    if (shape != p.value.shape)
      throw shape_error("checkpoint shape mismatch for " + name);
    p.trainable = entry.at("trainable").get<bool>();
    if (!in.read(reinterpret_cast<char*>(p.value.data.data()),
                 static_cast<std::streamsize>(p.value.data.size() * sizeof(float))))
      throw truncation_error("checkpoint blob for " + name);
    if (fnv1a64(p.value.data.data(), p.value.data.size() * sizeof(float)) !=
        entry.at("hash").get<std::uint64_t>())
      throw format_error("checkpoint hash mismatch for " + name);
    ++idx;
  });
  if (idx != params.size()) throw format_error("checkpoint parameter list too long");
  return ck;
}

int warm_start(Model& dst, const Checkpoint& src, const std::string& filter) {
  // collect source values by name
  std::vector<std::pair<std::string, const Parameter*>> source;
  visit_params<float>(const_cast<Model&>(src.model),
                      [&](const std::string& name, Parameter& p) { source.emplace_back(name, &p); });
  int copied = 0;
  visit_params<float>(dst, [&](const std::string& name, Parameter& p) {
    if (!filter.empty() && name.rfind(filter, 0) != 0) return;
    for (const auto& [src_name, src_p] : source) {
      if (src_name != name) continue;
      if (src_p->value.shape != p.value.shape)
        throw shape_error("warm_start shape mismatch for " + name);
      p.value = src_p->value;
      ++copied;
      return;
    }
  });
  return copied;
}

std::uint64_t frozen_set_hash(Model& model) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  visit_params<float>(model, [&](const std::string& name, Parameter& p) {
    if (p.trainable) return;
    h ^= fnv1a64(name.data(), name.size());
    h ^= fnv1a64(p.value.data.data(), p.value.data.size() * sizeof(float));
    h *= 0x100000001b3ull;
  });
  return h;
}

}  // namespace vsr
