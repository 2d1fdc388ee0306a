#include "vsr/config.hpp"

#include <fstream>
#include <set>

namespace vsr {

using nlohmann::json;

std::string to_string(Task t) {
  switch (t) {
    case Task::online: return "online";
    case Task::future: return "future";
    case Task::memory: return "memory";
    case Task::dense: return "dense";
    case Task::nlq: return "nlq";
    case Task::hd: return "hd";
    case Task::caption: return "caption";
  }
  throw config_error("unknown task");
}

Task task_from(const std::string& s) {
  if (s == "online") return Task::online;
  if (s == "future") return Task::future;
  if (s == "memory") return Task::memory;
  if (s == "dense") return Task::dense;
  if (s == "nlq") return Task::nlq;
  if (s == "hd") return Task::hd;
  if (s == "caption") return Task::caption;
  throw config_error("unknown task: " + s);
}

HeadsConfig derive_heads_config(const WorldConfig& world, const TrainConfig& train) {
  HeadsConfig h;
  h.categories = world.categories;
  h.horizons = train.horizons;
  h.proposals = train.proposals;
  h.vocab_size = Vocabulary::kReserved + 8 + world.categories;  // fillers + category words
  h.max_caption_len = world.caption_length + 1;                 // template + end-of-text
  h.anticipation_gap = train.anticipation_gap;
  return h;
}

namespace {

void require_keys(const json& j, const std::string& where, const std::set<std::string>& known) {
  if (!j.is_object()) throw config_error(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw config_error(where + ": unknown key '" + it.key() + "'");
  }
}

template <typename T>
T field(const json& j, const std::string& where, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw config_error(where + "." + key + ": wrong type");
  }
}

}  // namespace

json to_json(const WorldConfig& c) {
  return {{"categories", c.categories},     {"feature_dim", c.feature_dim},
          {"noise", c.noise},               {"duration_min", c.duration_min},
          {"duration_max", c.duration_max}, {"frames_per_unit", c.frames_per_unit},
          {"fps", c.fps},                   {"caption_length", c.caption_length},
          {"seed", c.seed}};
}

WorldConfig world_config_from_json(const json& j) {
  require_keys(j, "world",
               {"categories", "feature_dim", "noise", "duration_min", "duration_max",
                "frames_per_unit", "fps", "caption_length", "seed"});
  WorldConfig c;
  c.categories = field(j, "world", "categories", c.categories);
  c.feature_dim = field(j, "world", "feature_dim", c.feature_dim);
  c.noise = field(j, "world", "noise", c.noise);
  c.duration_min = field(j, "world", "duration_min", c.duration_min);
  c.duration_max = field(j, "world", "duration_max", c.duration_max);
  c.frames_per_unit = field(j, "world", "frames_per_unit", c.frames_per_unit);
  c.fps = field(j, "world", "fps", c.fps);
  c.caption_length = field(j, "world", "caption_length", c.caption_length);
  c.seed = field(j, "world", "seed", c.seed);
  c.validate();
  return c;
}

json to_json(const ReasonerConfig& c) {
  return {{"layers", c.layers},
          {"heads", c.heads},
          {"hidden", c.hidden},
          {"ffn", c.ffn},
          {"max_positions", c.max_positions},
          {"mode", c.mode == ReasonerMode::causal ? "causal" : "bidirectional"},
          {"dropout", c.dropout}};
}

ReasonerConfig reasoner_config_from_json(const json& j) {
  require_keys(j, "reasoner", {"layers", "heads", "hidden", "ffn", "max_positions", "mode",
                               "dropout"});
  ReasonerConfig c;
  c.layers = field(j, "reasoner", "layers", c.layers);
  c.heads = field(j, "reasoner", "heads", c.heads);
  c.hidden = field(j, "reasoner", "hidden", c.hidden);
  c.ffn = field(j, "reasoner", "ffn", c.ffn);
  c.max_positions = field(j, "reasoner", "max_positions", c.max_positions);
  const std::string mode = field<std::string>(j, "reasoner", "mode", "causal");
  if (mode == "causal") c.mode = ReasonerMode::causal;
  else if (mode == "bidirectional") c.mode = ReasonerMode::bidirectional;
  else throw config_error("reasoner.mode: expected causal|bidirectional, got " + mode);
  c.dropout = field(j, "reasoner", "dropout", c.dropout);
  c.validate();
  return c;
}

json to_json(const TuningConfig& c) {
  return {{"method", to_string(c.method)},
          {"partial_target", to_string(c.partial_target)},
          {"r", c.r}};
}

TuningConfig tuning_config_from_json(const json& j) {
  require_keys(j, "tuning", {"method", "partial_target", "r"});
  TuningConfig c;
  c.method = tuning_method_from(field<std::string>(j, "tuning", "method", "basic"));
  if (j.contains("partial_target")) {
    c.partial_target = partial_target_from(j.at("partial_target").get<std::string>());
    c.partial_target_set = true;
  } else {
    c.partial_target_set = c.method != TuningMethod::partial;
  }
  c.r = field(j, "tuning", "r", c.r);
  c.validate();
  return c;
}

json to_json(const TrainConfig& c) {
  return {{"task", to_string(c.task)},
          {"tuning", to_json(c.tuning)},
          {"learning_rate", c.learning_rate},
          {"steps", c.steps},
          {"batch", c.batch},
          {"clip_norm", c.clip_norm},
          {"seed", c.seed},
          {"horizons", c.horizons},
          {"proposals", c.proposals},
          {"anticipation_gap", c.anticipation_gap},
          {"train_streams", c.train_streams},
          {"eval_streams", c.eval_streams},
          {"units_per_stream", c.units_per_stream}};
}

TrainConfig train_config_from_json(const json& j) {
  require_keys(j, "train",
               {"task", "tuning", "learning_rate", "steps", "batch", "clip_norm", "seed",
                "horizons", "proposals", "anticipation_gap", "train_streams", "eval_streams",
                "units_per_stream"});
  TrainConfig c;
  c.task = task_from(field<std::string>(j, "train", "task", "online"));
  if (j.contains("tuning")) c.tuning = tuning_config_from_json(j.at("tuning"));
  c.learning_rate = field(j, "train", "learning_rate", c.learning_rate);
  c.steps = field(j, "train", "steps", c.steps);
  c.batch = field(j, "train", "batch", c.batch);
  c.clip_norm = field(j, "train", "clip_norm", c.clip_norm);
  c.seed = field(j, "train", "seed", c.seed);
  c.horizons = field(j, "train", "horizons", c.horizons);
  c.proposals = field(j, "train", "proposals", c.proposals);
  c.anticipation_gap = field(j, "train", "anticipation_gap", c.anticipation_gap);
  c.train_streams = field(j, "train", "train_streams", c.train_streams);
  c.eval_streams = field(j, "train", "eval_streams", c.eval_streams);
  c.units_per_stream = field(j, "train", "units_per_stream", c.units_per_stream);
  c.validate();
  return c;
}

json to_json(const HeadsConfig& c) {
  return {{"categories", c.categories},
          {"horizons", c.horizons},
          {"proposals", c.proposals},
          {"vocab_size", c.vocab_size},
          {"max_caption_len", c.max_caption_len},
          {"anticipation_gap", c.anticipation_gap},
          {"retrieval_from_last_visual", c.retrieval_from_last_visual}};
}

HeadsConfig heads_config_from_json(const json& j) {
  require_keys(j, "heads",
               {"categories", "horizons", "proposals", "vocab_size", "max_caption_len",
                "anticipation_gap", "retrieval_from_last_visual"});
  HeadsConfig c;
  c.categories = field(j, "heads", "categories", c.categories);
  c.horizons = field(j, "heads", "horizons", c.horizons);
  c.proposals = field(j, "heads", "proposals", c.proposals);
  c.vocab_size = field(j, "heads", "vocab_size", c.vocab_size);
  c.max_caption_len = field(j, "heads", "max_caption_len", c.max_caption_len);
  c.anticipation_gap = field(j, "heads", "anticipation_gap", c.anticipation_gap);
  c.retrieval_from_last_visual =
      field(j, "heads", "retrieval_from_last_visual", c.retrieval_from_last_visual);
  c.validate();
  return c;
}

json to_json(const RunConfig& c) {
  return {{"world", to_json(c.world)},
          {"reasoner", to_json(c.reasoner)},
          {"train", to_json(c.train)},
          {"paths",
           {{"data", c.paths.data},
            {"checkpoint", c.paths.checkpoint},
            {"out", c.paths.out},
            {"init_checkpoint", c.paths.init_checkpoint},
            {"init_filter", c.paths.init_filter}}}};
}

RunConfig run_config_from_json(const json& j) {
  require_keys(j, "config", {"world", "reasoner", "train", "paths"});
  RunConfig c;
  if (j.contains("world")) c.world = world_config_from_json(j.at("world"));
  if (j.contains("reasoner")) c.reasoner = reasoner_config_from_json(j.at("reasoner"));
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
  if (j.contains("paths")) {
    const json& p = j.at("paths");
    require_keys(p, "paths", {"data", "checkpoint", "out", "init_checkpoint", "init_filter"});
    c.paths.data = field<std::string>(p, "paths", "data", "");
    c.paths.checkpoint = field<std::string>(p, "paths", "checkpoint", "");
    c.paths.out = field<std::string>(p, "paths", "out", "");
    c.paths.init_checkpoint = field<std::string>(p, "paths", "init_checkpoint", "");
    c.paths.init_filter = field<std::string>(p, "paths", "init_filter", "");
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw config_error("config " + path + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace vsr
