#pragma once

#include <string>

#include <json.hpp>

#include "vsr/adapters.hpp"
#include "vsr/heads.hpp"
#include "vsr/synthworld.hpp"

namespace vsr {

enum class Task { online, future, memory, dense, nlq, hd, caption };

std::string to_string(Task t);
Task task_from(const std::string& s);

struct TrainConfig {
  Task task = Task::online;
  TuningConfig tuning;
  double learning_rate = 0.0;  // 0: method default (1e-3, or 1e-4 for block tuning)
  int steps = 2000;
  int batch = 8;
  double clip_norm = 1.0;
  std::uint64_t seed = 7;
  int horizons = 4;          // N_f
  int proposals = 10;        // N_m
  int anticipation_gap = 1;  // units ahead of a token for horizon 1
  int train_streams = 200;
  int eval_streams = 100;
  int units_per_stream = 24;

  void validate() const {
    if (steps < 0) throw config_error("train.steps must be >= 0");
    if (batch < 1) throw config_error("train.batch must be >= 1");
    if (learning_rate < 0.0) throw config_error("train.learning_rate must be >= 0");
    if (clip_norm <= 0.0) throw config_error("train.clip_norm must be positive");
    if (horizons < 1 || horizons > kFutureReserve)
      throw config_error("train.horizons out of range");
    if (proposals < 1) throw config_error("train.proposals must be >= 1");
    if (anticipation_gap < 1) throw config_error("train.anticipation_gap must be >= 1");
    if (train_streams < 1 || eval_streams < 1) throw config_error("train stream counts");
    if (units_per_stream < 1) throw config_error("train.units_per_stream must be >= 1");
    tuning.validate();
  }

  double effective_lr() const {
    if (learning_rate > 0.0) return learning_rate;
    const bool block_tuning =
        tuning.method == TuningMethod::partial && tuning.partial_target != PartialTarget::bias;
    return block_tuning ? 1e-4 : 1e-3;
  }
};

struct RunPaths {
  std::string data;             // optional dataset directory
  std::string checkpoint;       // train output / eval + stream input
  std::string out;              // report + interchange directory
  std::string init_checkpoint;  // optional warm start
  std::string init_filter;      // parameter-name prefix to copy, e.g. "reasoner."
};

struct RunConfig {
  WorldConfig world;
  ReasonerConfig reasoner;
  TrainConfig train;
  RunPaths paths;

  void validate() const {
    world.validate();
    reasoner.validate();
    train.validate();
  }
};

// vocabulary = reserved ids + fillers + one word per category
HeadsConfig derive_heads_config(const WorldConfig& world, const TrainConfig& train);

nlohmann::json to_json(const WorldConfig& c);
nlohmann::json to_json(const ReasonerConfig& c);
nlohmann::json to_json(const TuningConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const RunConfig& c);
nlohmann::json to_json(const HeadsConfig& c);

WorldConfig world_config_from_json(const nlohmann::json& j);
ReasonerConfig reasoner_config_from_json(const nlohmann::json& j);
TuningConfig tuning_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);
HeadsConfig heads_config_from_json(const nlohmann::json& j);

// Schema-validates: unknown keys anywhere are rejected with the field name.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

}  // namespace vsr
