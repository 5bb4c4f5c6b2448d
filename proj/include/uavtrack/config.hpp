#pragma once

// Run configuration: one JSON file drives collection, training and
// evaluation. Unknown keys and type mismatches are rejected with the full
// key path.

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "uavtrack/eval.hpp"
#include "uavtrack/model/train.hpp"

namespace uavtrack {

struct EpisodeDefaults {
  std::string target_class = "pedestrian";
  std::string distance_tier = "suitable";
  int horizon = 500;  // collection horizon in control ticks
  int n_vehicles = 6;
  int n_pedestrians = 4;
  bool weather_noise = false;

  sim::EpisodeConfig to_config() const {
    sim::EpisodeConfig c;
    c.target_class = parse_target_class(target_class);
    c.distance_tier = parse_tier(distance_tier);
    c.horizon = horizon;
    c.n_vehicles = n_vehicles;
    c.n_pedestrians = n_pedestrians;
    c.weather_noise = weather_noise;
    return c;
  }
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EpisodeDefaults, target_class, distance_tier, horizon, n_vehicles,
                                                n_pedestrians, weather_noise)

struct CollectionSettings {
  int episodes = 200;
  int workers = 4;
  int chunk_size = 1000;
  std::string split = "seen";
  double apf_noise = 1.0;  // expert perturbation, fraction of one granularity step
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(CollectionSettings, episodes, workers, chunk_size, split, apf_noise)

struct EvalSettings {
  int episodes = 40;
  int workers = 4;
  std::string map_split = "seen";
  std::string prompt_split = "seen";
  eval::TrackingCriteria criteria;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EvalSettings, episodes, workers, map_split, prompt_split, criteria)

struct RunConfig {
  std::string output_dir = "runs/default";
  std::string dataset_dir;  // default: <output_dir>/dataset
  std::string checkpoint;   // default: <output_dir>/model.utck
  std::uint64_t seed = 0;
  EpisodeDefaults episode;
  CollectionSettings collection;
  model::ModelConfig model;
  model::TrainConfig train;
  EvalSettings eval;

  std::filesystem::path output_path() const { return output_dir; }
  std::filesystem::path dataset_path() const {
    return dataset_dir.empty() ? output_path() / "dataset" : std::filesystem::path(dataset_dir);
  }
  std::filesystem::path checkpoint_path() const {
    return checkpoint.empty() ? output_path() / "model.utck" : std::filesystem::path(checkpoint);
  }

  void validate() const {
    auto need = [](bool ok, const std::string& key, const std::string& what) {
      if (!ok) throw Error("config: '" + key + "' " + what);
    };
    need(!output_dir.empty(), "output_dir", "must not be empty");
    try {
      parse_target_class(episode.target_class);
    } catch (const Error&) {
      need(false, "episode.target_class", "must be vehicle, two_wheeler or pedestrian");
    }
    try {
      parse_tier(episode.distance_tier);
    } catch (const Error&) {
      need(false, "episode.distance_tier", "must be close, suitable or far");
    }
    need(episode.horizon >= 1, "episode.horizon", "must be >= 1");
    need(episode.n_vehicles >= 0, "episode.n_vehicles", "must be >= 0");
    need(episode.n_pedestrians >= 0, "episode.n_pedestrians", "must be >= 0");
    need(collection.episodes >= 1, "collection.episodes", "must be >= 1");
    need(collection.workers >= 1, "collection.workers", "must be >= 1");
    need(collection.chunk_size >= 1, "collection.chunk_size", "must be >= 1");
    need(collection.split == "seen" || collection.split == "unseen", "collection.split", "must be seen or unseen");
    need(collection.apf_noise >= 0, "collection.apf_noise", "must be >= 0");
    need(eval.episodes >= 1, "eval.episodes", "must be >= 1");
    need(eval.workers >= 1, "eval.workers", "must be >= 1");
    need(eval.map_split == "seen" || eval.map_split == "unseen", "eval.map_split", "must be seen or unseen");
    need(eval.prompt_split == "seen" || eval.prompt_split == "unseen", "eval.prompt_split", "must be seen or unseen");
    auto nested = [](const std::string& section, auto&& fn) {
      try {
        fn();
      } catch (const Error& e) {
        throw Error("config: section '" + section + "': " + e.what());
      }
    };
    nested("model", [&] {
      model::ModelConfig m = model;
      if (m.vocab_size == 0) m.vocab_size = 2;  // filled from the prompt vocabulary
      m.validate();
    });
    nested("train", [&] { train.validate(); });
    nested("eval.criteria", [&] { eval.criteria.validate(); });
  }
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(RunConfig, output_dir, dataset_dir, checkpoint, seed, episode,
                                                collection, model, train, eval)

namespace detail {

inline std::string json_kind(const nlohmann::json& j) {
  if (j.is_number_integer()) return "integer";
  if (j.is_number()) return "number";
  return j.type_name();
}

/// Walks `given` against the defaults: every key must exist there with a
/// compatible type (integers are accepted where numbers are expected).
inline void check_keys(const nlohmann::json& given, const nlohmann::json& defaults, const std::string& path) {
  if (!given.is_object()) throw Error("config: '" + path + "' must be an object");
  for (const auto& [key, value] : given.items()) {
    const std::string full = path.empty() ? key : path + "." + key;
    if (!defaults.contains(key)) throw Error("config: unknown key '" + full + "'");
    const auto& d = defaults.at(key);
    if (d.is_object()) {
      check_keys(value, d, full);
      continue;
    }
    const bool ok = d.is_number_integer() ? value.is_number_integer()
                    : d.is_number()        ? value.is_number()
                                           : d.type() == value.type();
    if (!ok) throw Error("config: '" + full + "' must be " + json_kind(d) + ", got " + json_kind(value));
    if (d.is_number_unsigned() && value.is_number_integer() && value.get<long long>() < 0)
      throw Error("config: '" + full + "' must be non-negative");
  }
}

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& j) {
  detail::check_keys(j, nlohmann::json(RunConfig{}), "");
  RunConfig c = j.get<RunConfig>();
  c.validate();
  return c;
}

/// Reads and validates a config file. UAVTRACK_OUTPUT_DIR, when set,
/// replaces output_dir.
inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("config '" + path.string() + "': " + e.what());
  }
  RunConfig c = parse_config(j);
  if (const char* env = std::getenv("UAVTRACK_OUTPUT_DIR"); env && *env) c.output_dir = env;
  return c;
}

}  // namespace uavtrack
