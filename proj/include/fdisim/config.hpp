#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "fdisim/env.hpp"
#include "fdisim/errors.hpp"
#include "fdisim/grid.hpp"
#include "fdisim/ppo.hpp"
#include "fdisim/text.hpp"
#include "fdisim/version.hpp"

#include "json.hpp"

namespace fdisim {

// =============================================================================
// Run configuration
// =============================================================================
//
// One JSON document configures every command. Unknown keys are rejected,
// every default is explicit in the code below, and the hash of the fully
// resolved configuration is stamped into every artifact so outputs can be
// traced back to exact settings.
//
// {
//   "system": "default_10bus" | "relative/path.json" | { ...inline params... },
//   "episode": { "steps", "dt", "ic_noise_half_width", "seed", "kappa", "reward_mode" },
//   "ppo": { "clip_epsilon", "value_loss_coef", "entropy_coef", "learning_rate",
//            "gamma", "gae_lambda", "rollout_steps", "minibatch_size",
//            "update_epochs", "total_env_steps", "seed", "checkpoint_interval",
//            "max_grad_norm" },
//   "output_dir": "out",
//   "save_best_checkpoint": false
// }
//
// An inline or file-based system block:
//
// { "n": 10, "inertia": [...], "damping": [...], "injection": [...],
//   "droop": [...], "lines": [[i, j, b], ...] }
//
// "susceptance" (full n x n matrix) is accepted in place of "lines".

struct RunConfig {
  GridParams system;
  EpisodeConfig episode;
  PPOConfig ppo;
  std::filesystem::path output_dir = "out";
  bool save_best_checkpoint = false;
  std::string config_hash;  ///< FNV-1a of the resolved configuration
};

inline std::string compute_config_hash(const RunConfig& cfg);

namespace detail {

using json = nlohmann::json;

inline void reject_unknown_keys(const json& obj, const std::string& path,
                                const std::set<std::string>& allowed) {
  for (const auto& item : obj.items()) {
    if (!allowed.count(item.key())) {
      throw ConfigError(path + "." + item.key() + ": unknown key");
    }
  }
}

inline double require_number(const json& obj, const std::string& path, const std::string& key,
                             double fallback, bool* present = nullptr) {
  if (!obj.contains(key)) {
    if (present) {
      *present = false;
    }
    return fallback;
  }
  if (present) {
    *present = true;
  }
  const json& v = obj.at(key);
  if (!v.is_number()) {
    throw ConfigError(path + "." + key + ": expected a number");
  }
  return v.get<double>();
}

inline std::uint64_t require_uint(const json& obj, const std::string& path,
                                  const std::string& key, std::uint64_t fallback) {
  if (!obj.contains(key)) {
    return fallback;
  }
  const json& v = obj.at(key);
  if (!v.is_number_integer() || (v.is_number_integer() && v.get<std::int64_t>() < 0)) {
    throw ConfigError(path + "." + key + ": expected a nonnegative integer");
  }
  return v.get<std::uint64_t>();
}

inline std::vector<double> require_vector(const json& obj, const std::string& path,
                                          const std::string& key, std::size_t expected) {
  if (!obj.contains(key)) {
    throw ConfigError(path + "." + key + ": missing required array");
  }
  const json& v = obj.at(key);
  if (!v.is_array() || (expected > 0 && v.size() != expected)) {
    throw ConfigError(path + "." + key + ": expected an array of length " +
                      std::to_string(expected));
  }
  std::vector<double> out;
  out.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) {
      throw ConfigError(path + "." + key + "[" + std::to_string(i) + "]: expected a number");
    }
    out.push_back(v[i].get<double>());
  }
  return out;
}

inline GridParams parse_system_object(const json& obj, const std::string& path) {
  if (!obj.is_object()) {
    throw ConfigError(path + ": expected an object, a system name, or a file path");
  }
  reject_unknown_keys(obj, path,
                      {"n", "inertia", "damping", "injection", "droop", "lines", "susceptance"});
  GridParams params;
  if (!obj.contains("n") || !obj.at("n").is_number_integer() ||
      obj.at("n").get<std::int64_t>() < 1) {
    throw ConfigError(path + ".n: expected a positive integer bus count");
  }
  params.n = obj.at("n").get<std::size_t>();
  params.inertia = require_vector(obj, path, "inertia", params.n);
  params.damping = require_vector(obj, path, "damping", params.n);
  params.injection = require_vector(obj, path, "injection", params.n);
  params.droop = require_vector(obj, path, "droop", params.n);

  const bool has_lines = obj.contains("lines");
  const bool has_matrix = obj.contains("susceptance");
  if (has_lines == has_matrix) {
    throw ConfigError(path + ": exactly one of 'lines' or 'susceptance' is required");
  }
  params.susceptance.assign(params.n * params.n, 0.0);
  if (has_lines) {
    const json& lines = obj.at("lines");
    if (!lines.is_array()) {
      throw ConfigError(path + ".lines: expected an array of [i, j, b] triples");
    }
    for (std::size_t r = 0; r < lines.size(); ++r) {
      const std::string lp = path + ".lines[" + std::to_string(r) + "]";
      const json& line = lines[r];
      if (!line.is_array() || line.size() != 3 || !line[0].is_number_integer() ||
          !line[1].is_number_integer() || !line[2].is_number()) {
        throw ConfigError(lp + ": expected [bus, bus, susceptance]");
      }
      const auto i = line[0].get<std::int64_t>();
      const auto j = line[1].get<std::int64_t>();
      const double b = line[2].get<double>();
      if (i < 0 || j < 0 || static_cast<std::size_t>(i) >= params.n ||
          static_cast<std::size_t>(j) >= params.n || i == j) {
        throw ConfigError(lp + ": bus indices out of range or equal");
      }
      const std::size_t ii = static_cast<std::size_t>(i);
      const std::size_t jj = static_cast<std::size_t>(j);
      if (params.susceptance[ii * params.n + jj] != 0.0) {
        throw ConfigError(lp + ": duplicate line");
      }
      params.susceptance[ii * params.n + jj] = b;
      params.susceptance[jj * params.n + ii] = b;
    }
  } else {
    const json& matrix = obj.at("susceptance");
    if (!matrix.is_array() || matrix.size() != params.n) {
      throw ConfigError(path + ".susceptance: expected " + std::to_string(params.n) + " rows");
    }
    for (std::size_t i = 0; i < params.n; ++i) {
      const std::string rp = path + ".susceptance[" + std::to_string(i) + "]";
      const json& row = matrix[i];
      if (!row.is_array() || row.size() != params.n) {
        throw ConfigError(rp + ": expected an array of length " + std::to_string(params.n));
      }
      for (std::size_t j = 0; j < params.n; ++j) {
        if (!row[j].is_number()) {
          throw ConfigError(rp + "[" + std::to_string(j) + "]: expected a number");
        }
        params.susceptance[i * params.n + j] = row[j].get<double>();
      }
    }
  }
  params.validate();
  return params;
}

inline json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open file: " + path.string());
  }
  try {
    return json::parse(in);
  } catch (const json::parse_error& err) {
    throw ConfigError("malformed JSON in " + path.string() + ": " + err.what());
  }
}

}  // namespace detail

/// Resolve the "system" entry of a run configuration: a registered name,
/// a path relative to `base_dir`, or an inline parameter object.
inline GridParams load_system(const nlohmann::json& value,
                              const std::filesystem::path& base_dir) {
  if (value.is_string()) {
    const std::string name = value.get<std::string>();
    if (name == "default_10bus") {
      return default_10bus();
    }
    std::filesystem::path file = name;
    if (file.is_relative()) {
      file = base_dir / file;
    }
    nlohmann::json doc = detail::load_json_file(file);
    return detail::parse_system_object(doc, "system");
  }
  return detail::parse_system_object(value, "system");
}

/// Parse and validate a run configuration file, applying documented defaults
/// for every omitted optional field. The returned config carries the hash of
/// the fully resolved settings.
inline RunConfig parse_config(const std::filesystem::path& path) {
  using detail::json;
  json doc = detail::load_json_file(path);
  if (!doc.is_object()) {
    throw ConfigError("config root: expected an object");
  }
  detail::reject_unknown_keys(doc, "config",
                              {"system", "episode", "ppo", "output_dir", "save_best_checkpoint"});
  if (!doc.contains("system")) {
    throw ConfigError("config.system: missing (name, path, or inline object)");
  }

  RunConfig cfg;
  cfg.system = load_system(doc.at("system"), path.parent_path());

  json episode = doc.value("episode", json::object());
  if (!episode.is_object()) {
    throw ConfigError("episode: expected an object");
  }
  detail::reject_unknown_keys(
      episode, "episode", {"steps", "dt", "ic_noise_half_width", "seed", "kappa", "reward_mode"});
  cfg.episode.steps = detail::require_uint(episode, "episode", "steps", 500);
  cfg.episode.dt = detail::require_number(episode, "episode", "dt", 0.01);
  cfg.episode.ic_noise_half_width =
      detail::require_number(episode, "episode", "ic_noise_half_width", 0.03);
  cfg.episode.seed = detail::require_uint(episode, "episode", "seed", 0);
  if (episode.contains("kappa")) {
    cfg.episode.kappa = detail::require_vector(episode, "episode", "kappa", 0);
  }
  if (episode.contains("reward_mode")) {
    const json& mode = episode.at("reward_mode");
    if (mode == "abs_deviation_diff") {
      cfg.episode.reward_mode = RewardMode::kAbsDeviationDiff;
    } else if (mode == "signed_diff") {
      cfg.episode.reward_mode = RewardMode::kSignedDiff;
    } else {
      throw ConfigError("episode.reward_mode: expected 'abs_deviation_diff' or 'signed_diff'");
    }
  }
  cfg.episode.validate();

  json ppo = doc.value("ppo", json::object());
  if (!ppo.is_object()) {
    throw ConfigError("ppo: expected an object");
  }
  detail::reject_unknown_keys(ppo, "ppo",
                              {"clip_epsilon", "value_loss_coef", "entropy_coef", "learning_rate",
                               "gamma", "gae_lambda", "rollout_steps", "minibatch_size",
                               "update_epochs", "total_env_steps", "seed", "checkpoint_interval",
                               "max_grad_norm"});
  PPOConfig defaults;
  cfg.ppo.clip_epsilon = detail::require_number(ppo, "ppo", "clip_epsilon", defaults.clip_epsilon);
  cfg.ppo.value_loss_coef =
      detail::require_number(ppo, "ppo", "value_loss_coef", defaults.value_loss_coef);
  cfg.ppo.entropy_coef = detail::require_number(ppo, "ppo", "entropy_coef", defaults.entropy_coef);
  cfg.ppo.learning_rate =
      detail::require_number(ppo, "ppo", "learning_rate", defaults.learning_rate);
  cfg.ppo.gamma = detail::require_number(ppo, "ppo", "gamma", defaults.gamma);
  cfg.ppo.gae_lambda = detail::require_number(ppo, "ppo", "gae_lambda", defaults.gae_lambda);
  cfg.ppo.rollout_steps = detail::require_uint(ppo, "ppo", "rollout_steps", defaults.rollout_steps);
  cfg.ppo.minibatch_size =
      detail::require_uint(ppo, "ppo", "minibatch_size", defaults.minibatch_size);
  cfg.ppo.update_epochs = detail::require_uint(ppo, "ppo", "update_epochs", defaults.update_epochs);
  cfg.ppo.total_env_steps =
      detail::require_uint(ppo, "ppo", "total_env_steps", defaults.total_env_steps);
  cfg.ppo.seed = detail::require_uint(ppo, "ppo", "seed", 0);
  cfg.ppo.checkpoint_interval =
      detail::require_uint(ppo, "ppo", "checkpoint_interval", defaults.checkpoint_interval);
  cfg.ppo.max_grad_norm =
      detail::require_number(ppo, "ppo", "max_grad_norm", defaults.max_grad_norm);
  cfg.ppo.validate();

  if (doc.contains("output_dir")) {
    if (!doc.at("output_dir").is_string()) {
      throw ConfigError("config.output_dir: expected a string");
    }
    cfg.output_dir = doc.at("output_dir").get<std::string>();
  }
  if (doc.contains("save_best_checkpoint")) {
    if (!doc.at("save_best_checkpoint").is_boolean()) {
      throw ConfigError("config.save_best_checkpoint: expected a boolean");
    }
    cfg.save_best_checkpoint = doc.at("save_best_checkpoint").get<bool>();
  }

  cfg.config_hash = compute_config_hash(cfg);
  return cfg;
}

/// Canonical serialisation of the resolved configuration; hashing this pins
/// artifacts to exact settings including applied defaults and overrides.
inline nlohmann::ordered_json resolved_config_json(const RunConfig& cfg) {
  nlohmann::ordered_json sys;
  sys["n"] = cfg.system.n;
  sys["inertia"] = cfg.system.inertia;
  sys["damping"] = cfg.system.damping;
  sys["injection"] = cfg.system.injection;
  sys["droop"] = cfg.system.droop;
  sys["susceptance"] = cfg.system.susceptance;
  nlohmann::ordered_json episode;
  episode["steps"] = cfg.episode.steps;
  episode["dt"] = cfg.episode.dt;
  episode["ic_noise_half_width"] = cfg.episode.ic_noise_half_width;
  episode["seed"] = cfg.episode.seed;
  episode["kappa"] = cfg.episode.kappa;
  episode["reward_mode"] =
      cfg.episode.reward_mode == RewardMode::kAbsDeviationDiff ? "abs_deviation_diff"
                                                               : "signed_diff";
  nlohmann::ordered_json ppo;
  ppo["clip_epsilon"] = cfg.ppo.clip_epsilon;
  ppo["value_loss_coef"] = cfg.ppo.value_loss_coef;
  ppo["entropy_coef"] = cfg.ppo.entropy_coef;
  ppo["learning_rate"] = cfg.ppo.learning_rate;
  ppo["gamma"] = cfg.ppo.gamma;
  ppo["gae_lambda"] = cfg.ppo.gae_lambda;
  ppo["rollout_steps"] = cfg.ppo.rollout_steps;
  ppo["minibatch_size"] = cfg.ppo.minibatch_size;
  ppo["update_epochs"] = cfg.ppo.update_epochs;
  ppo["total_env_steps"] = cfg.ppo.total_env_steps;
  ppo["seed"] = cfg.ppo.seed;
  ppo["checkpoint_interval"] = cfg.ppo.checkpoint_interval;
  ppo["max_grad_norm"] = cfg.ppo.max_grad_norm;
  nlohmann::ordered_json root;
  root["system"] = sys;
  root["episode"] = episode;
  root["ppo"] = ppo;
  root["save_best_checkpoint"] = cfg.save_best_checkpoint;
  return root;
}

inline std::string compute_config_hash(const RunConfig& cfg) {
  return fnv1a_hex(resolved_config_json(cfg).dump());
}

}  // namespace fdisim
