#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "fdisim/env.hpp"
#include "fdisim/errors.hpp"
#include "fdisim/grid.hpp"
#include "fdisim/nn.hpp"
#include "fdisim/policy.hpp"
#include "fdisim/ppo.hpp"
#include "fdisim/text.hpp"
#include "fdisim/version.hpp"

#include "json.hpp"

namespace fdisim {

// =============================================================================
// Artifact writers
// =============================================================================
//
// All numeric CSV/JSON output uses shortest round-trip decimals, so re-running
// a command with identical inputs reproduces identical bytes and files parse
// back to the exact values.

namespace detail {

inline std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot open for writing: " + path.string());
  }
  return out;
}

inline void finish_write(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

}  // namespace detail

/// CSV header t,theta_0..theta_{n-1},omega_0..omega_{n-1}; one row per state,
/// t = step index * dt.
inline void export_trajectory_csv(const Trajectory& traj, std::ostream& out) {
  if (traj.states.empty()) {
    throw UsageError("export_trajectory_csv: empty trajectory");
  }
  const std::size_t n = traj.states.front().size();
  out << 't';
  for (std::size_t i = 0; i < n; ++i) {
    out << ",theta_" << i;
  }
  for (std::size_t i = 0; i < n; ++i) {
    out << ",omega_" << i;
  }
  out << '\n';
  for (std::size_t s = 0; s < traj.states.size(); ++s) {
    out << format_double(static_cast<double>(s) * traj.dt);
    for (std::size_t i = 0; i < n; ++i) {
      out << ',' << format_double(traj.states[s].theta[i]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      out << ',' << format_double(traj.states[s].omega[i]);
    }
    out << '\n';
  }
}

inline void export_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path) {
  auto out = detail::open_for_write(path);
  export_trajectory_csv(traj, out);
  detail::finish_write(out, path);
}

inline void export_metrics_csv(const std::vector<TrainingMetricsRow>& rows, std::ostream& out) {
  out << "global_step,mean_episode_reward,policy_loss,value_loss,entropy\n";
  for (const auto& row : rows) {
    out << row.global_step << ',' << format_double(row.mean_episode_reward) << ','
        << format_double(row.policy_loss) << ',' << format_double(row.value_loss) << ','
        << format_double(row.entropy) << '\n';
  }
}

inline void export_metrics_csv(const std::vector<TrainingMetricsRow>& rows,
                               const std::filesystem::path& path) {
  auto out = detail::open_for_write(path);
  export_metrics_csv(rows, out);
  detail::finish_write(out, path);
}

/// CSV header step,target_bus,coefficient; one row per executed step.
inline void export_schedule_csv(const std::vector<AttackAction>& schedule, std::ostream& out) {
  out << "step,target_bus,coefficient\n";
  for (std::size_t t = 0; t < schedule.size(); ++t) {
    out << t << ',' << schedule[t].target << ',' << format_double(schedule[t].coefficient)
        << '\n';
  }
}

inline void export_schedule_csv(const std::vector<AttackAction>& schedule,
                                const std::filesystem::path& path) {
  auto out = detail::open_for_write(path);
  export_schedule_csv(schedule, out);
  detail::finish_write(out, path);
}

inline nlohmann::ordered_json equilibrium_to_json(const GridState& state,
                                                  double residual_inf_norm) {
  nlohmann::ordered_json doc;
  doc["theta"] = state.theta;
  doc["omega"] = state.omega;
  doc["residual_inf_norm"] = residual_inf_norm;
  return doc;
}

// =============================================================================
// Checkpoints
// =============================================================================
//
// A checkpoint is a versioned JSON document with every named tensor (shape +
// row-major values), the optimizer state, and the configuration hash of the
// run that produced it. Loading verifies every shape.

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  std::size_t n = 0;
  std::size_t kappa_size = 0;
  Policy policy{1, 1};
  std::size_t optimizer_step = 0;
  AdamConfig optimizer_config;
  std::vector<std::vector<double>> first_moments;
  std::vector<std::vector<double>> second_moments;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string tool_version;
};

inline nlohmann::ordered_json checkpoint_to_json(Policy& policy, const Adam& adam,
                                                 const std::string& config_hash,
                                                 std::uint64_t seed) {
  nlohmann::ordered_json doc;
  doc["format"] = "fdisim-checkpoint";
  doc["format_version"] = kCheckpointFormatVersion;
  doc["tool_version"] = kVersion;
  doc["config_hash"] = config_hash;
  doc["seed"] = seed;
  doc["n"] = policy.n();
  doc["kappa_size"] = policy.kappa_size();

  nlohmann::ordered_json tensors;
  std::vector<ParamRef> refs = policy.parameter_refs();
  for (const auto& ref : refs) {
    tensors[ref.name] = {{"shape", ref.shape}, {"data", *ref.value}};
  }
  doc["tensors"] = std::move(tensors);

  nlohmann::ordered_json opt;
  opt["step"] = adam.step_count();
  opt["learning_rate"] = adam.config().learning_rate;
  opt["beta1"] = adam.config().beta1;
  opt["beta2"] = adam.config().beta2;
  opt["epsilon"] = adam.config().epsilon;
  nlohmann::ordered_json moments;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    moments[refs[i].name] = {{"m", adam.first_moments()[i]}, {"v", adam.second_moments()[i]}};
  }
  opt["moments"] = std::move(moments);
  doc["optimizer"] = std::move(opt);
  return doc;
}

inline void save_checkpoint(const std::filesystem::path& path, Policy& policy, const Adam& adam,
                            const std::string& config_hash, std::uint64_t seed) {
  auto out = detail::open_for_write(path);
  out << checkpoint_to_json(policy, adam, config_hash, seed).dump(2) << '\n';
  detail::finish_write(out, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open checkpoint: " + path.string());
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& err) {
    throw ConfigError("malformed checkpoint " + path.string() + ": " + err.what());
  }
  if (doc.value("format", "") != "fdisim-checkpoint") {
    throw ConfigError("checkpoint " + path.string() + ": unrecognised format field");
  }
  if (doc.value("format_version", -1) != kCheckpointFormatVersion) {
    throw ConfigError("checkpoint " + path.string() + ": unsupported format_version");
  }

  Checkpoint ckpt;
  ckpt.n = doc.at("n").get<std::size_t>();
  ckpt.kappa_size = doc.at("kappa_size").get<std::size_t>();
  ckpt.config_hash = doc.value("config_hash", "");
  ckpt.seed = doc.value("seed", std::uint64_t{0});
  ckpt.tool_version = doc.value("tool_version", "");
  ckpt.policy = Policy(ckpt.n, ckpt.kappa_size);

  const auto& tensors = doc.at("tensors");
  std::vector<ParamRef> refs = ckpt.policy.parameter_refs();
  for (auto& ref : refs) {
    if (!tensors.contains(ref.name)) {
      throw ConfigError("checkpoint " + path.string() + ": missing tensor " + ref.name);
    }
    const auto& entry = tensors.at(ref.name);
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    if (shape != ref.shape) {
      throw ConfigError("checkpoint " + path.string() + ": tensor " + ref.name +
                        " has mismatched shape");
    }
    const auto data = entry.at("data").get<std::vector<double>>();
    if (data.size() != ref.value->size()) {
      throw ConfigError("checkpoint " + path.string() + ": tensor " + ref.name +
                        " has mismatched element count");
    }
    *ref.value = data;
  }

  const auto& opt = doc.at("optimizer");
  ckpt.optimizer_step = opt.at("step").get<std::size_t>();
  ckpt.optimizer_config.learning_rate = opt.at("learning_rate").get<double>();
  ckpt.optimizer_config.beta1 = opt.at("beta1").get<double>();
  ckpt.optimizer_config.beta2 = opt.at("beta2").get<double>();
  ckpt.optimizer_config.epsilon = opt.at("epsilon").get<double>();
  const auto& moments = opt.at("moments");
  for (const auto& ref : refs) {
    if (!moments.contains(ref.name)) {
      throw ConfigError("checkpoint " + path.string() + ": missing moments for " + ref.name);
    }
    auto m = moments.at(ref.name).at("m").get<std::vector<double>>();
    auto v = moments.at(ref.name).at("v").get<std::vector<double>>();
    if (m.size() != ref.value->size() || v.size() != ref.value->size()) {
      throw ConfigError("checkpoint " + path.string() + ": moment shape mismatch for " +
                        ref.name);
    }
    ckpt.first_moments.push_back(std::move(m));
    ckpt.second_moments.push_back(std::move(v));
  }
  return ckpt;
}

}  // namespace fdisim
