#pragma once

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "fdisim/brute_force.hpp"
#include "fdisim/config.hpp"
#include "fdisim/errors.hpp"
#include "fdisim/io.hpp"
#include "fdisim/ppo.hpp"
#include "fdisim/text.hpp"
#include "fdisim/version.hpp"

namespace fdisim {

// =============================================================================
// Command orchestration
// =============================================================================
//
// Five commands share one configuration file. Every CSV artifact starts with
// `#`-prefixed metadata lines (tool version, command, config hash, seeds);
// JSON artifacts carry the same fields in a "meta" object. Re-running a
// command with identical inputs reproduces identical bytes.

enum class Command { kSimulate, kEquilibrium, kBruteForce, kTrain, kEvaluate };

inline const char* command_name(Command cmd) {
  switch (cmd) {
    case Command::kSimulate:
      return "simulate";
    case Command::kEquilibrium:
      return "equilibrium";
    case Command::kBruteForce:
      return "bruteforce";
    case Command::kTrain:
      return "train";
    case Command::kEvaluate:
      return "evaluate";
  }
  return "?";
}

struct RunOverrides {
  std::optional<std::uint64_t> seed;  ///< replaces both episode.seed and ppo.seed
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::filesystem::path> checkpoint;  ///< required by evaluate
  std::optional<std::uint64_t> total_steps;         ///< replaces ppo.total_env_steps
};

/// Parse the config file and apply command-line overrides; the config hash
/// reflects the overridden values.
inline RunConfig load_run_config(const std::filesystem::path& config_path,
                                 const RunOverrides& overrides) {
  RunConfig cfg = parse_config(config_path);
  if (overrides.seed) {
    cfg.episode.seed = *overrides.seed;
    cfg.ppo.seed = *overrides.seed;
  }
  if (overrides.total_steps) {
    cfg.ppo.total_env_steps = *overrides.total_steps;
    cfg.ppo.validate();
  }
  if (overrides.output_dir) {
    cfg.output_dir = *overrides.output_dir;
  }
  cfg.config_hash = compute_config_hash(cfg);
  return cfg;
}

namespace detail {

inline void write_csv_metadata(std::ostream& out, Command cmd, const RunConfig& cfg,
                               bool with_ppo_seed) {
  out << "# fdisim " << kVersion << '\n';
  out << "# command=" << command_name(cmd) << '\n';
  out << "# config_hash=" << cfg.config_hash << '\n';
  out << "# episode_seed=" << cfg.episode.seed << '\n';
  if (with_ppo_seed) {
    out << "# ppo_seed=" << cfg.ppo.seed << '\n';
  }
}

inline nlohmann::ordered_json meta_json(Command cmd, const RunConfig& cfg, bool with_ppo_seed) {
  nlohmann::ordered_json meta;
  meta["tool_version"] = kVersion;
  meta["command"] = command_name(cmd);
  meta["config_hash"] = cfg.config_hash;
  meta["episode_seed"] = cfg.episode.seed;
  if (with_ppo_seed) {
    meta["ppo_seed"] = cfg.ppo.seed;
  }
  return meta;
}

inline void write_json_artifact(const std::filesystem::path& path, nlohmann::ordered_json doc) {
  auto out = open_for_write(path);
  out << doc.dump(2) << '\n';
  finish_write(out, path);
}

}  // namespace detail

/// Execute one command against a parsed configuration. Artifacts land in
/// cfg.output_dir (created if absent). Returns the artifact paths written.
inline std::vector<std::filesystem::path> run_command(Command cmd, const RunConfig& cfg,
                                                      const RunOverrides& overrides = {},
                                                      std::ostream& log = std::cout) {
  std::filesystem::create_directories(cfg.output_dir);
  std::vector<std::filesystem::path> written;
  auto artifact = [&](const std::string& name) { return cfg.output_dir / name; };

  switch (cmd) {
    case Command::kSimulate: {
      Env env(cfg.system, cfg.episode);
      const auto path = artifact("trajectory.csv");
      auto out = detail::open_for_write(path);
      detail::write_csv_metadata(out, cmd, cfg, false);
      export_trajectory_csv(env.baseline(), out);
      detail::finish_write(out, path);
      written.push_back(path);
      log << "simulate: wrote " << path.string() << " (" << cfg.episode.steps << " steps)\n";
      break;
    }
    case Command::kEquilibrium: {
      GridState eq = solve_equilibrium(cfg.system);
      std::vector<double> pe = electrical_power(cfg.system, eq.theta);
      double residual = 0.0;
      for (std::size_t i = 0; i < cfg.system.n; ++i) {
        residual = std::max(residual, std::abs(cfg.system.injection[i] - pe[i]));
      }
      nlohmann::ordered_json doc;
      doc["meta"] = detail::meta_json(cmd, cfg, false);
      doc.update(equilibrium_to_json(eq, residual));
      const auto path = artifact("equilibrium.json");
      detail::write_json_artifact(path, std::move(doc));
      written.push_back(path);
      log << "equilibrium: wrote " << path.string() << " (residual " << residual << ")\n";
      break;
    }
    case Command::kBruteForce: {
      auto results = enumerate_constant_attacks(cfg.system, cfg.episode);
      const auto csv_path = artifact("ranking.csv");
      {
        auto out = detail::open_for_write(csv_path);
        detail::write_csv_metadata(out, cmd, cfg, false);
        export_ranking_csv(results, out);
        detail::finish_write(out, csv_path);
      }
      written.push_back(csv_path);
      nlohmann::ordered_json doc;
      doc["meta"] = detail::meta_json(cmd, cfg, false);
      doc["results"] = ranking_to_json(results);
      const auto json_path = artifact("ranking.json");
      detail::write_json_artifact(json_path, std::move(doc));
      written.push_back(json_path);
      log << "bruteforce: " << results.size() << " actions, best (target="
          << results.front().action.target
          << ", k'=" << format_double(results.front().action.coefficient)
          << ") reward=" << format_double(results.front().cumulative_reward) << '\n';
      break;
    }
    case Command::kTrain: {
      TrainCallbacks callbacks;
      callbacks.on_checkpoint = [&](CheckpointReason reason, std::size_t update_index,
                                    Policy& policy, Adam& adam) {
        std::string name;
        if (reason == CheckpointReason::kFinal) {
          name = "checkpoint_final.json";
        } else {
          std::ostringstream oss;
          oss << "checkpoint_" << std::setw(6) << std::setfill('0') << update_index << ".json";
          name = oss.str();
        }
        const auto path = artifact(name);
        save_checkpoint(path, policy, adam, cfg.config_hash, cfg.ppo.seed);
        written.push_back(path);
      };
      TrainResult result = train(cfg.system, cfg.episode, cfg.ppo, callbacks);
      const auto metrics_path = artifact("metrics.csv");
      {
        auto out = detail::open_for_write(metrics_path);
        detail::write_csv_metadata(out, cmd, cfg, true);
        export_metrics_csv(result.metrics, out);
        detail::finish_write(out, metrics_path);
      }
      written.push_back(metrics_path);
      if (cfg.save_best_checkpoint) {
        Adam snapshot_opt(result.best_policy.parameter_refs(),
                          AdamConfig{cfg.ppo.learning_rate, 0.9, 0.999, 1e-8});
        const auto best_path = artifact("checkpoint_best.json");
        save_checkpoint(best_path, result.best_policy, snapshot_opt, cfg.config_hash,
                        cfg.ppo.seed);
        written.push_back(best_path);
      }
      log << "train: " << result.metrics.size() << " updates, best greedy reward "
          << format_double(result.best_greedy_reward) << " at update " << result.best_update
          << '\n';
      break;
    }
    case Command::kEvaluate: {
      if (!overrides.checkpoint) {
        throw UsageError("evaluate requires --checkpoint");
      }
      Checkpoint ckpt = load_checkpoint(*overrides.checkpoint);
      if (ckpt.n != cfg.system.n || ckpt.kappa_size != cfg.episode.kappa.size()) {
        throw ConfigError("checkpoint shape (n=" + std::to_string(ckpt.n) + ", kappa=" +
                          std::to_string(ckpt.kappa_size) +
                          ") does not match the configuration (n=" +
                          std::to_string(cfg.system.n) + ", kappa=" +
                          std::to_string(cfg.episode.kappa.size()) + ")");
      }
      Env env(cfg.system, cfg.episode);
      EvaluationResult eval = evaluate_policy(ckpt.policy, env);
      const auto schedule_path = artifact("schedule.csv");
      {
        auto out = detail::open_for_write(schedule_path);
        detail::write_csv_metadata(out, cmd, cfg, true);
        export_schedule_csv(eval.schedule, out);
        detail::finish_write(out, schedule_path);
      }
      written.push_back(schedule_path);
      const auto response_path = artifact("response.csv");
      {
        auto out = detail::open_for_write(response_path);
        detail::write_csv_metadata(out, cmd, cfg, true);
        export_trajectory_csv(eval.trajectory, out);
        detail::finish_write(out, response_path);
      }
      written.push_back(response_path);
      log << "evaluate: cumulative reward " << format_double(eval.cumulative_reward) << " over "
          << eval.schedule.size() << " steps\n";
      break;
    }
  }
  return written;
}

/// Classify an exception for the machine-readable error record.
inline const char* error_kind(const std::exception& err) {
  if (dynamic_cast<const ConfigError*>(&err)) return "config";
  if (dynamic_cast<const UsageError*>(&err)) return "usage";
  if (dynamic_cast<const IoError*>(&err)) return "io";
  if (dynamic_cast<const NumericOverflowError*>(&err)) return "numeric_overflow";
  if (dynamic_cast<const EquilibriumError*>(&err)) return "equilibrium";
  return "internal";
}

/// Run a command end to end for the CLI: parse config, apply overrides,
/// execute, and on failure emit a one-line JSON error record to `err`.
/// Returns the process exit status.
inline int run_cli_command(Command cmd, const std::filesystem::path& config_path,
                           const RunOverrides& overrides, std::ostream& log = std::cout,
                           std::ostream& err = std::cerr) {
  try {
    RunConfig cfg = load_run_config(config_path, overrides);
    run_command(cmd, cfg, overrides, log);
    return 0;
  } catch (const std::exception& ex) {
    nlohmann::ordered_json record;
    record["error"] = {{"kind", error_kind(ex)}, {"message", ex.what()},
                       {"command", command_name(cmd)}};
    err << record.dump() << '\n';
    return 1;
  }
}

}  // namespace fdisim
