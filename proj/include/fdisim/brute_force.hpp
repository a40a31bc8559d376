#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "fdisim/env.hpp"
#include "fdisim/errors.hpp"
#include "fdisim/text.hpp"

#include "json.hpp"

namespace fdisim {

// =============================================================================
// Exhaustive search over time-invariant attacks
// =============================================================================
//
// With one (bus, coefficient) pair held for the whole episode there are only
// n * |kappa| distinct attacks; playing each one through the environment
// yields the exact optimum of the time-invariant action space. The best of
// these rewards is the reference value trained time-varying policies are
// measured against.

struct ConstantAttackResult {
  AttackAction action;
  std::size_t coefficient_index = 0;  ///< position of the coefficient in kappa
  double cumulative_reward = 0.0;
  std::size_t rank = 0;  ///< 1-based position after the descending sort
};

/// Play every constant attack through fresh environments and rank the
/// cumulative rewards in descending order. Ties break by (target,
/// coefficient index), ascending.
inline std::vector<ConstantAttackResult> enumerate_constant_attacks(
    const GridParams& params, const EpisodeConfig& episode) {
  std::vector<ConstantAttackResult> results;
  results.reserve(params.n * episode.kappa.size());
  for (std::size_t target = 0; target < params.n; ++target) {
    for (std::size_t ci = 0; ci < episode.kappa.size(); ++ci) {
      ConstantAttackResult row;
      row.action = AttackAction{target, episode.kappa[ci]};
      row.coefficient_index = ci;
      try {
        Env env(params, episode);
        env.reset();
        while (!env.done()) {
          env.step(row.action);
        }
        row.cumulative_reward = env.cumulative_reward();
      } catch (const Error& err) {
        throw ConfigError("constant attack (target=" + std::to_string(target) +
                          ", coefficient=" + format_double(row.action.coefficient) +
                          ") failed: " + err.what());
      }
      results.push_back(row);
    }
  }
  std::sort(results.begin(), results.end(),
            [](const ConstantAttackResult& a, const ConstantAttackResult& b) {
              if (a.cumulative_reward != b.cumulative_reward) {
                return a.cumulative_reward > b.cumulative_reward;
              }
              if (a.action.target != b.action.target) {
                return a.action.target < b.action.target;
              }
              return a.coefficient_index < b.coefficient_index;
            });
  for (std::size_t i = 0; i < results.size(); ++i) {
    results[i].rank = i + 1;
  }
  return results;
}

/// The enumerator's best reward, the baseline for acceptance comparisons.
inline double brute_force_optimum(const std::vector<ConstantAttackResult>& results) {
  if (results.empty()) {
    throw UsageError("brute_force_optimum: empty result list");
  }
  return results.front().cumulative_reward;
}

inline void export_ranking_csv(const std::vector<ConstantAttackResult>& results,
                               std::ostream& out) {
  out << "rank,target_bus,coefficient,cumulative_reward\n";
  for (const auto& row : results) {
    out << row.rank << ',' << row.action.target << ',' << format_double(row.action.coefficient)
        << ',' << format_double(row.cumulative_reward) << '\n';
  }
}

inline void export_ranking_csv(const std::vector<ConstantAttackResult>& results,
                               const std::filesystem::path& path) {
  if (results.empty()) {
    throw UsageError("export_ranking_csv: empty result list");
  }
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot open for writing: " + path.string());
  }
  export_ranking_csv(results, out);
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

inline nlohmann::ordered_json ranking_to_json(const std::vector<ConstantAttackResult>& results) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& row : results) {
    rows.push_back({{"rank", row.rank},
                    {"target_bus", row.action.target},
                    {"coefficient", row.action.coefficient},
                    {"cumulative_reward", row.cumulative_reward}});
  }
  return rows;
}

inline void export_ranking_json(const std::vector<ConstantAttackResult>& results,
                                const std::filesystem::path& path) {
  if (results.empty()) {
    throw UsageError("export_ranking_json: empty result list");
  }
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot open for writing: " + path.string());
  }
  out << nlohmann::ordered_json({{"results", ranking_to_json(results)}}).dump(2) << '\n';
  if (!out) {
    throw IoError("write failed: " + path.string());
  }
}

}  // namespace fdisim
