#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fdisim/errors.hpp"

namespace fdisim {

// =============================================================================
// Bus-level frequency dynamics
// =============================================================================
//
// Each bus i carries a voltage phase angle theta_i [rad] and a frequency
// deviation omega_i [p.u.]. The dynamics are
//
//     d theta_i / dt = omega_i
//     M_i d omega_i / dt = p_i - p_e,i - D_i omega_i - k_i omega_i
//
// with electrical power exchange p_e,i = sum_j B_ij sin(theta_i - theta_j)
// and an inverter on every bus injecting droop power k_i * omega_i.
// Integration is explicit Euler with a fixed step.

/// Any state or derivative component beyond this magnitude is treated as a
/// numeric overflow; runs fail loudly instead of drifting into NaN.
inline constexpr double kOverflowLimit = 1e6;

/// Static physical description of an n-bus system. All quantities per-unit.
struct GridParams {
  std::size_t n = 0;
  std::vector<double> inertia;      ///< M_i > 0
  std::vector<double> damping;      ///< D_i >= 0
  std::vector<double> injection;    ///< net power injection p_i
  std::vector<double> droop;        ///< designed droop coefficients k_i
  std::vector<double> susceptance;  ///< B_ij, n*n row-major, symmetric, zero diagonal

  [[nodiscard]] double b(std::size_t i, std::size_t j) const {
    return susceptance[i * n + j];
  }

  /// Check all structural invariants; throws ConfigError naming the first
  /// violated field.
  void validate() const {
    if (n < 1) {
      throw ConfigError("system.n: bus count must be >= 1");
    }
    auto check_len = [&](const std::vector<double>& v, const char* name) {
      if (v.size() != n) {
        throw ConfigError(std::string("system.") + name + ": expected length " +
                          std::to_string(n) + ", got " + std::to_string(v.size()));
      }
    };
    check_len(inertia, "inertia");
    check_len(damping, "damping");
    check_len(injection, "injection");
    check_len(droop, "droop");
    if (susceptance.size() != n * n) {
      throw ConfigError("system.susceptance: expected " + std::to_string(n * n) +
                        " entries, got " + std::to_string(susceptance.size()));
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!(inertia[i] > 0.0) || !std::isfinite(inertia[i])) {
        throw ConfigError("system.inertia[" + std::to_string(i) + "]: must be finite and > 0");
      }
      if (!(damping[i] >= 0.0) || !std::isfinite(damping[i])) {
        throw ConfigError("system.damping[" + std::to_string(i) + "]: must be finite and >= 0");
      }
      if (!std::isfinite(injection[i])) {
        throw ConfigError("system.injection[" + std::to_string(i) + "]: must be finite");
      }
      if (!std::isfinite(droop[i])) {
        throw ConfigError("system.droop[" + std::to_string(i) + "]: must be finite");
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (b(i, i) != 0.0) {
        throw ConfigError("system.susceptance[" + std::to_string(i) + "][" +
                          std::to_string(i) + "]: diagonal must be zero");
      }
      for (std::size_t j = 0; j < n; ++j) {
        const double bij = b(i, j);
        if (!std::isfinite(bij) || bij < 0.0) {
          throw ConfigError("system.susceptance[" + std::to_string(i) + "][" +
                            std::to_string(j) + "]: must be finite and >= 0");
        }
        if (bij != b(j, i)) {
          throw ConfigError("system.susceptance[" + std::to_string(i) + "][" +
                            std::to_string(j) + "]: matrix must be symmetric");
        }
      }
    }
  }
};

/// Phase angles and frequency deviations at one instant.
struct GridState {
  std::vector<double> theta;
  std::vector<double> omega;

  [[nodiscard]] std::size_t size() const { return theta.size(); }
};

/// Uniformly sampled sequence of states; states[0] is the initial condition.
struct Trajectory {
  double dt = 0.0;
  std::vector<GridState> states;

  [[nodiscard]] std::size_t steps() const { return states.empty() ? 0 : states.size() - 1; }
};

/// Index of the first non-finite or overflowing component of a state, if any.
/// Scans theta then omega; the returned index is the bus index.
inline std::optional<std::size_t> overflow_component(const GridState& state) {
  for (std::size_t i = 0; i < state.theta.size(); ++i) {
    if (!std::isfinite(state.theta[i]) || std::abs(state.theta[i]) > kOverflowLimit) {
      return i;
    }
  }
  for (std::size_t i = 0; i < state.omega.size(); ++i) {
    if (!std::isfinite(state.omega[i]) || std::abs(state.omega[i]) > kOverflowLimit) {
      return i;
    }
  }
  return std::nullopt;
}

namespace detail {

/// p_e accumulated pairwise over j > i so the two sides of every line get
/// exactly opposite contributions; the total sums to zero up to rounding.
inline void electrical_power_into(const GridParams& params, std::span<const double> theta,
                                  std::span<double> out) {
  const std::size_t n = params.n;
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double bij = params.susceptance[i * n + j];
      if (bij == 0.0) {
        continue;
      }
      const double flow = bij * std::sin(theta[i] - theta[j]);
      out[i] += flow;
      out[j] -= flow;
    }
  }
}

inline void derivatives_into(const GridParams& params, std::span<const double> theta,
                             std::span<const double> omega, std::span<const double> k_effective,
                             std::span<double> dtheta, std::span<double> domega,
                             std::span<double> scratch) {
  electrical_power_into(params, theta, scratch);
  for (std::size_t i = 0; i < params.n; ++i) {
    dtheta[i] = omega[i];
    domega[i] = (params.injection[i] - scratch[i] - params.damping[i] * omega[i] -
                 k_effective[i] * omega[i]) /
                params.inertia[i];
    if (!std::isfinite(domega[i])) {
      throw NumericOverflowError(
          "non-finite frequency derivative at bus " + std::to_string(i), i);
    }
  }
}

/// Gaussian elimination with partial pivoting; a (overwritten) is m*m
/// row-major, rhs (overwritten) becomes the solution.
inline void solve_linear(std::vector<double>& a, std::vector<double>& rhs, std::size_t m) {
  for (std::size_t col = 0; col < m; ++col) {
    std::size_t pivot = col;
    double best = std::abs(a[col * m + col]);
    for (std::size_t r = col + 1; r < m; ++r) {
      const double cand = std::abs(a[r * m + col]);
      if (cand > best) {
        best = cand;
        pivot = r;
      }
    }
    if (best < 1e-14) {
      throw EquilibriumError("singular Jacobian in equilibrium solve");
    }
    if (pivot != col) {
      for (std::size_t c = 0; c < m; ++c) {
        std::swap(a[col * m + c], a[pivot * m + c]);
      }
      std::swap(rhs[col], rhs[pivot]);
    }
    const double inv = 1.0 / a[col * m + col];
    for (std::size_t r = col + 1; r < m; ++r) {
      const double factor = a[r * m + col] * inv;
      if (factor == 0.0) {
        continue;
      }
      for (std::size_t c = col; c < m; ++c) {
        a[r * m + c] -= factor * a[col * m + c];
      }
      rhs[r] -= factor * rhs[col];
    }
  }
  for (std::size_t r = m; r-- > 0;) {
    double sum = rhs[r];
    for (std::size_t c = r + 1; c < m; ++c) {
      sum -= a[r * m + c] * rhs[c];
    }
    rhs[r] = sum / a[r * m + r];
  }
}

}  // namespace detail

/// Electrical power exchanged by every bus, p_e,i = sum_j B_ij sin(theta_i - theta_j).
/// The result sums to zero up to floating-point rounding.
inline std::vector<double> electrical_power(const GridParams& params,
                                            std::span<const double> theta) {
  if (theta.size() != params.n) {
    throw ConfigError("electrical_power: theta has length " + std::to_string(theta.size()) +
                      ", expected " + std::to_string(params.n));
  }
  std::vector<double> out(params.n);
  detail::electrical_power_into(params, theta, out);
  return out;
}

/// Droop response p_IBR,i = k_i * omega_i, elementwise.
inline std::vector<double> droop_power(std::span<const double> k_effective,
                                       std::span<const double> omega) {
  if (k_effective.size() != omega.size()) {
    throw ConfigError("droop_power: k has length " + std::to_string(k_effective.size()) +
                      ", omega has length " + std::to_string(omega.size()));
  }
  std::vector<double> out(omega.size());
  for (std::size_t i = 0; i < omega.size(); ++i) {
    out[i] = k_effective[i] * omega[i];
  }
  return out;
}

/// Time derivatives (dtheta, domega) of the swing dynamics under the given
/// effective droop vector.
inline std::pair<std::vector<double>, std::vector<double>> derivatives(
    const GridParams& params, const GridState& state, std::span<const double> k_effective) {
  if (state.theta.size() != params.n || state.omega.size() != params.n ||
      k_effective.size() != params.n) {
    throw ConfigError("derivatives: state/droop dimensions do not match n=" +
                      std::to_string(params.n));
  }
  std::vector<double> dtheta(params.n);
  std::vector<double> domega(params.n);
  std::vector<double> scratch(params.n);
  detail::derivatives_into(params, state.theta, state.omega, k_effective, dtheta, domega,
                           scratch);
  return {std::move(dtheta), std::move(domega)};
}

/// One explicit Euler step: x + dt * f(x). dt = 0 returns the state unchanged.
inline GridState euler_step(const GridParams& params, const GridState& state,
                            std::span<const double> k_effective, double dt) {
  auto [dtheta, domega] = derivatives(params, state, k_effective);
  GridState next;
  next.theta.resize(params.n);
  next.omega.resize(params.n);
  for (std::size_t i = 0; i < params.n; ++i) {
    next.theta[i] = state.theta[i] + dt * dtheta[i];
    next.omega[i] = state.omega[i] + dt * domega[i];
  }
  return next;
}

/// Integrate `steps` Euler steps from `initial`.
///
/// Without a schedule the designed droop vector applies at every step;
/// otherwise schedule[t] is the effective droop vector for the transition
/// t -> t+1 and must have length `steps`.
///
/// On numeric overflow a NumericOverflowError is thrown carrying the
/// transition index and the trajectory integrated so far.
inline Trajectory simulate(const GridParams& params, const GridState& initial, std::size_t steps,
                           double dt,
                           const std::vector<std::vector<double>>* schedule = nullptr) {
  if (initial.theta.size() != params.n || initial.omega.size() != params.n) {
    throw ConfigError("simulate: initial state dimension does not match n=" +
                      std::to_string(params.n));
  }
  if (dt < 0.0 || !std::isfinite(dt)) {
    throw ConfigError("simulate: dt must be finite and >= 0");
  }
  if (schedule != nullptr && schedule->size() != steps) {
    throw ConfigError("simulate: schedule has length " + std::to_string(schedule->size()) +
                      ", expected " + std::to_string(steps));
  }
  Trajectory traj;
  traj.dt = dt;
  traj.states.reserve(steps + 1);
  traj.states.push_back(initial);

  std::vector<double> dtheta(params.n);
  std::vector<double> domega(params.n);
  std::vector<double> scratch(params.n);
  for (std::size_t t = 0; t < steps; ++t) {
    const GridState& cur = traj.states.back();
    std::span<const double> k =
        schedule ? std::span<const double>((*schedule)[t]) : std::span<const double>(params.droop);
    if (k.size() != params.n) {
      throw ConfigError("simulate: schedule[" + std::to_string(t) + "] has length " +
                        std::to_string(k.size()) + ", expected " + std::to_string(params.n));
    }
    auto abort_with = [&](NumericOverflowError err) {
      err.set_step(t);
      err.set_partial_trajectory(std::make_shared<Trajectory>(std::move(traj)));
      throw err;
    };
    GridState next;
    next.theta.resize(params.n);
    next.omega.resize(params.n);
    try {
      detail::derivatives_into(params, cur.theta, cur.omega, k, dtheta, domega, scratch);
    } catch (NumericOverflowError& err) {
      abort_with(std::move(err));
    }
    for (std::size_t i = 0; i < params.n; ++i) {
      next.theta[i] = cur.theta[i] + dt * dtheta[i];
      next.omega[i] = cur.omega[i] + dt * domega[i];
    }
    if (auto bad = overflow_component(next)) {
      abort_with(NumericOverflowError(
          "state overflow at bus " + std::to_string(*bad) + " during step " + std::to_string(t),
          *bad));
    }
    traj.states.push_back(std::move(next));
  }
  return traj;
}

/// Solve for the steady state (theta*, omega*=0) with bus 0 as the angle
/// reference (theta*_0 = 0), by damped Newton iteration on the reduced
/// (n-1)-dimensional injection balance p_i = p_e,i(theta).
///
/// Throws EquilibriumError if the full residual infinity norm cannot be
/// brought below `tolerance` (for example when injections exceed what the
/// lines can carry, |sin| <= 1).
inline GridState solve_equilibrium(const GridParams& params, double tolerance = 1e-10,
                                   std::size_t max_iterations = 50) {
  params.validate();
  const std::size_t n = params.n;
  GridState eq;
  eq.theta.assign(n, 0.0);
  eq.omega.assign(n, 0.0);

  std::vector<double> pe(n);
  auto residual_inf = [&]() {
    detail::electrical_power_into(params, eq.theta, pe);
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      worst = std::max(worst, std::abs(params.injection[i] - pe[i]));
    }
    return worst;
  };

  if (n == 1) {
    if (residual_inf() > tolerance) {
      throw EquilibriumError("no equilibrium: single-bus injection is not balanced");
    }
    return eq;
  }

  const std::size_t m = n - 1;  // unknowns theta_1 .. theta_{n-1}
  std::vector<double> jac(m * m);
  std::vector<double> step(m);
  std::vector<double> trial(n);

  double res = residual_inf();
  for (std::size_t iter = 0; iter < max_iterations && res > 1e-14; ++iter) {
    detail::electrical_power_into(params, eq.theta, pe);
    // F_i = p_i - p_e,i for i = 1..n-1; J = dF/dtheta over the reduced angles.
    for (std::size_t r = 0; r < m; ++r) {
      const std::size_t i = r + 1;
      double diag = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) {
          continue;
        }
        const double stiff = params.b(i, j) * std::cos(eq.theta[i] - eq.theta[j]);
        diag -= stiff;
        if (j >= 1) {
          jac[r * m + (j - 1)] = stiff;
        }
      }
      jac[r * m + r] = diag;
      step[r] = -(params.injection[i] - pe[i]);  // solve J * delta = -F
    }
    detail::solve_linear(jac, step, m);

    // Backtracking line search on the full residual norm.
    double alpha = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 40; ++halving) {
      for (std::size_t r = 0; r < m; ++r) {
        trial[r + 1] = eq.theta[r + 1] + alpha * step[r];
      }
      trial[0] = 0.0;
      std::swap(eq.theta, trial);
      const double new_res = residual_inf();
      if (new_res < res) {
        res = new_res;
        accepted = true;
        break;
      }
      std::swap(eq.theta, trial);  // revert
      alpha *= 0.5;
    }
    if (!accepted) {
      break;
    }
  }

  if (res > tolerance) {
    throw EquilibriumError("equilibrium solve did not converge: residual " +
                           std::to_string(res) + " exceeds tolerance");
  }
  return eq;
}

/// The parameter set shipped with the repository: a 10-bus ring with three
/// chords, zero net injections (so theta* = 0 exactly), heavy load damping
/// on nine buses and one lightly damped, low-inertia unit on bus 5 whose
/// droop tampering destabilises the system. Bus 4 carries a designed droop
/// of exactly 1.0. The same values ship as configs/default_10bus.json.
inline GridParams default_10bus() {
  GridParams p;
  p.n = 10;
  p.inertia = {0.85, 0.85, 0.92, 0.88, 0.90, 0.35, 0.95, 0.82, 0.90, 0.85};
  p.damping = {1.10, 1.15, 1.20, 1.12, 1.08, 0.00, 1.25, 1.18, 1.15, 1.12};
  p.injection.assign(10, 0.0);
  p.droop = {0.45, 0.35, 0.50, 0.40, 1.00, 0.45, 0.55, 0.42, 0.38, 0.35};
  p.susceptance.assign(100, 0.0);
  const struct {
    std::size_t i, j;
    double b;
  } lines[] = {
      {0, 1, 1.35}, {1, 2, 1.15}, {2, 3, 1.60}, {3, 4, 1.25}, {4, 5, 0.70},
      {5, 6, 0.65}, {6, 7, 1.50}, {7, 8, 1.30}, {8, 9, 1.05}, {9, 0, 1.25},
      {0, 5, 0.60}, {2, 7, 1.20}, {4, 9, 0.80},
  };
  for (const auto& line : lines) {
    p.susceptance[line.i * 10 + line.j] = line.b;
    p.susceptance[line.j * 10 + line.i] = line.b;
  }
  return p;
}

}  // namespace fdisim
