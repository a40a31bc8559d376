#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fdisim/grid.hpp"

namespace test_helpers {

/// Classic fourth-order Runge-Kutta integrator over the same dynamics,
/// used as an independent reference for Euler convergence checks. Test-only;
/// shares no stepping code with the implementation under test.
inline fdisim::GridState rk4_reference(const fdisim::GridParams& params,
                                       const fdisim::GridState& initial, double horizon,
                                       double dt) {
  const std::size_t n = params.n;
  auto deriv = [&](const std::vector<double>& theta, const std::vector<double>& omega,
                   std::vector<double>& dtheta, std::vector<double>& domega) {
    for (std::size_t i = 0; i < n; ++i) {
      double pe = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i) {
          pe += params.b(i, j) * std::sin(theta[i] - theta[j]);
        }
      }
      dtheta[i] = omega[i];
      domega[i] = (params.injection[i] - pe - params.damping[i] * omega[i] -
                   params.droop[i] * omega[i]) /
                  params.inertia[i];
    }
  };

  fdisim::GridState s = initial;
  const auto steps = static_cast<std::size_t>(horizon / dt + 0.5);
  std::vector<double> k1t(n), k1w(n), k2t(n), k2w(n), k3t(n), k3w(n), k4t(n), k4w(n);
  std::vector<double> tt(n), tw(n);
  for (std::size_t step = 0; step < steps; ++step) {
    deriv(s.theta, s.omega, k1t, k1w);
    for (std::size_t i = 0; i < n; ++i) {
      tt[i] = s.theta[i] + 0.5 * dt * k1t[i];
      tw[i] = s.omega[i] + 0.5 * dt * k1w[i];
    }
    deriv(tt, tw, k2t, k2w);
    for (std::size_t i = 0; i < n; ++i) {
      tt[i] = s.theta[i] + 0.5 * dt * k2t[i];
      tw[i] = s.omega[i] + 0.5 * dt * k2w[i];
    }
    deriv(tt, tw, k3t, k3w);
    for (std::size_t i = 0; i < n; ++i) {
      tt[i] = s.theta[i] + dt * k3t[i];
      tw[i] = s.omega[i] + dt * k3w[i];
    }
    deriv(tt, tw, k4t, k4w);
    for (std::size_t i = 0; i < n; ++i) {
      s.theta[i] += dt / 6.0 * (k1t[i] + 2.0 * k2t[i] + 2.0 * k3t[i] + k4t[i]);
      s.omega[i] += dt / 6.0 * (k1w[i] + 2.0 * k2w[i] + 2.0 * k3w[i] + k4w[i]);
    }
  }
  return s;
}

/// Split one line on commas (no quoting in our CSV dialect).
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) {
    fields.push_back(field);
  }
  if (!line.empty() && line.back() == ',') {
    fields.emplace_back();
  }
  return fields;
}

/// All lines of a file, newline-stripped.
inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    lines.push_back(line);
  }
  return lines;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    base_ = std::filesystem::temp_directory_path() /
            ("fdisim_test_" + tag + "_" + std::to_string(counter()++));
    std::filesystem::create_directories(base_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(base_, ec);
  }
  const std::filesystem::path& path() const { return base_; }

 private:
  static int& counter() {
    static int value = 0;
    return value;
  }
  std::filesystem::path base_;
};

}  // namespace test_helpers
