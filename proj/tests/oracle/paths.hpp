#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "hev/speed_planner.hpp"

namespace oracle {

inline hev::PathProfile random_path(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n = 2 + static_cast<int>(u(rng) * 300);
  hev::PathProfile p;
  p.s.resize(n);
  p.kappa.resize(n);
  double s = 0.0, kappa = 0.0;
  int left = 0;
  for (int i = 0; i < n; ++i) {
    if (left-- <= 0) {
      left = 5 + static_cast<int>(u(rng) * 40);
      kappa = u(rng) < 0.4 ? 0.0 : (u(rng) < 0.5 ? -1.0 : 1.0) * (0.002 + 0.3 * u(rng) * u(rng));
    }
    p.s[i] = s;
    p.kappa[i] = kappa;
    s += 0.3 + 3.0 * u(rng);
  }
  if (u(rng) < 0.3) {
    p.speed_limit = Eigen::VectorXd::Constant(n, 2.0 + 8.0 * u(rng));
  }
  return p;
}

inline hev::PlannerLimits random_limits(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  hev::PlannerLimits l;
  l.v_max = 4.0 + 12.0 * u(rng);
  l.a_lat_max = 1.0 + 2.0 * u(rng);
  l.a_lon_max = 0.5 + 1.5 * u(rng);
  l.d_lon_max = 1.0 + 2.0 * u(rng);
  l.j_lon_max = 1.0 + 2.0 * u(rng);
  l.v_start = u(rng) < 0.6 ? 0.0 : l.v_max * u(rng);
  l.v_end = u(rng) < 0.6 ? 0.0 : l.v_max * u(rng);
  return l;
}

// Independent check of the lateral, longitudinal and discrete-jerk bounds.
// Returns a description of the first violation, or an empty string.
inline std::string first_violation(const hev::VelocityProfile& v, const hev::PathProfile& path,
                                   const hev::PlannerLimits& lim, double slack = 1e-9) {
  const auto n = v.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (v[i] < -slack || v[i] > lim.v_max + slack) return "range at " + std::to_string(i);
    if (v[i] * v[i] * std::abs(path.kappa[i]) > lim.a_lat_max + slack) {
      return "lateral at " + std::to_string(i);
    }
    if (path.speed_limit.size() > 0 && v[i] > path.speed_limit[i] + slack) {
      return "limit at " + std::to_string(i);
    }
  }
  std::vector<double> a(static_cast<std::size_t>(std::max<Eigen::Index>(n - 1, 0)));
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    const double ds = path.s[i + 1] - path.s[i];
    a[static_cast<std::size_t>(i)] = (v[i + 1] * v[i + 1] - v[i] * v[i]) / (2.0 * ds);
    if (a[static_cast<std::size_t>(i)] > lim.a_lon_max + slack) return "accel at " + std::to_string(i);
    if (a[static_cast<std::size_t>(i)] < -lim.d_lon_max - slack) return "decel at " + std::to_string(i);
  }
  for (Eigen::Index i = 0; i + 2 < n; ++i) {
    const double ds = path.s[i + 1] - path.s[i];
    const double dt = ds / std::max(0.5 * (v[i] + v[i + 1]), lim.v_floor);
    const double j = (a[static_cast<std::size_t>(i + 1)] - a[static_cast<std::size_t>(i)]) / dt;
    if (std::abs(j) > lim.j_lon_max + slack) return "jerk at " + std::to_string(i);
  }
  return {};
}

}  // namespace oracle
