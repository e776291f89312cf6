#include "hev/speed_planner.hpp"

#include <cmath>
#include <limits>

namespace hev {
namespace {

constexpr double kSlack = 1e-9;

double cap_at(const PathProfile& path, const PlannerLimits& lim, Eigen::Index i) {
  double cap = lim.v_max;
  const double k = std::abs(path.kappa[i]);
  if (k > 0.0) cap = std::min(cap, std::sqrt(lim.a_lat_max / k));
  if (path.speed_limit.size() > 0) cap = std::min(cap, path.speed_limit[i]);
  return cap;
}

void clamp_endpoints(VelocityProfile& v, const PlannerLimits& lim) {
  if (v.size() == 0) return;
  v[0] = std::min(v[0], lim.v_start);
  if (v.size() > 1) v[v.size() - 1] = std::min(v[v.size() - 1], lim.v_end);
}

double jerk_at(const VelocityProfile& v, const PathProfile& path, double v_floor,
               Eigen::Index i) {
  const double ds0 = path.s[i + 1] - path.s[i];
  const double ds1 = path.s[i + 2] - path.s[i + 1];
  const double a0 = (v[i + 1] * v[i + 1] - v[i] * v[i]) / (2.0 * ds0);
  const double a1 = (v[i + 2] * v[i + 2] - v[i + 1] * v[i + 1]) / (2.0 * ds1);
  const double dt = ds0 / std::max(0.5 * (v[i] + v[i + 1]), v_floor);
  return (a1 - a0) / dt;
}

// Lowers v[idx] to the largest value in [0, v[idx]] for which `ok` holds.
// `ok` must be monotone: true below some threshold, false above it.
// Returns false when even zero speed does not satisfy the predicate.
template <typename Pred>
bool lower_until(VelocityProfile& v, Eigen::Index idx, Pred ok) {
  const double original = v[idx];
  if (ok()) return true;
  v[idx] = 0.0;
  if (!ok()) return false;
  double lo = 0.0;
  double hi = original;
  for (int it = 0; it < 64 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    v[idx] = mid;
    if (ok()) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  v[idx] = lo;
  return true;
}

// Repairs a jerk violation at triple i, aiming a hair inside the bound so that
// later repairs of neighbouring triples do not push it back over.
bool fix_jerk(VelocityProfile& v, const PathProfile& path, const PlannerLimits& lim,
              Eigen::Index i) {
  const double target = lim.j_lon_max * (1.0 - 1e-7);
  const double j = jerk_at(v, path, lim.v_floor, i);
  if (j > lim.j_lon_max) {
    auto ok = [&] { return jerk_at(v, path, lim.v_floor, i) <= target; };
    const Eigen::Index first = v[i] >= v[i + 2] ? i : i + 2;
    const Eigen::Index second = first == i ? i + 2 : i;
    if (!lower_until(v, first, ok)) lower_until(v, second, ok);
    return true;
  }
  if (j < -lim.j_lon_max) {
    lower_until(v, i + 1, [&] { return jerk_at(v, path, lim.v_floor, i) >= -target; });
    return true;
  }
  return false;
}

bool satisfies_limits(const VelocityProfile& v, const PathProfile& path,
                      const PlannerLimits& lim) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v[i] < 0.0 || v[i] > cap_at(path, lim, i) + kSlack) return false;
  }
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    const double a = (v[i] * v[i] - v[i - 1] * v[i - 1]) / (2.0 * (path.s[i] - path.s[i - 1]));
    if (a > lim.a_lon_max + kSlack || a < -lim.d_lon_max - kSlack) return false;
  }
  for (Eigen::Index i = 0; i + 2 < v.size(); ++i) {
    if (std::abs(jerk_at(v, path, lim.v_floor, i)) > lim.j_lon_max + kSlack) return false;
  }
  return true;
}

}  // namespace

void PathProfile::validate() const {
  if (s.size() != kappa.size()) throw InputError("path: s and kappa differ in length");
  if (speed_limit.size() != 0 && speed_limit.size() != s.size()) {
    throw InputError("path: speed_limit length mismatch");
  }
  if (!s.allFinite() || !kappa.allFinite()) throw InputError("path: non-finite value");
  for (Eigen::Index i = 1; i < s.size(); ++i) {
    if (!(s[i] > s[i - 1])) throw InputError("path: arc length must be strictly increasing");
  }
  if (speed_limit.size() != 0 && (speed_limit.array() < 0.0).any()) {
    throw InputError("path: negative speed limit");
  }
}

void PlannerLimits::validate() const {
  if (!(v_max > 0.0 && a_lat_max > 0.0 && a_lon_max > 0.0 && d_lon_max > 0.0 &&
        j_lon_max > 0.0)) {
    throw InputError("planner limits must be strictly positive");
  }
  if (!(v_start >= 0.0 && v_end >= 0.0)) throw InputError("planner end speeds must be >= 0");
  if (!(epsilon > 0.0) || max_iterations < 1 || !(v_floor > 0.0)) {
    throw InputError("planner convergence settings invalid");
  }
}

PathProfile path_from_xy(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() != y.size()) throw InputError("path_from_xy: x and y differ in length");
  const Eigen::Index n = x.size();
  PathProfile path;
  path.s = Eigen::VectorXd::Zero(n);
  path.kappa = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 1; i < n; ++i) {
    path.s[i] = path.s[i - 1] + std::hypot(x[i] - x[i - 1], y[i] - y[i - 1]);
  }
  for (Eigen::Index i = 1; i + 1 < n; ++i) {
    const double ax = x[i] - x[i - 1], ay = y[i] - y[i - 1];
    const double bx = x[i + 1] - x[i], by = y[i + 1] - y[i];
    const double a = std::hypot(ax, ay);
    const double b = std::hypot(bx, by);
    const double c = std::hypot(x[i + 1] - x[i - 1], y[i + 1] - y[i - 1]);
    const double denom = a * b * c;
    path.kappa[i] = denom > 0.0 ? 2.0 * (ax * by - ay * bx) / denom : 0.0;
  }
  if (n >= 3) {
    path.kappa[0] = path.kappa[1];
    path.kappa[n - 1] = path.kappa[n - 2];
  }
  path.validate();
  return path;
}

VelocityProfile curvature_cap(const PathProfile& path, const PlannerLimits& lim) {
  VelocityProfile v(path.size());
  for (Eigen::Index i = 0; i < path.size(); ++i) v[i] = cap_at(path, lim, i);
  return v;
}

VelocityProfile accel_decel_passes(VelocityProfile v, const PathProfile& path,
                                   const PlannerLimits& lim) {
  clamp_endpoints(v, lim);
  const Eigen::Index n = v.size();
  for (Eigen::Index i = 1; i < n; ++i) {
    const double ds = std::abs(path.s[i] - path.s[i - 1]);
    v[i] = std::min(v[i], std::sqrt(v[i - 1] * v[i - 1] + 2.0 * lim.a_lon_max * ds));
  }
  for (Eigen::Index i = n - 1; i > 0; --i) {
    const double ds = std::abs(path.s[i] - path.s[i - 1]);
    v[i - 1] = std::min(v[i - 1], std::sqrt(v[i] * v[i] + 2.0 * lim.d_lon_max * ds));
  }
  return v;
}

VelocityProfile jerk_pass(VelocityProfile v, const PathProfile& path, const PlannerLimits& lim) {
  const Eigen::Index n = v.size();
  constexpr int kMaxSweeps = 10000;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool changed = false;
    for (Eigen::Index i = 0; i + 2 < n; ++i) changed = fix_jerk(v, path, lim, i) || changed;
    for (Eigen::Index i = n - 3; i >= 0; --i) changed = fix_jerk(v, path, lim, i) || changed;
    if (!changed) break;
  }
  return v;
}

Eigen::VectorXd segment_accelerations(const VelocityProfile& v, const PathProfile& path) {
  const Eigen::Index n = std::max<Eigen::Index>(v.size() - 1, 0);
  Eigen::VectorXd a(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    a[i] = (v[i + 1] * v[i + 1] - v[i] * v[i]) / (2.0 * (path.s[i + 1] - path.s[i]));
  }
  return a;
}

Eigen::VectorXd segment_times(const VelocityProfile& v, const PathProfile& path, double v_floor) {
  const Eigen::Index n = std::max<Eigen::Index>(v.size() - 1, 0);
  Eigen::VectorXd dt(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    dt[i] = (path.s[i + 1] - path.s[i]) / std::max(0.5 * (v[i] + v[i + 1]), v_floor);
  }
  return dt;
}

Eigen::VectorXd segment_jerks(const VelocityProfile& v, const PathProfile& path, double v_floor) {
  const Eigen::Index n = std::max<Eigen::Index>(v.size() - 2, 0);
  Eigen::VectorXd j(n);
  for (Eigen::Index i = 0; i < n; ++i) j[i] = jerk_at(v, path, v_floor, i);
  return j;
}

SpeedPlan smooth_profile(const PathProfile& path, const PlannerLimits& lim,
                         const VelocityProfile& initial) {
  path.validate();
  lim.validate();
  if (initial.size() != path.size()) throw InputError("smooth_profile: length mismatch");
  VelocityProfile v = initial.cwiseMin(curvature_cap(path, lim)).cwiseMax(0.0);
  clamp_endpoints(v, lim);
  if (v.size() < 2) return {v, 1};

  for (int it = 1; it <= lim.max_iterations; ++it) {
    const VelocityProfile prev = v;
    v = jerk_pass(accel_decel_passes(std::move(v), path, lim), path, lim);
    const double change = (v - prev).cwiseAbs().maxCoeff();
    if (change < lim.epsilon && satisfies_limits(v, path, lim)) return {v, it};
  }
  throw PlannerNonConvergence(v, lim.max_iterations);
}

SpeedPlan plan_speed_detailed(const PathProfile& path, const PlannerLimits& lim) {
  return smooth_profile(path, lim, curvature_cap(path, lim));
}

VelocityProfile plan_speed(const PathProfile& path, const PlannerLimits& lim) {
  return plan_speed_detailed(path, lim).velocity;
}

Eigen::VectorXd profile_times(const VelocityProfile& v, const PathProfile& path, double v_floor) {
  Eigen::VectorXd t = Eigen::VectorXd::Zero(v.size());
  const Eigen::VectorXd dt = segment_times(v, path, v_floor);
  for (Eigen::Index i = 0; i < dt.size(); ++i) t[i + 1] = t[i] + dt[i];
  return t;
}

}  // namespace hev
