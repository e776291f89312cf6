#pragma once

#include <Eigen/Dense>

#include "hev/error.hpp"

namespace hev {

/// Arc-length indexed path. `speed_limit` is an optional per-point cap (m/s);
/// leave it empty when only the global v_max applies.
struct PathProfile {
  Eigen::VectorXd s;
  Eigen::VectorXd kappa;
  Eigen::VectorXd speed_limit;

  Eigen::Index size() const { return s.size(); }
  void validate() const;
};

struct PlannerLimits {
  double v_max = 12.0;     // m/s
  double a_lat_max = 2.0;  // m/s²
  double a_lon_max = 1.5;  // m/s²
  double d_lon_max = 2.5;  // m/s², magnitude
  double j_lon_max = 2.0;  // m/s³
  double v_start = 0.0;
  double v_end = 0.0;
  double epsilon = 1e-4;   // m/s, fixed-point tolerance
  int max_iterations = 100;
  double v_floor = 0.1;    // m/s, lower bound on segment mean speed for timing

  void validate() const;
};

using VelocityProfile = Eigen::VectorXd;

struct SpeedPlan {
  VelocityProfile velocity;
  int iterations = 0;
};

class PlannerNonConvergence : public Error {
 public:
  PlannerNonConvergence(VelocityProfile last, int iterations)
      : Error("speed planner did not converge"), last_(std::move(last)), iterations_(iterations) {}
  const VelocityProfile& last_profile() const { return last_; }
  int iterations() const { return iterations_; }

 private:
  VelocityProfile last_;
  int iterations_;
};

/// Builds (s, kappa) from planar points: s is cumulative chord length and
/// kappa the signed curvature of the circle through each point and its two
/// neighbours; end points copy their neighbour's curvature.
PathProfile path_from_xy(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

VelocityProfile curvature_cap(const PathProfile& path, const PlannerLimits& lim);
VelocityProfile accel_decel_passes(VelocityProfile v, const PathProfile& path,
                                   const PlannerLimits& lim);
VelocityProfile jerk_pass(VelocityProfile v, const PathProfile& path, const PlannerLimits& lim);

/// Per-segment longitudinal acceleration (v_{i+1}² − v_i²) / (2 Δs_i).
Eigen::VectorXd segment_accelerations(const VelocityProfile& v, const PathProfile& path);
/// Segment traversal times Δs_i / max(mean speed, v_floor).
Eigen::VectorXd segment_times(const VelocityProfile& v, const PathProfile& path, double v_floor);
/// Discrete jerk (a_{i+1} − a_i) / Δt_i for every pair of adjacent segments.
Eigen::VectorXd segment_jerks(const VelocityProfile& v, const PathProfile& path, double v_floor);

/// Fixed-point smoothing starting from `initial` (capped by curvature first).
SpeedPlan smooth_profile(const PathProfile& path, const PlannerLimits& lim,
                         const VelocityProfile& initial);
SpeedPlan plan_speed_detailed(const PathProfile& path, const PlannerLimits& lim);
VelocityProfile plan_speed(const PathProfile& path, const PlannerLimits& lim);

/// Time stamps of each path point when the profile is followed from s_0.
Eigen::VectorXd profile_times(const VelocityProfile& v, const PathProfile& path, double v_floor);

}  // namespace hev
