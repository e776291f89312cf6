#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "hev/powertrain.hpp"

namespace hev {

enum class TerminalMode { soft, hard };

struct SocGrid {
  int m = 4000;  // SOC intervals: m + 1 levels
  int q = 13;    // engine-speed levels
  double soc_min = 0.6;
  double soc_max = 0.8;
  double speed_min = 800.0;
  double speed_max = 3200.0;

  double soc_step() const { return (soc_max - soc_min) / m; }
  double soc_level(int i) const;
  double speed_level(int j) const;
  int nearest_soc(double soc) const;
  void validate() const;

  static SocGrid span(const PowertrainParams& p, int m, int q);
};

/// Finite-horizon problem over n steps. Velocities in km/h, accelerations in
/// m/s² (a[k] is the acceleration held during step k).
struct OcpProblem {
  Eigen::VectorXd v_kmh;
  Eigen::VectorXd accel;
  Eigen::VectorXd yaw;
  Eigen::VectorXd slope;
  double soc_init = 0.7;
  double soc_target = 0.7;
  double speed_init = 800.0;  // rpm, need not lie on the grid
  double w1 = 1.0;            // per gram
  double w2 = 1.6e6;          // per SOC² per second
  double dt = 1.0;
  TerminalMode terminal = TerminalMode::soft;
  bool speed_state = true;  // false: speed is a free per-step control held steady

  Eigen::Index horizon() const { return v_kmh.size(); }
  void validate() const;

  /// Constant-speed problem with zero acceleration, yaw and slope.
  static OcpProblem constant(int n, double v_kmh);
};

/// Forward-difference accelerations (v[k+1] - v[k]) / dt, with `v_after`
/// standing in for the sample after the last one.
Eigen::VectorXd forward_accel(const Eigen::VectorXd& v_kmh, double v_after_kmh, double dt);

struct StageResult {
  double cost = 0.0;
  double fuel = 0.0;  // g over the step
  double p_req = 0.0;
  double p_b = 0.0;
  double p_g = 0.0;
  double p_brake = 0.0;
  OperatingPoint op;
};

/// Evaluates transitions of one stage. Shared by stage_cost and dp_solve so the
/// lattice and the reported trajectory agree to the last bit.
class StageEvaluator {
 public:
  StageEvaluator(const OcpProblem& prob, const PowertrainParams& params, Eigen::Index k);

  std::optional<StageResult> operator()(double soc_from, double soc_to, double speed_from,
                                        double speed_to) const;
  double demand() const { return p_req_; }

 private:
  const OcpProblem& prob_;
  const PowertrainParams& params_;
  double p_req_;
};

std::optional<StageResult> stage_cost(double soc_from, double soc_to, double speed_from,
                                      double speed_to, Eigen::Index k, const OcpProblem& prob,
                                      const PowertrainParams& params);

struct DpStep {
  double soc_from = 0.0, soc_to = 0.0;
  double speed_from = 0.0, speed_to = 0.0;
  StageResult stage;
};

struct DpSolution {
  // cost_to_come[k](i, j): least cost of reaching SOC level i, speed level j
  // after k + 1 steps (+inf if unreachable). In SOC-only mode there is one column.
  std::vector<Eigen::MatrixXd> cost_to_come;
  // Predecessor indices for the same nodes; -1 marks none. A predecessor speed
  // of -1 at the first stage denotes the off-grid initial speed.
  std::vector<Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic>> pred_soc;
  std::vector<Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic>> pred_speed;
  std::vector<DpStep> trajectory;
  double total_cost = 0.0;
  double total_fuel = 0.0;
  double soc_start = 0.0;     // snapped initial SOC
  double snap_distance = 0.0;  // snapped minus requested initial SOC
  bool relaxed_terminal = false;
};

DpSolution dp_solve(const OcpProblem& prob, const SocGrid& grid, const PowertrainParams& params);

/// stage,soc,speed,cost,pred_soc,pred_speed for every reachable node.
void write_lattice_csv(std::ostream& os, const DpSolution& sol, const SocGrid& grid,
                       const OcpProblem& prob);

}  // namespace hev
