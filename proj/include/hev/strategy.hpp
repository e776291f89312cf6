#pragma once

#include <Eigen/Dense>
#include <deque>
#include <memory>
#include <string>

#include "hev/dp.hpp"
#include "hev/prediction.hpp"

namespace hev {

/// What the controller can measure at step k.
struct Observation {
  double v_kmh = 0.0;
  double accel = 0.0;  // m/s², acceleration being applied over this step
  double yaw = 0.0;
  double slope = 0.0;
  double p_req = 0.0;        // W, traction demand of this step
  Eigen::VectorXd planned;   // m/s, planner speed for steps k .. k+H_p-1
};

struct ControllerState {
  double soc = 0.7;
  double engine_speed = 800.0;  // rpm, last commanded
  double gen_torque = 0.0;      // N·m, last commanded
  double p_filtered = 0.0;      // W, power-following low-pass state
  std::deque<double> history;   // m/s, most recent last, includes v(k)
  long step = 0;

  void push_velocity(double v_ms, int capacity);
  Eigen::VectorXd history_window(int length) const;  // front-padded with the oldest sample
};

struct ControlCommand {
  double engine_speed = 0.0;
  double gen_torque = 0.0;
  double p_g = 0.0;  // W implied on the bus
  double p_b = 0.0;  // W implied from the battery
  bool fallback = false;   // MPC handed over to power following
  bool saturated = false;  // a battery limit clipped the rule output
};

struct PfConfig {
  double tau = 2.0;        // s
  double k_soc = 20.0;
  double p_corr = 30e3;    // W
  double soc_target = 0.7;
  double dt = 1.0;
};

struct MpcConfig {
  int horizon = 5;
  int control_horizon = 5;
  double dt = 1.0;
  int grid_m = 4000;
  int grid_q = 13;
  double w1 = 1.0;
  double w2 = 1.6e6;
  double soc_target = 0.7;
  bool speed_state = true;

  void validate() const;
};

/// Steady minimum-fuel engine speed for each electrical power level.
class MinFuelLine {
 public:
  explicit MinFuelLine(const GensetParams& g, double power_step = 500.0, double speed_step = 10.0);
  double speed_for(double p_g) const;
  double max_power() const { return p_max_; }

 private:
  double step_;
  double p_max_;
  Eigen::VectorXd speeds_;
};

/// Battery power range that keeps both the power limits and the SOC window
/// over the next step, [low, high] in W.
std::pair<double, double> battery_power_window(double soc, const BatteryParams& b, double dt);

ControlCommand power_following_step(ControllerState& state, const Observation& obs,
                                    const PowertrainParams& params, const PfConfig& cfg,
                                    const MinFuelLine& line);

/// Builds the horizon problem from the measured step plus the forecast
/// v(k+1) .. v(k+p) (m/s) and returns the first control.
ControlCommand mpc_step_with_forecast(ControllerState& state, const Observation& obs,
                                      const Eigen::VectorXd& forecast,
                                      const PowertrainParams& params, const MpcConfig& cfg,
                                      const PfConfig& pf, const MinFuelLine& line);

ControlCommand mpc_step(ControllerState& state, const Observation& obs, const Predictor& predictor,
                        const PowertrainParams& params, const MpcConfig& cfg, const PfConfig& pf,
                        const MinFuelLine& line);

OcpProblem mpc_problem(const ControllerState& state, const Observation& obs,
                       const Eigen::VectorXd& forecast, const MpcConfig& cfg);

class Strategy {
 public:
  virtual ~Strategy() = default;
  virtual std::string name() const = 0;
  virtual ControlCommand step(ControllerState& state, const Observation& obs) = 0;
};

class PowerFollowing final : public Strategy {
 public:
  PowerFollowing(const PowertrainParams& params, PfConfig cfg);
  std::string name() const override { return "pf"; }
  ControlCommand step(ControllerState& state, const Observation& obs) override;

 private:
  const PowertrainParams& params_;
  PfConfig cfg_;
  MinFuelLine line_;
};

class MpcController final : public Strategy {
 public:
  MpcController(std::string name, const PowertrainParams& params, MpcConfig cfg, PfConfig pf,
                std::shared_ptr<const Predictor> predictor);
  std::string name() const override { return name_; }
  ControlCommand step(ControllerState& state, const Observation& obs) override;

 private:
  std::string name_;
  const PowertrainParams& params_;
  MpcConfig cfg_;
  PfConfig pf_;
  std::shared_ptr<const Predictor> predictor_;
  MinFuelLine line_;
};

/// Replays a precomputed trajectory, one stage per step.
class TrajectoryReplay final : public Strategy {
 public:
  TrajectoryReplay(std::string name, std::vector<DpStep> steps);
  std::string name() const override { return name_; }
  ControlCommand step(ControllerState& state, const Observation& obs) override;

 private:
  std::string name_;
  std::vector<DpStep> steps_;
};

}  // namespace hev
