#include "hev/strategy.hpp"

#include <cmath>
#include <limits>

namespace hev {

void ControllerState::push_velocity(double v_ms, int capacity) {
  history.push_back(v_ms);
  while (static_cast<int>(history.size()) > capacity) history.pop_front();
}

Eigen::VectorXd ControllerState::history_window(int length) const {
  if (history.empty()) throw InputError("controller history is empty");
  Eigen::VectorXd w(length);
  const int have = static_cast<int>(history.size());
  for (int i = 0; i < length; ++i) {
    const int src = have - length + i;
    w[i] = history[std::max(src, 0)];
  }
  return w;
}

void MpcConfig::validate() const {
  if (horizon < 1) throw InputError("mpc: horizon must be at least 1");
  if (control_horizon < 1 || control_horizon > horizon) {
    throw InputError("mpc: control horizon must lie in [1, horizon]");
  }
  if (!(dt > 0.0) || !(w1 >= 0.0) || !(w2 >= 0.0)) throw InputError("mpc: invalid dt or weights");
}

MinFuelLine::MinFuelLine(const GensetParams& g, double power_step, double speed_step)
    : step_(power_step), p_max_(max_electrical_power(g)) {
  const auto count = static_cast<Eigen::Index>(std::floor(p_max_ / step_)) + 1;
  speeds_ = Eigen::VectorXd::Constant(count, g.idle_speed);
  for (Eigen::Index i = 0; i < count; ++i) {
    const double p = static_cast<double>(i) * step_;
    double best = std::numeric_limits<double>::infinity();
    for (double n = g.idle_speed; n <= g.speed_max + 1e-9; n += speed_step) {
      const auto op = try_genset_solve(n, p, 0.0, g);
      if (op && op->fuel_rate < best) {
        best = op->fuel_rate;
        speeds_[i] = n;
      }
    }
  }
}

double MinFuelLine::speed_for(double p_g) const {
  const double x = std::clamp(p_g, 0.0, static_cast<double>(speeds_.size() - 1) * step_) / step_;
  const auto i = std::min(static_cast<Eigen::Index>(x), speeds_.size() - 1);
  if (i + 1 >= speeds_.size()) return speeds_[i];
  const double f = x - static_cast<double>(i);
  return speeds_[i] + f * (speeds_[i + 1] - speeds_[i]);
}

std::pair<double, double> battery_power_window(double soc, const BatteryParams& b, double dt) {
  const double to_max = battery_power_from_dsoc(std::max(b.soc_max - soc, 0.0), soc, b, dt);
  const double drain = b.capacity * std::max(soc - b.soc_min, 0.0) / dt;
  const double to_min = drain < voc_lookup(soc, b) / (2.0 * b.resistance)
                            ? battery_power_from_dsoc(std::min(b.soc_min - soc, 0.0), soc, b, dt)
                            : std::numeric_limits<double>::infinity();
  return {std::max(b.p_charge_max, to_max), std::min(b.p_discharge_max, to_min)};
}

namespace {

void update_filter(ControllerState& state, double p_req, const PfConfig& cfg) {
  const double alpha = 1.0 - std::exp(-cfg.dt / cfg.tau);
  state.p_filtered += alpha * (p_req - state.p_filtered);
}

}  // namespace

ControlCommand power_following_step(ControllerState& state, const Observation& obs,
                                    const PowertrainParams& params, const PfConfig& cfg,
                                    const MinFuelLine& line) {
  const auto& g = params.genset;
  update_filter(state, obs.p_req, cfg);
  const double p_cmd =
      std::clamp(state.p_filtered + cfg.k_soc * (cfg.soc_target - state.soc) * cfg.p_corr, 0.0,
                 line.max_power());

  const double slew = g.speed_rate_max * cfg.dt;
  const double speed = std::clamp(std::clamp(line.speed_for(p_cmd), state.engine_speed - slew,
                                             state.engine_speed + slew),
                                  g.idle_speed, g.speed_max);
  const double rate = (speed - state.engine_speed) / cfg.dt;
  const double cap = gen_torque_headroom(speed, rate, g);
  const double dtq = g.torque_rate_max * cfg.dt;
  const double t_lo = std::clamp(state.gen_torque - dtq, 0.0, cap);
  const double t_hi = std::clamp(state.gen_torque + dtq, 0.0, cap);
  double torque = std::clamp(gen_torque_for(p_cmd, speed, g), t_lo, t_hi);

  ControlCommand cmd;
  const auto [p_low, p_high] = battery_power_window(state.soc, params.battery, cfg.dt);
  double p_b = obs.p_req - gen_elec_power(torque, speed, g);
  if (p_b > p_high) {
    torque = std::min(gen_torque_for(obs.p_req - p_high, speed, g), cap);
    cmd.saturated = true;
  } else if (p_b < p_low && obs.p_req >= p_low) {
    torque = std::max(gen_torque_for(obs.p_req - p_low, speed, g), 0.0);
    cmd.saturated = true;
  }
  cmd.engine_speed = speed;
  cmd.gen_torque = torque;
  cmd.p_g = gen_elec_power(torque, speed, g);
  cmd.p_b = obs.p_req - cmd.p_g;
  state.engine_speed = speed;
  state.gen_torque = torque;
  return cmd;
}

OcpProblem mpc_problem(const ControllerState& state, const Observation& obs,
                       const Eigen::VectorXd& forecast, const MpcConfig& cfg) {
  const int n = cfg.horizon;
  if (forecast.size() < n) throw InputError("mpc: forecast shorter than the horizon");
  OcpProblem prob;
  prob.v_kmh.resize(n);
  prob.accel.resize(n);
  prob.v_kmh[0] = obs.v_kmh;
  prob.accel[0] = obs.accel;
  for (int i = 1; i < n; ++i) {
    prob.v_kmh[i] = forecast[i - 1] * 3.6;
    prob.accel[i] = (forecast[i] - forecast[i - 1]) / cfg.dt;
  }
  prob.yaw = Eigen::VectorXd::Constant(n, obs.yaw);
  prob.slope = Eigen::VectorXd::Constant(n, obs.slope);
  prob.soc_init = state.soc;
  prob.soc_target = cfg.soc_target;
  prob.speed_init = state.engine_speed;
  prob.w1 = cfg.w1;
  prob.w2 = cfg.w2;
  prob.dt = cfg.dt;
  prob.terminal = TerminalMode::soft;
  prob.speed_state = cfg.speed_state;
  return prob;
}

ControlCommand mpc_step_with_forecast(ControllerState& state, const Observation& obs,
                                      const Eigen::VectorXd& forecast,
                                      const PowertrainParams& params, const MpcConfig& cfg,
                                      const PfConfig& pf, const MinFuelLine& line) {
  cfg.validate();
  const OcpProblem prob = mpc_problem(state, obs, forecast, cfg);
  const SocGrid grid = SocGrid::span(params, cfg.grid_m, cfg.grid_q);
  DpSolution sol;
  try {
    sol = dp_solve(prob, grid, params);
  } catch (const InfeasibleError&) {
    ControlCommand cmd = power_following_step(state, obs, params, pf, line);
    cmd.fallback = true;
    return cmd;
  }
  update_filter(state, obs.p_req, pf);
  const DpStep& first = sol.trajectory.front();
  ControlCommand cmd;
  cmd.engine_speed = first.speed_to;
  cmd.gen_torque = first.stage.op.gen_torque;
  cmd.p_g = first.stage.p_g;
  cmd.p_b = first.stage.p_b;
  state.engine_speed = cmd.engine_speed;
  state.gen_torque = cmd.gen_torque;
  return cmd;
}

ControlCommand mpc_step(ControllerState& state, const Observation& obs, const Predictor& predictor,
                        const PowertrainParams& params, const MpcConfig& cfg, const PfConfig& pf,
                        const MinFuelLine& line) {
  const WindowConfig& w = predictor.windows();
  if (w.horizon < cfg.horizon) throw InputError("mpc: predictor horizon shorter than the MPC horizon");
  if (obs.planned.size() != w.planned) throw InputError("mpc: planned window length mismatch");
  const Eigen::VectorXd forecast = predictor.predict({state.history_window(w.history), obs.planned});
  return mpc_step_with_forecast(state, obs, forecast, params, cfg, pf, line);
}

PowerFollowing::PowerFollowing(const PowertrainParams& params, PfConfig cfg)
    : params_(params), cfg_(cfg), line_(params.genset) {}

ControlCommand PowerFollowing::step(ControllerState& state, const Observation& obs) {
  return power_following_step(state, obs, params_, cfg_, line_);
}

MpcController::MpcController(std::string name, const PowertrainParams& params, MpcConfig cfg,
                             PfConfig pf, std::shared_ptr<const Predictor> predictor)
    : name_(std::move(name)), params_(params), cfg_(cfg), pf_(pf),
      predictor_(std::move(predictor)), line_(params.genset) {
  cfg_.validate();
  if (!predictor_) throw InputError("mpc: predictor missing");
}

ControlCommand MpcController::step(ControllerState& state, const Observation& obs) {
  return mpc_step(state, obs, *predictor_, params_, cfg_, pf_, line_);
}

TrajectoryReplay::TrajectoryReplay(std::string name, std::vector<DpStep> steps)
    : name_(std::move(name)), steps_(std::move(steps)) {}

ControlCommand TrajectoryReplay::step(ControllerState& state, const Observation&) {
  if (state.step < 0 || state.step >= static_cast<long>(steps_.size())) {
    throw InputError("replay: cycle is longer than the trajectory");
  }
  const DpStep& s = steps_[static_cast<std::size_t>(state.step)];
  ControlCommand cmd;
  cmd.engine_speed = s.speed_to;
  cmd.gen_torque = s.stage.op.gen_torque;
  cmd.p_g = s.stage.p_g;
  cmd.p_b = s.stage.p_b;
  state.engine_speed = cmd.engine_speed;
  state.gen_torque = cmd.gen_torque;
  return cmd;
}

}  // namespace hev
