#include "hev/sim.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>

#include "hev/csv.hpp"

namespace hev {
namespace {

constexpr double kStopMargin = 3.0;  // m before the path end where the drive winds down
constexpr double kStopSpeed = 0.05;  // m/s treated as standstill

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

struct Segment {
  double length;
  double kappa;
  double limit;
};

PathProfile build_path(const std::vector<Segment>& segments, double ds) {
  std::vector<double> s{0.0}, kappa, limit;
  kappa.push_back(segments.front().kappa);
  limit.push_back(segments.front().limit);
  for (const auto& seg : segments) {
    const int pts = std::max(1, static_cast<int>(std::lround(seg.length / ds)));
    for (int i = 0; i < pts; ++i) {
      s.push_back(s.back() + seg.length / pts);
      kappa.push_back(seg.kappa);
      limit.push_back(seg.limit);
    }
  }
  PathProfile p;
  p.s = to_vector(s);
  p.kappa = to_vector(kappa);
  p.speed_limit = to_vector(limit);
  p.validate();
  return p;
}

PathProfile random_path(std::mt19937_64& rng, const ScenarioConfig& cfg) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  const double length = uniform(cfg.path_length_min, cfg.path_length_max);
  std::vector<Segment> segs;
  double total = 0.0;
  while (total < length) {
    Segment seg{};
    seg.length = uniform(cfg.segment_min, cfg.segment_max);
    if (unit(rng) >= cfg.straight_fraction) {
      seg.kappa = uniform(cfg.kappa_min, cfg.kappa_max) * (unit(rng) < 0.5 ? -1.0 : 1.0);
    }
    seg.limit = cfg.planner.v_max;
    if (unit(rng) < cfg.limit_fraction) seg.limit = uniform(cfg.limit_min, cfg.planner.v_max);
    total += seg.length;
    segs.push_back(seg);
  }
  return build_path(segs, cfg.ds);
}

Eigen::VectorXd planned_window(const DrivingCycle& c, Eigen::Index k, int len) {
  Eigen::VectorXd w(len);
  for (int i = 0; i < len; ++i) {
    w[i] = c.v_planned_kmh[std::min<Eigen::Index>(k + i, c.size() - 1)] / 3.6;
  }
  return w;
}

double accel_at(const DrivingCycle& c, Eigen::Index k) {
  const double next = k + 1 < c.size() ? c.v_kmh[k + 1] : c.v_kmh[k];
  return (next - c.v_kmh[k]) / 3.6 / c.dt;
}

}  // namespace

void DrivingCycle::validate() const {
  const Eigen::Index n = t.size();
  if (n < 1) throw InputError("cycle: empty");
  if (v_kmh.size() != n || theta.size() != n || omega.size() != n || v_planned_kmh.size() != n) {
    throw InputError("cycle: column lengths differ");
  }
  if (!(dt > 0.0)) throw InputError("cycle: dt must be positive");
  if (!t.allFinite() || !v_kmh.allFinite() || !theta.allFinite() || !omega.allFinite() ||
      !v_planned_kmh.allFinite()) {
    throw InputError("cycle: non-finite sample");
  }
  for (Eigen::Index k = 1; k < n; ++k) {
    if (std::abs(t[k] - t[k - 1] - dt) > 1e-6 * dt) throw InputError("cycle: time grid not uniform");
  }
  if ((v_kmh.array() < 0.0).any() || (v_planned_kmh.array() < 0.0).any()) {
    throw InputError("cycle: negative speed");
  }
}

Episode DrivingCycle::episode() const { return {v_kmh / 3.6, v_planned_kmh / 3.6}; }

CycleDataset to_dataset(const std::vector<DrivingCycle>& cycles) {
  CycleDataset d;
  d.reserve(cycles.size());
  for (const auto& c : cycles) d.push_back(c.episode());
  return d;
}

void ScenarioConfig::validate() const {
  planner.validate();
  if (!(k_track > 0.0 && k_track <= 1.0)) throw InputError("scenario: k_track must lie in (0,1]");
  if (!(noise_sigma >= 0.0) || !(dt > 0.0) || !(ds > 0.0)) {
    throw InputError("scenario: noise, dt and ds must be valid");
  }
  if (train_episodes < 1 || test_episodes < 0 || max_steps < 2) {
    throw InputError("scenario: episode counts invalid");
  }
  if (!(path_length_min > 0.0 && path_length_max >= path_length_min && segment_min > 0.0 &&
        segment_max >= segment_min && kappa_max >= kappa_min && kappa_min >= 0.0 &&
        limit_min > 0.0)) {
    throw InputError("scenario: path ranges invalid");
  }
}

DrivingCycle track_profile(const PathProfile& path, const VelocityProfile& profile,
                           const ScenarioConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (path.size() < 2 || profile.size() != path.size()) {
    throw InputError("track_profile: profile does not match path");
  }
  const PiecewiseLinear<double> plan(path.s, profile);
  const PiecewiseLinear<double> curvature(path.s, path.kappa);
  const auto& lim = cfg.planner;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<double> t, v_kmh, omega, planned;
  const double s_end = path.s[path.size() - 1];
  double s = 0.0;
  double v = std::min(lim.v_start, profile[0]);
  bool tail = false;
  for (int k = 0; k < cfg.max_steps; ++k) {
    const double vp = tail ? 0.0 : plan.clamped(s);
    t.push_back(k * cfg.dt);
    v_kmh.push_back(v * 3.6);
    omega.push_back(v * curvature.clamped(s));
    planned.push_back(vp * 3.6);
    if (tail && v == 0.0) break;
    const double e = tail ? 0.0 : cfg.noise_sigma * noise(rng);
    const double dv =
        std::clamp(cfg.k_track * (vp - v) + e, -lim.d_lon_max * cfg.dt, lim.a_lon_max * cfg.dt);
    double next = std::clamp(v + dv, 0.0, lim.v_max);
    if (tail && next < kStopSpeed) next = 0.0;
    s += 0.5 * (v + next) * cfg.dt;
    v = next;
    if (!tail && s >= s_end - kStopMargin) tail = true;
  }
  DrivingCycle c;
  c.dt = cfg.dt;
  c.t = to_vector(t);
  c.v_kmh = to_vector(v_kmh);
  c.theta = Eigen::VectorXd::Zero(c.t.size());
  c.omega = to_vector(omega);
  c.v_planned_kmh = to_vector(planned);
  return c;
}

std::vector<DrivingCycle> generate_cycles(std::uint64_t seed, const ScenarioConfig& cfg, int count) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::vector<DrivingCycle> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  while (static_cast<int>(out.size()) < count) {
    const PathProfile path = random_path(rng, cfg);
    const std::uint64_t noise_seed = rng();
    VelocityProfile profile;
    try {
      profile = plan_speed(path, cfg.planner);
    } catch (const PlannerNonConvergence&) {
      continue;
    }
    out.push_back(track_profile(path, profile, cfg, noise_seed));
  }
  return out;
}

PathProfile benchmark_path() {
  const std::vector<Segment> segs{
      {60.0, 0.0, 8.0},    {200.0, 0.0, 8.0},   {80.0, 0.02, 8.0},  {100.0, 0.0, 6.0},
      {150.0, 0.0, 8.0},   {60.0, -0.04, 8.0},  {180.0, 0.0, 8.0},  {440.0, 0.0, 12.0},
      {150.0, 0.0, 3.0},
  };
  return build_path(segs, 2.0);
}

DrivingCycle benchmark_cycle(std::uint64_t seed, const ScenarioConfig& cfg) {
  const PathProfile path = benchmark_path();
  return track_profile(path, plan_speed(path, cfg.planner), cfg, seed ^ 0x9e3779b97f4a7c15ULL);
}

SimLog simulate(const DrivingCycle& cycle, Strategy& strategy, const PowertrainParams& params,
                const SimOptions& opt) {
  cycle.validate();
  params.validate();
  opt.windows.validate();
  const auto& b = params.battery;
  const auto& g = params.genset;
  const double dt = cycle.dt;

  SimLog log;
  log.strategy = strategy.name();
  log.soc_init = opt.soc_init;
  log.dt = dt;
  double soc = opt.soc_init;
  double shaft = opt.speed_init;
  ControllerState state;
  state.soc = soc;
  state.engine_speed = shaft;
  double fuel_cum = 0.0;

  for (Eigen::Index k = 0; k < cycle.size(); ++k) {
    Observation obs;
    obs.v_kmh = cycle.v_kmh[k];
    obs.accel = accel_at(cycle, k);
    obs.yaw = cycle.omega[k];
    obs.slope = cycle.theta[k];
    obs.p_req = demand_power(obs.v_kmh, obs.accel, obs.slope, obs.yaw, params.vehicle);
    obs.planned = planned_window(cycle, k, opt.windows.planned);
    state.soc = soc;
    state.step = static_cast<long>(k);
    state.push_velocity(obs.v_kmh / 3.6, opt.windows.history);

    const ControlCommand cmd = strategy.step(state, obs);

    SimRecord rec;
    rec.t = cycle.t[k];
    rec.v_kmh = obs.v_kmh;
    rec.soc = soc;
    rec.p_traction = obs.p_req;
    rec.fallback = cmd.fallback;
    rec.saturated = cmd.saturated;

    constexpr double kTol = 1e-6;
    bool corrected = false;
    double speed = cmd.engine_speed;
    if (!(speed >= g.idle_speed - kTol && speed <= g.speed_max + kTol)) corrected = true;
    speed = std::clamp(speed, g.idle_speed, g.speed_max);
    const double slew = g.speed_rate_max * dt;
    if (std::abs(speed - shaft) > slew + kTol) corrected = true;
    speed = std::clamp(speed, shaft - slew, shaft + slew);
    const double rate = (speed - shaft) / dt;
    const double cap = gen_torque_headroom(speed, rate, g);
    if (cmd.gen_torque > cap + kTol || cmd.gen_torque < -kTol) corrected = true;
    double p_g = gen_elec_power(std::clamp(cmd.gen_torque, 0.0, cap), speed, g);

    const auto [p_low, p_high] = battery_power_window(soc, b, dt);
    double p_b = obs.p_req - p_g;
    double brake = 0.0;
    if (obs.p_req < 0.0 && cmd.p_b > p_b) {
      brake = std::min(cmd.p_b - p_b, -obs.p_req);
      p_b += brake;
    }
    if (p_b < p_low) {
      const double extra = std::min(p_low - p_b, std::max(0.0, -obs.p_req - brake));
      brake += extra;
      p_b += extra;
      if (p_b < p_low) {
        p_g -= p_low - p_b;
        p_b = p_low;
        rec.saturated = true;
      }
    } else if (p_b > p_high) {
      const double needed = obs.p_req - p_high;
      if (needed <= gen_elec_power(cap, speed, g)) {
        p_g = needed;
        p_b = p_high;
        rec.saturated = true;
      }
    }
    if (corrected) ++log.command_violations;

    rec.p_brake = brake;
    rec.p_req = obs.p_req + brake;
    rec.p_b = p_b;
    rec.p_g = p_g;
    rec.engine_speed = speed;
    try {
      const OperatingPoint op = genset_solve(speed, p_g, rate, g);
      rec.engine_torque = op.engine_torque;
      rec.gen_torque = op.gen_torque;
      rec.fuel_rate = op.fuel_rate;
      const double next = battery_soc_step(soc, p_b, b, dt);
      fuel_cum += op.fuel_rate * dt;
      rec.fuel_cum = fuel_cum;
      soc = next;
    } catch (const Error& e) {
      log.aborted = true;
      log.error = e.what();
      break;
    }
    shaft = speed;
    state.engine_speed = speed;
    state.gen_torque = rec.gen_torque;
    if (rec.fallback) ++log.fallback_steps;
    if (rec.saturated) ++log.saturated_steps;
    log.records.push_back(rec);
  }
  log.soc_final = soc;
  return log;
}

double equivalent_fuel(const SimLog& log, const PowertrainParams& params, double soc_target) {
  const auto& b = params.battery;
  const auto& g = params.genset;
  const double energy = (log.soc_init - log.soc_final) * b.capacity * voc_lookup(soc_target, b);
  return log.raw_fuel() + energy / (g.lower_heating_value * g.peak_efficiency * g.gen_eff);
}

double top_decile_efficiency(const GensetParams& g) {
  const auto& map = g.fuel_map;
  std::vector<double> eff;
  for (Eigen::Index c = 0; c < map.col_axis().size(); ++c) {
    const double n = map.col_axis()[c];
    if (n < g.idle_speed || n > g.speed_max) continue;
    for (Eigen::Index r = 0; r < map.row_axis().size(); ++r) {
      const double torque = map.row_axis()[r];
      if (torque <= 0.0 || torque > g.engine_torque_max(n)) continue;
      eff.push_back(engine_efficiency(torque, n, g));
    }
  }
  if (eff.empty()) throw InputError("fuel map has no loaded nodes inside the envelope");
  std::sort(eff.begin(), eff.end());
  return eff[static_cast<std::size_t>(std::floor(0.9 * static_cast<double>(eff.size() - 1)))];
}

double top_decile_fraction(const SimLog& log, const GensetParams& g, double threshold) {
  int loaded = 0, top = 0;
  for (const auto& r : log.records) {
    if (r.gen_torque <= 0.0) continue;
    ++loaded;
    const double torque = std::clamp(r.engine_torque, 0.0, g.engine_torque_max(r.engine_speed));
    if (engine_efficiency(torque, r.engine_speed, g) >= threshold) ++top;
  }
  return loaded > 0 ? static_cast<double>(top) / loaded : 0.0;
}

double peak_soc_deviation(const SimLog& log, double target) {
  double peak = std::abs(log.soc_final - target);
  for (const auto& r : log.records) peak = std::max(peak, std::abs(r.soc - target));
  return peak;
}

double max_balance_residual(const SimLog& log) {
  double worst = 0.0;
  for (const auto& r : log.records) {
    const double scale = std::max({std::abs(r.p_req), std::abs(r.p_g), std::abs(r.p_b), 1.0});
    worst = std::max(worst, std::abs(r.p_g + r.p_b - r.p_req) / scale);
  }
  return worst;
}

OcpProblem cycle_problem(const DrivingCycle& cycle, const MpcConfig& mpc, const SimOptions& opt) {
  cycle.validate();
  OcpProblem prob;
  prob.v_kmh = cycle.v_kmh;
  prob.accel = forward_accel(cycle.v_kmh, cycle.v_kmh[cycle.size() - 1], cycle.dt);
  prob.yaw = cycle.omega;
  prob.slope = cycle.theta;
  prob.soc_init = opt.soc_init;
  prob.soc_target = mpc.soc_target;
  prob.speed_init = opt.speed_init;
  prob.w1 = mpc.w1;
  prob.w2 = mpc.w2;
  prob.dt = cycle.dt;
  prob.terminal = TerminalMode::hard;
  prob.speed_state = mpc.speed_state;
  return prob;
}

DpSolution global_dp_benchmark(const DrivingCycle& cycle, const PowertrainParams& params,
                               const BenchmarkConfig& bench, const MpcConfig& mpc,
                               const SimOptions& opt) {
  OcpProblem prob = cycle_problem(cycle, mpc, opt);
  prob.w2 = bench.w2;
  const SocGrid grid = SocGrid::span(params, bench.grid_m, bench.grid_q);
  try {
    return dp_solve(prob, grid, params);
  } catch (const InfeasibleError&) {
    prob.terminal = TerminalMode::soft;
    DpSolution sol = dp_solve(prob, grid, params);
    sol.relaxed_terminal = true;
    return sol;
  }
}

const StrategyRow& ComparisonReport::row(const std::string& name) const {
  for (const auto& r : strategies) {
    if (r.name == name) return r;
  }
  throw InputError("report has no row '" + name + "'");
}

ComparisonReport compare_strategies(const CompareInputs& in) {
  if (!in.cycle || !in.params) throw InputError("compare: cycle and params are required");
  const PowertrainParams& params = *in.params;
  const double target = in.mpc.soc_target;
  const double threshold = top_decile_efficiency(params.genset);
  ComparisonReport report;

  for (const auto& name : in.strategies) {
    StrategyRow row;
    row.name = name;
    try {
      std::unique_ptr<Strategy> strategy;
      if (name == "pf") {
        strategy = std::make_unique<PowerFollowing>(params, in.pf);
      } else if (name == "mpc-nn" || name == "mpc-cnnlstm") {
        auto model = name == "mpc-nn" ? in.nn : in.cnn_lstm;
        if (!model) throw InputError("no predictor for " + name);
        strategy = std::make_unique<MpcController>(name, params, in.mpc, in.pf, model);
      } else if (name == "dp") {
        const DpSolution sol = global_dp_benchmark(*in.cycle, params, in.bench, in.mpc, in.sim);
        if (sol.relaxed_terminal) row.status = "relaxed-terminal";
        strategy = std::make_unique<TrajectoryReplay>(name, sol.trajectory);
      } else {
        throw InputError("unknown strategy '" + name + "'");
      }
      row.log = simulate(*in.cycle, *strategy, params, in.sim);
      if (row.log.aborted) throw BoundViolation(row.log.error);
      row.ok = true;
      if (row.status.empty()) row.status = "ok";
      row.raw_fuel = row.log.raw_fuel();
      row.soc_init = row.log.soc_init;
      row.soc_final = row.log.soc_final;
      row.equivalent_fuel = equivalent_fuel(row.log, params, target);
      row.fallback_steps = row.log.fallback_steps;
      row.saturated_steps = row.log.saturated_steps;
      row.top_decile_fraction = top_decile_fraction(row.log, params.genset, threshold);
      row.peak_soc_deviation = peak_soc_deviation(row.log, target);
    } catch (const std::exception& e) {
      row.ok = false;
      row.status = std::string("error: ") + e.what();
    }
    report.strategies.push_back(std::move(row));
  }
  if (!report.strategies.empty() && report.strategies.front().ok) {
    const double base = report.strategies.front().equivalent_fuel;
    for (auto& r : report.strategies) {
      if (r.ok) r.improvement_pct = 100.0 * (base - r.equivalent_fuel) / base;
    }
  }
  if (in.rmse_windows) {
    for (const auto& m : in.rmse_models) {
      report.predictors.push_back(
          {to_string(m->kind()), evaluate_rmse_kmh(*m, *in.rmse_windows), in.rmse_windows->size()});
    }
  }
  return report;
}

void write_cycle_csv(std::ostream& os, const DrivingCycle& c, const std::string& comment) {
  os << comment << '\n' << "t,v_kmh,theta,omega,v_planned_kmh\n";
  for (Eigen::Index k = 0; k < c.size(); ++k) {
    os << fmt(c.t[k], 3) << ',' << fmt(c.v_kmh[k], 6) << ',' << fmt(c.theta[k], 6) << ','
       << fmt(c.omega[k], 6) << ',' << fmt(c.v_planned_kmh[k], 6) << '\n';
  }
}

DrivingCycle read_cycle_csv(std::istream& is, const std::string& what) {
  const CsvTable t = read_csv(is, what);
  DrivingCycle c;
  c.t = t.col("t");
  c.v_kmh = t.col("v_kmh");
  c.theta = t.column("theta") >= 0 ? t.col("theta") : Eigen::VectorXd::Zero(c.t.size());
  c.omega = t.column("omega") >= 0 ? t.col("omega") : Eigen::VectorXd::Zero(c.t.size());
  c.v_planned_kmh = t.column("v_planned_kmh") >= 0 ? t.col("v_planned_kmh") : c.v_kmh;
  c.dt = c.size() > 1 ? c.t[1] - c.t[0] : 1.0;
  c.validate();
  return c;
}

void write_simlog_csv(std::ostream& os, const SimLog& log, const std::string& comment) {
  os << comment << '\n'
     << "t,v_kmh,soc,p_traction,p_brake,p_req,p_b,p_g,engine_speed,engine_torque,gen_torque,"
        "fuel_rate,fuel_cum,fallback,saturated\n";
  for (const auto& r : log.records) {
    os << fmt(r.t, 3) << ',' << fmt(r.v_kmh, 4) << ',' << fmt(r.soc, 8) << ','
       << fmt(r.p_traction, 3) << ',' << fmt(r.p_brake, 3) << ',' << fmt(r.p_req, 3) << ','
       << fmt(r.p_b, 3) << ',' << fmt(r.p_g, 3) << ',' << fmt(r.engine_speed, 3) << ','
       << fmt(r.engine_torque, 4) << ',' << fmt(r.gen_torque, 4) << ',' << fmt(r.fuel_rate, 6)
       << ',' << fmt(r.fuel_cum, 6) << ',' << int(r.fallback) << ',' << int(r.saturated) << '\n';
  }
}

void write_report_csv(std::ostream& os, const ComparisonReport& r, const std::string& comment) {
  os << comment << '\n'
     << "strategy,status,raw_fuel_g,soc_init,soc_final,delta_soc,equivalent_fuel_g,"
        "improvement_pct,fallback_steps,saturated_steps,top_decile_fraction,peak_soc_deviation\n";
  for (const auto& s : r.strategies) {
    os << s.name << ',' << s.status << ',' << fmt(s.raw_fuel, 4) << ',' << fmt(s.soc_init, 6)
       << ',' << fmt(s.soc_final, 6) << ',' << fmt(s.soc_init - s.soc_final, 6) << ','
       << fmt(s.equivalent_fuel, 4) << ',' << fmt(s.improvement_pct, 3) << ',' << s.fallback_steps
       << ',' << s.saturated_steps << ',' << fmt(s.top_decile_fraction, 4) << ','
       << fmt(s.peak_soc_deviation, 6) << '\n';
  }
}

void write_prediction_csv(std::ostream& os, const ComparisonReport& r, const std::string& comment) {
  os << comment << '\n' << "predictor,rmse_kmh,windows\n";
  for (const auto& p : r.predictors) {
    os << p.name << ',' << fmt(p.rmse_kmh, 6) << ',' << p.windows << '\n';
  }
}

void write_soc_trace_csv(std::ostream& os, const SimLog& log, const std::string& comment) {
  os << comment << '\n' << "t,soc\n";
  for (const auto& r : log.records) os << fmt(r.t, 3) << ',' << fmt(r.soc, 8) << '\n';
  if (!log.records.empty()) {
    os << fmt(log.records.back().t + log.dt, 3) << ',' << fmt(log.soc_final, 8) << '\n';
  }
}

void write_engine_points_csv(std::ostream& os, const SimLog& log, const GensetParams& g,
                             const std::string& comment) {
  os << comment << '\n' << "t,speed_rpm,torque_nm,efficiency\n";
  for (const auto& r : log.records) {
    const double torque = std::clamp(r.engine_torque, 0.0, g.engine_torque_max(r.engine_speed));
    os << fmt(r.t, 3) << ',' << fmt(r.engine_speed, 3) << ',' << fmt(r.engine_torque, 4) << ','
       << fmt(engine_efficiency(torque, r.engine_speed, g), 6) << '\n';
  }
}

}  // namespace hev
