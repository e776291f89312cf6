#include "hev/params.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <variant>

#include "hev/csv.hpp"

namespace hev {
namespace {

using Slot = std::variant<double*, int*, bool*>;

std::map<std::string, Slot> slots(Config& c) {
  auto& v = c.powertrain.vehicle;
  auto& b = c.powertrain.battery;
  auto& g = c.powertrain.genset;
  auto& f = c.fuel;
  auto& p = c.planner;
  auto& s = c.scenario;
  auto& w = c.windows;
  auto& t = c.training;
  return {
      {"vehicle.mass", &v.mass},
      {"vehicle.transmission_ratio", &v.transmission_ratio},
      {"vehicle.wheel_radius", &v.wheel_radius},
      {"vehicle.rolling_coeff", &v.rolling_coeff},
      {"vehicle.air_coeff", &v.air_coeff},
      {"vehicle.frontal_area", &v.frontal_area},
      {"vehicle.steering_coeff", &v.steering_coeff},
      {"vehicle.track_length", &v.track_length},
      {"vehicle.gravity", &v.gravity},
      {"vehicle.motor_eff", &v.motor_eff},
      {"vehicle.transmission_eff", &v.transmission_eff},
      {"battery.capacity", &b.capacity},
      {"battery.resistance", &b.resistance},
      {"battery.soc_min", &b.soc_min},
      {"battery.soc_max", &b.soc_max},
      {"battery.p_charge_max", &b.p_charge_max},
      {"battery.p_discharge_max", &b.p_discharge_max},
      {"genset.idle_speed", &g.idle_speed},
      {"genset.speed_max", &g.speed_max},
      {"genset.engine_power_max", &g.engine_power_max},
      {"genset.gen_eff", &g.gen_eff},
      {"genset.engine_inertia", &g.engine_inertia},
      {"genset.gen_inertia", &g.gen_inertia},
      {"genset.speed_rate_max", &g.speed_rate_max},
      {"genset.torque_rate_max", &g.torque_rate_max},
      {"fuel.lower_heating_value", &f.lower_heating_value},
      {"fuel.peak_efficiency", &f.peak_efficiency},
      {"fuel.peak_speed", &f.peak_speed},
      {"fuel.peak_torque", &f.peak_torque},
      {"fuel.speed_curvature", &f.speed_curvature},
      {"fuel.torque_curvature", &f.torque_curvature},
      {"fuel.efficiency_floor", &f.efficiency_floor},
      {"fuel.idle_flow", &f.idle_flow},
      {"planner.v_max", &p.v_max},
      {"planner.a_lat_max", &p.a_lat_max},
      {"planner.a_lon_max", &p.a_lon_max},
      {"planner.d_lon_max", &p.d_lon_max},
      {"planner.j_lon_max", &p.j_lon_max},
      {"planner.v_start", &p.v_start},
      {"planner.v_end", &p.v_end},
      {"planner.epsilon", &p.epsilon},
      {"planner.max_iterations", &p.max_iterations},
      {"planner.v_floor", &p.v_floor},
      {"scenario.v_max", &s.planner.v_max},
      {"scenario.a_lat_max", &s.planner.a_lat_max},
      {"scenario.a_lon_max", &s.planner.a_lon_max},
      {"scenario.d_lon_max", &s.planner.d_lon_max},
      {"scenario.j_lon_max", &s.planner.j_lon_max},
      {"scenario.k_track", &s.k_track},
      {"scenario.noise_sigma", &s.noise_sigma},
      {"scenario.dt", &s.dt},
      {"scenario.train_episodes", &s.train_episodes},
      {"scenario.test_episodes", &s.test_episodes},
      {"scenario.path_length_min", &s.path_length_min},
      {"scenario.path_length_max", &s.path_length_max},
      {"scenario.ds", &s.ds},
      {"scenario.segment_min", &s.segment_min},
      {"scenario.segment_max", &s.segment_max},
      {"scenario.straight_fraction", &s.straight_fraction},
      {"scenario.kappa_min", &s.kappa_min},
      {"scenario.kappa_max", &s.kappa_max},
      {"scenario.limit_fraction", &s.limit_fraction},
      {"scenario.limit_min", &s.limit_min},
      {"scenario.max_steps", &s.max_steps},
      {"prediction.history", &w.history},
      {"prediction.planned", &w.planned},
      {"prediction.horizon", &w.horizon},
      {"training.validation_fraction", &t.validation_fraction},
      {"training.min_samples", &t.min_samples},
      {"training.exponential_theta", &t.exponential_theta},
      {"training.markov_bin", &t.markov_bin},
      {"training.nn_hidden", &t.nn_hidden},
      {"training.nn_max_iterations", &t.nn_max_iterations},
      {"training.cnn_filters", &t.cnn_filters},
      {"training.cnn_kernel", &t.cnn_kernel},
      {"training.lstm_hidden", &t.lstm_hidden},
      {"training.cnn_epochs", &t.cnn_epochs},
      {"training.cnn_batch", &t.cnn_batch},
      {"training.cnn_learning_rate", &t.cnn_learning_rate},
      {"training.cnn_momentum", &t.cnn_momentum},
      {"training.cnn_clip", &t.cnn_clip},
      {"training.cnn_patience", &t.cnn_patience},
      {"pf.tau", &c.pf.tau},
      {"pf.k_soc", &c.pf.k_soc},
      {"pf.p_corr", &c.pf.p_corr},
      {"mpc.horizon", &c.mpc.horizon},
      {"mpc.control_horizon", &c.mpc.control_horizon},
      {"mpc.grid_m", &c.mpc.grid_m},
      {"mpc.grid_q", &c.mpc.grid_q},
      {"mpc.w1", &c.mpc.w1},
      {"mpc.w2", &c.mpc.w2},
      {"mpc.soc_target", &c.mpc.soc_target},
      {"mpc.speed_state", &c.mpc.speed_state},
      {"benchmark.grid_m", &c.bench.grid_m},
      {"benchmark.grid_q", &c.bench.grid_q},
      {"benchmark.w2", &c.bench.w2},
      {"sim.soc_init", &c.sim.soc_init},
      {"sim.speed_init", &c.sim.speed_init},
  };
}

std::string number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

void Config::sync() {
  pf.dt = scenario.dt;
  mpc.dt = scenario.dt;
  pf.soc_target = mpc.soc_target;
  sim.windows = windows;
}

void Config::validate() const {
  powertrain.validate();
  planner.validate();
  scenario.validate();
  windows.validate();
  mpc.validate();
  SocGrid::span(powertrain, mpc.grid_m, mpc.grid_q);
  SocGrid::span(powertrain, bench.grid_m, bench.grid_q);
  const auto& b = powertrain.battery;
  if (!(mpc.soc_target >= b.soc_min && mpc.soc_target <= b.soc_max)) {
    throw InputError("mpc.soc_target outside the battery SOC window");
  }
  if (!(sim.soc_init >= b.soc_min && sim.soc_init <= b.soc_max)) {
    throw InputError("sim.soc_init outside the battery SOC window");
  }
  if (!(pf.tau > 0.0) || !(pf.k_soc >= 0.0) || !(pf.p_corr >= 0.0)) {
    throw InputError("pf constants invalid");
  }
  if (mpc.horizon > windows.horizon) {
    throw InputError("mpc.horizon exceeds the predictor horizon");
  }
}

void apply_param(Config& cfg, const std::string& key, double value) {
  auto table = slots(cfg);
  if (key == "battery.voc_at_0" || key == "battery.voc_at_1") {
    auto& curve = cfg.powertrain.battery.voc_curve;
    Eigen::VectorXd knots = curve.knots();
    Eigen::VectorXd values = curve.values();
    if (knots.size() != 2) throw InputError(key + " only applies to an affine V_oc curve");
    values[key.back() == '0' ? 0 : 1] = value;
    curve = PiecewiseLinear<double>(knots, values);
    return;
  }
  const auto it = table.find(key);
  if (it == table.end()) throw InputError("unknown parameter '" + key + "'");
  if (!std::isfinite(value)) throw InputError("parameter '" + key + "' is not finite");
  std::visit(
      [&](auto* ptr) {
        using T = std::remove_pointer_t<decltype(ptr)>;
        if constexpr (std::is_same_v<T, double>) {
          *ptr = value;
        } else {
          if (value != std::floor(value)) throw InputError("parameter '" + key + "' must be an integer");
          if constexpr (std::is_same_v<T, bool>) {
            *ptr = value != 0.0;
          } else {
            *ptr = static_cast<int>(value);
          }
        }
      },
      it->second);
}

void apply_param_file(Config& cfg, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open parameter file '" + path + "'");
  std::string line;
  int lineno = 0;
  bool fuel_changed = false;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = path + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw InputError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string text = trim(line.substr(eq + 1));
    std::size_t used = 0;
    double value = 0.0;
    try {
      value = std::stod(text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != text.size()) throw InputError(where + ": '" + text + "' is not a number");
    try {
      apply_param(cfg, key, value);
    } catch (const InputError& e) {
      throw InputError(where + ": " + e.what());
    }
    if (key.rfind("fuel.", 0) == 0) fuel_changed = true;
  }
  if (fuel_changed) {
    auto& g = cfg.powertrain.genset;
    g.fuel_map = synthesize_fuel_map(cfg.fuel, g.idle_speed, g.speed_max);
    g.lower_heating_value = cfg.fuel.lower_heating_value;
    g.peak_efficiency = cfg.fuel.peak_efficiency;
  }
  cfg.sync();
}

std::string canonical_params(const Config& cfg) {
  Config copy = cfg;
  std::ostringstream os;
  for (const auto& [key, slot] : slots(copy)) {
    os << key << " = "
       << std::visit([](auto* p) { return number(static_cast<double>(*p)); }, slot) << '\n';
  }
  const auto& curve = cfg.powertrain.battery.voc_curve;
  for (Eigen::Index i = 0; i < curve.knots().size(); ++i) {
    os << "battery.voc_curve." << i << " = " << number(curve.knots()[i]) << ' '
       << number(curve.values()[i]) << '\n';
  }
  const auto& map = cfg.powertrain.genset.fuel_map;
  os << "genset.fuel_map =";
  for (Eigen::Index i = 0; i < map.values().size(); ++i) os << ' ' << number(map.values().data()[i]);
  os << '\n';
  return os.str();
}

std::uint64_t params_hash(const Config& cfg) { return fnv1a(canonical_params(cfg)); }

BilinearTable<double> read_fuel_map_csv(const std::string& path) {
  const CsvTable t = read_csv_file(path);
  if (t.header.size() < 3 || t.data.rows() < 2) throw InputError(path + ": fuel map too small");
  Eigen::VectorXd speeds(static_cast<Eigen::Index>(t.header.size()) - 1);
  for (std::size_t i = 1; i < t.header.size(); ++i) {
    try {
      speeds[static_cast<Eigen::Index>(i) - 1] = std::stod(t.header[i]);
    } catch (const std::exception&) {
      throw InputError(path + ": header cell '" + t.header[i] + "' is not a speed");
    }
  }
  Eigen::VectorXd torques = t.data.col(0);
  Eigen::MatrixXd flow = t.data.rightCols(t.data.cols() - 1);
  if ((flow.array() < 0.0).any()) throw InputError(path + ": negative fuel rate");
  return {std::move(torques), std::move(speeds), std::move(flow)};
}

PiecewiseLinear<double> read_voc_csv(const std::string& path) {
  const CsvTable t = read_csv_file(path);
  return {t.col("soc"), t.col("volts")};
}

}  // namespace hev
