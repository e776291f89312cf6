#include "hev/powertrain.hpp"

#include <cmath>
#include <sstream>

namespace hev {
namespace {

void require(bool ok, const char* what) {
  if (!ok) throw InputError(what);
}

bool in_unit_interval_open_left(double x) { return x > 0.0 && x <= 1.0; }

}  // namespace

void VehicleParams::validate() const {
  require(mass > 0.0, "vehicle.mass must be positive");
  require(wheel_radius > 0.0, "vehicle.wheel_radius must be positive");
  require(track_length > 0.0, "vehicle.track_length must be positive");
  require(gravity > 0.0, "vehicle.gravity must be positive");
  require(in_unit_interval_open_left(motor_eff), "vehicle.motor_eff must lie in (0,1]");
  require(in_unit_interval_open_left(transmission_eff),
          "vehicle.transmission_eff must lie in (0,1]");
  require(rolling_coeff >= 0.0 && air_coeff >= 0.0 && frontal_area >= 0.0 &&
              steering_coeff >= 0.0,
          "vehicle resistance coefficients must be non-negative");
}

void BatteryParams::validate() const {
  require(capacity > 0.0, "battery.capacity must be positive");
  require(resistance > 0.0, "battery.resistance must be positive");
  require(0.0 <= soc_min && soc_min < soc_max && soc_max <= 1.0,
          "battery SOC window must satisfy 0 <= soc_min < soc_max <= 1");
  require(p_charge_max <= 0.0 && p_discharge_max >= 0.0,
          "battery power limits must satisfy p_charge_max <= 0 <= p_discharge_max");
  require(!voc_curve.empty(), "battery.voc_curve is empty");
  require(voc_curve.contains(0.0) && voc_curve.contains(1.0),
          "battery.voc_curve must cover SOC in [0,1]");
  require(voc_curve.non_decreasing(), "battery.voc_curve must be non-decreasing in SOC");
}

void GensetParams::validate() const {
  require(idle_speed > 0.0 && idle_speed < speed_max, "genset speed range is empty");
  require(!engine_torque_max.empty() && !gen_torque_max.empty(), "genset torque curves missing");
  require(engine_torque_max.contains(idle_speed) && engine_torque_max.contains(speed_max),
          "engine torque curve must cover [idle_speed, speed_max]");
  require(gen_torque_max.contains(idle_speed) && gen_torque_max.contains(speed_max),
          "generator torque curve must cover [idle_speed, speed_max]");
  require(in_unit_interval_open_left(gen_eff), "genset.gen_eff must lie in (0,1]");
  require(engine_inertia >= 0.0 && gen_inertia >= 0.0, "genset inertias must be non-negative");
  require(speed_rate_max > 0.0 && torque_rate_max > 0.0, "genset rate limits must be positive");
  require(engine_power_max > 0.0, "genset.engine_power_max must be positive");
  require(!fuel_map.empty(), "genset.fuel_map missing");
  require(fuel_map.values().minCoeff() >= 0.0, "fuel map must be non-negative");
  require(fuel_map.contains(0.0, idle_speed) && fuel_map.contains(0.0, speed_max),
          "fuel map must cover zero torque over [idle_speed, speed_max]");
  require(lower_heating_value > 0.0 && in_unit_interval_open_left(peak_efficiency),
          "fuel heating value / peak efficiency invalid");
}

BilinearTable<double> synthesize_fuel_map(const FuelMapSpec& s, double idle_speed,
                                          double speed_max) {
  const auto n_torque = static_cast<Eigen::Index>(std::llround(s.torque_max / s.torque_step)) + 1;
  const auto n_speed =
      static_cast<Eigen::Index>(std::llround((speed_max - idle_speed) / s.speed_step)) + 1;
  Eigen::VectorXd torques = Eigen::VectorXd::LinSpaced(n_torque, 0.0, s.torque_max);
  Eigen::VectorXd speeds = Eigen::VectorXd::LinSpaced(n_speed, idle_speed, speed_max);
  Eigen::MatrixXd flow(n_torque, n_speed);
  for (Eigen::Index r = 0; r < n_torque; ++r) {
    for (Eigen::Index c = 0; c < n_speed; ++c) {
      const double ds = (speeds[c] - s.peak_speed) / 1000.0;
      const double dt = (torques[r] - s.peak_torque) / 100.0;
      const double eff = std::max(s.efficiency_floor, s.peak_efficiency -
                                                          s.speed_curvature * ds * ds -
                                                          s.torque_curvature * dt * dt);
      const double shaft = torques[r] * speeds[c] / kTorqueSpeedToPower;
      flow(r, c) = s.idle_flow + shaft / (eff * s.lower_heating_value);
    }
  }
  return {std::move(torques), std::move(speeds), std::move(flow)};
}

PiecewiseLinear<double> default_engine_torque_curve() {
  Eigen::VectorXd n(7), t(7);
  n << 800, 1200, 1600, 2000, 2400, 2800, 3200;
  // 310 N·m peak; the 3200 rpm knot sits on the 96 kW power limit.
  t << 220, 265, 300, 310, 310, 305, 286;
  return {n, t};
}

PiecewiseLinear<double> default_gen_torque_curve() {
  // Constant 290 N·m to the 2000 rpm rated point, constant rated power above.
  Eigen::VectorXd n(7), t(7);
  n << 800, 1200, 1600, 2000, 2400, 2800, 3200;
  t << 290, 290, 290, 290, 290.0 * 2000 / 2400, 290.0 * 2000 / 2800, 290.0 * 2000 / 3200;
  return {n, t};
}

GensetParams default_genset(const FuelMapSpec& spec) {
  GensetParams g;
  g.engine_torque_max = default_engine_torque_curve();
  g.gen_torque_max = default_gen_torque_curve();
  g.fuel_map = synthesize_fuel_map(spec, g.idle_speed, g.speed_max);
  g.lower_heating_value = spec.lower_heating_value;
  g.peak_efficiency = spec.peak_efficiency;
  return g;
}

PowertrainParams default_powertrain() {
  PowertrainParams p;
  p.genset = default_genset();
  return p;
}

double demand_power(double v_kmh, double accel, double slope, double yaw_rate,
                    const VehicleParams& p) {
  if (!std::isfinite(v_kmh) || !std::isfinite(accel) || !std::isfinite(slope) ||
      !std::isfinite(yaw_rate)) {
    throw InputError("demand_power: non-finite input");
  }
  if (v_kmh < 0.0) throw InputError("demand_power: negative speed");
  const double weight = p.mass * p.gravity;
  const double force = p.rolling_coeff * weight +
                       p.air_coeff * p.frontal_area * v_kmh * v_kmh / 21.15 + p.mass * accel +
                       weight * std::sin(slope);
  const double wheel =
      force * v_kmh / 3.6 + 0.25 * p.steering_coeff * weight * std::abs(yaw_rate) * p.track_length;
  if (wheel >= 0.0) return wheel / (p.motor_eff * p.transmission_eff);
  return wheel * p.motor_eff * p.transmission_eff;
}

std::optional<PowerSplit> balance_power(double p_req, double p_b) {
  const double p_g = p_req - p_b;
  if (p_g >= 0.0) return PowerSplit{p_g, 0.0};
  if (p_req < 0.0 && p_b <= 0.0) return PowerSplit{0.0, p_b - p_req};
  return std::nullopt;
}

double voc_lookup(double soc, const BatteryParams& b) {
  if (!(soc >= 0.0 && soc <= 1.0)) {
    std::ostringstream os;
    os << "voc_lookup: SOC " << soc << " outside [0,1]";
    throw InputError(os.str());
  }
  return b.voc_curve(soc);
}

double battery_current(double soc, double p_b, const BatteryParams& b) {
  if (!std::isfinite(p_b)) throw InputError("battery_current: non-finite power");
  const double voc = voc_lookup(soc, b);
  const double disc = voc * voc - 4.0 * b.resistance * p_b;
  if (disc < 0.0) {
    std::ostringstream os;
    os << "battery power " << p_b << " W exceeds the deliverable maximum at SOC " << soc;
    throw InfeasibleError(os.str());
  }
  return (voc - std::sqrt(disc)) / (2.0 * b.resistance);
}

double battery_soc_step(double soc, double p_b, const BatteryParams& b, double dt) {
  const double next = soc - dt * battery_current(soc, p_b, b) / b.capacity;
  constexpr double kSlack = 1e-9;
  if (next < b.soc_min - kSlack || next > b.soc_max + kSlack) {
    std::ostringstream os;
    os << "SOC " << next << " leaves [" << b.soc_min << ", " << b.soc_max << "]";
    throw BoundViolation(os.str());
  }
  return next;
}

double battery_power_from_dsoc(double dsoc, double soc, const BatteryParams& b, double dt) {
  if (!std::isfinite(dsoc)) throw InputError("battery_power_from_dsoc: non-finite dsoc");
  const double charge_rate = b.capacity * dsoc / dt;  // -current
  return -voc_lookup(soc, b) * charge_rate - charge_rate * charge_rate * b.resistance;
}

double fuel_rate(double engine_torque, double speed, const GensetParams& g) {
  if (speed < g.idle_speed || speed > g.speed_max || engine_torque < 0.0 ||
      engine_torque > g.engine_torque_max(speed)) {
    std::ostringstream os;
    os << "fuel_rate: (" << engine_torque << " N·m, " << speed << " rpm) outside engine envelope";
    throw InputError(os.str());
  }
  return g.fuel_map(engine_torque, speed);
}

double engine_efficiency(double engine_torque, double speed, const GensetParams& g) {
  const double flow = fuel_rate(engine_torque, speed, g);
  if (flow <= 0.0) return 0.0;
  return engine_torque * speed / kTorqueSpeedToPower / (flow * g.lower_heating_value);
}

std::optional<OperatingPoint> try_genset_solve(double speed, double p_g_target,
                                               double speed_rate, const GensetParams& g) {
  constexpr double kTol = 1e-9;
  if (!(speed >= g.idle_speed - kTol && speed <= g.speed_max + kTol)) return std::nullopt;
  if (!(p_g_target >= 0.0) || !std::isfinite(speed_rate)) return std::nullopt;
  speed = std::clamp(speed, g.idle_speed, g.speed_max);

  OperatingPoint op;
  op.speed = speed;
  op.gen_torque = kTorqueSpeedToPower * p_g_target / (speed * g.gen_eff);
  op.engine_torque = op.gen_torque + shaft_inertia_torque(speed_rate, g);
  op.mech_power = op.gen_torque * speed / kTorqueSpeedToPower;
  op.elec_power = op.mech_power * g.gen_eff;

  const double engine_cap = g.engine_torque_max(speed);
  if (op.gen_torque > g.gen_torque_max(speed) + kTol) return std::nullopt;
  if (op.engine_torque > engine_cap + kTol) return std::nullopt;
  if (op.engine_torque * speed / kTorqueSpeedToPower > g.engine_power_max + 1e-6) {
    return std::nullopt;
  }
  // Shaft deceleration can drive the engine; it then only burns the idle flow.
  op.fuel_rate = g.fuel_map(std::clamp(op.engine_torque, 0.0, engine_cap), speed);
  return op;
}

OperatingPoint genset_solve(double speed, double p_g_target, double speed_rate,
                            const GensetParams& g) {
  if (speed < g.idle_speed || speed > g.speed_max) {
    std::ostringstream os;
    os << "genset_solve: speed " << speed << " rpm outside [" << g.idle_speed << ", "
       << g.speed_max << "]";
    throw InputError(os.str());
  }
  if (!(p_g_target >= 0.0)) throw InputError("genset_solve: negative power target");
  auto op = try_genset_solve(speed, p_g_target, speed_rate, g);
  if (!op) {
    std::ostringstream os;
    os << "genset_solve: " << p_g_target << " W at " << speed << " rpm violates torque envelope";
    throw InfeasibleError(os.str());
  }
  return *op;
}

double max_gen_torque(double speed, const GensetParams& g) {
  return std::min({g.gen_torque_max(speed), g.engine_torque_max(speed),
                   g.engine_power_max * kTorqueSpeedToPower / speed});
}

double max_electrical_power(const GensetParams& g) {
  double best = 0.0;
  for (double n = g.idle_speed; n <= g.speed_max + 1e-9; n += 5.0) {
    best = std::max(best, max_gen_torque(n, g) * n / kTorqueSpeedToPower * g.gen_eff);
  }
  return best;
}

double gen_torque_headroom(double speed, double rate, const GensetParams& g) {
  const double inertia = shaft_inertia_torque(rate, g);
  return std::max(0.0, std::min({g.gen_torque_max(speed), g.engine_torque_max(speed) - inertia,
                                 g.engine_power_max * kTorqueSpeedToPower / speed - inertia}));
}

}  // namespace hev
