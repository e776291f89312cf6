#pragma once

#include <optional>

#include "hev/interp.hpp"

namespace hev {

// Shaft power P = T·n / kTorqueSpeedToPower with T in N·m and n in rpm.
inline constexpr double kTorqueSpeedToPower = 9.55;
inline constexpr double kPi = 3.14159265358979323846;

struct VehicleParams {
  double mass = 9359.0;               // kg
  double transmission_ratio = 14.89;
  double wheel_radius = 0.2654;       // m, drive sprocket
  double rolling_coeff = 0.04;        // f
  double air_coeff = 1.0;             // C
  double frontal_area = 3.0;          // A, m²
  double steering_coeff = 0.6;        // μ
  double track_length = 3.0;          // L, m (ground contact)
  double gravity = 9.81;
  double motor_eff = 0.9;
  double transmission_eff = 0.95;

  void validate() const;
};

struct BatteryParams {
  double capacity = 96.0 * 3600.0;  // C_b in coulombs
  double resistance = 0.1;          // R_b, ohm
  PiecewiseLinear<double> voc_curve{Eigen::Vector2d(0.0, 1.0), Eigen::Vector2d(300.0, 340.0)};
  double soc_min = 0.6;
  double soc_max = 0.8;
  // Sign convention: positive battery power discharges.
  double p_charge_max = -80e3;
  double p_discharge_max = 120e3;

  void validate() const;
};

/// Parameters of the bench-map stand-in: efficiency bowl around a sweet spot.
struct FuelMapSpec {
  double lower_heating_value = 42500.0;  // J/g
  double peak_efficiency = 0.36;
  double peak_speed = 2200.0;            // rpm
  double peak_torque = 240.0;            // N·m
  double speed_curvature = 0.08;         // efficiency drop per (1000 rpm)²
  double torque_curvature = 0.05;        // efficiency drop per (100 N·m)²
  double efficiency_floor = 0.15;
  double idle_flow = 0.15;               // g/s at zero torque
  double torque_step = 20.0;
  double torque_max = 320.0;
  double speed_step = 100.0;
};

struct GensetParams {
  double idle_speed = 800.0;     // rpm
  double speed_max = 3200.0;     // rpm
  PiecewiseLinear<double> engine_torque_max;
  double engine_power_max = 96e3;
  PiecewiseLinear<double> gen_torque_max;
  double gen_eff = 0.95;
  double engine_inertia = 0.8;   // kg·m²
  double gen_inertia = 0.4;      // kg·m²
  double speed_rate_max = 400.0;   // rpm/s
  double torque_rate_max = 500.0;  // N·m/s
  BilinearTable<double> fuel_map;  // rows: torque N·m, cols: speed rpm, cells: g/s
  double lower_heating_value = 42500.0;  // J/g
  double peak_efficiency = 0.36;         // best brake efficiency of the fuel map

  void validate() const;
};

struct PowertrainParams {
  VehicleParams vehicle;
  BatteryParams battery;
  GensetParams genset;

  void validate() const {
    vehicle.validate();
    battery.validate();
    genset.validate();
  }
};

struct OperatingPoint {
  double speed = 0.0;          // rpm, shared by engine and generator
  double engine_torque = 0.0;  // N·m, includes the shaft acceleration torque
  double gen_torque = 0.0;     // N·m
  double mech_power = 0.0;     // W at the generator shaft, gen_torque·speed/9.55
  double elec_power = 0.0;     // W onto the DC bus
  double fuel_rate = 0.0;      // g/s
};

BilinearTable<double> synthesize_fuel_map(const FuelMapSpec& spec, double idle_speed,
                                          double speed_max);
PiecewiseLinear<double> default_engine_torque_curve();
PiecewiseLinear<double> default_gen_torque_curve();
GensetParams default_genset(const FuelMapSpec& spec = {});
PowertrainParams default_powertrain();

/// Traction + steering power demanded from the DC bus. `v_kmh` in km/h,
/// `accel` in m/s², `slope` in rad, `yaw_rate` in rad/s (sign ignored).
/// Negative results are regenerated power after motor and driveline losses.
double demand_power(double v_kmh, double accel, double slope, double yaw_rate,
                    const VehicleParams& p);

struct PowerSplit {
  double p_g = 0.0;      // W from the genset onto the bus
  double p_brake = 0.0;  // W dissipated by the friction brakes
};

/// Balances traction demand `p_req` against battery power `p_b`. The genset
/// covers any shortfall; while braking (p_req < 0) the friction brakes take
/// regenerated power the battery does not absorb. nullopt when the balance
/// would need the genset to absorb power.
std::optional<PowerSplit> balance_power(double p_req, double p_b);

double voc_lookup(double soc, const BatteryParams& b);

/// Internal-resistance battery current for terminal power `p_b` (A, positive discharging).
double battery_current(double soc, double p_b, const BatteryParams& b);

double battery_soc_step(double soc, double p_b, const BatteryParams& b, double dt);

/// Battery power that moves SOC by `dsoc` over one step of length `dt`;
/// the exact inverse of battery_soc_step.
double battery_power_from_dsoc(double dsoc, double soc, const BatteryParams& b, double dt = 1.0);

/// Torque needed to accelerate the rigid engine-generator shaft at `speed_rate` rpm/s.
inline double shaft_inertia_torque(double speed_rate, const GensetParams& g) {
  return kPi / 30.0 * (g.engine_inertia + g.gen_inertia) * speed_rate;
}

double fuel_rate(double engine_torque, double speed, const GensetParams& g);

/// Brake efficiency of the engine at an operating point (0 at zero torque).
double engine_efficiency(double engine_torque, double speed, const GensetParams& g);

/// Solves the rigid engine-generator coupling for an electrical target.
/// Returns nullopt when the speed or either torque envelope is violated.
std::optional<OperatingPoint> try_genset_solve(double speed, double p_g_target, double speed_rate,
                                               const GensetParams& g);
OperatingPoint genset_solve(double speed, double p_g_target, double speed_rate,
                            const GensetParams& g);

/// Largest steady generator torque at `speed` allowed by both envelopes.
double max_gen_torque(double speed, const GensetParams& g);
double max_electrical_power(const GensetParams& g);

/// Largest generator torque at `speed` while the shaft accelerates at `rate` rpm/s.
double gen_torque_headroom(double speed, double rate, const GensetParams& g);
inline double gen_elec_power(double gen_torque, double speed, const GensetParams& g) {
  return gen_torque * speed / kTorqueSpeedToPower * g.gen_eff;
}
inline double gen_torque_for(double p_g, double speed, const GensetParams& g) {
  return kTorqueSpeedToPower * p_g / (speed * g.gen_eff);
}

}  // namespace hev
