#pragma once

#include <cstdint>
#include <string>

#include "hev/sim.hpp"

namespace hev {

/// Everything a run depends on apart from the seed.
struct Config {
  PowertrainParams powertrain = default_powertrain();
  FuelMapSpec fuel;
  PlannerLimits planner;
  ScenarioConfig scenario;
  WindowConfig windows;
  TrainingConfig training;
  PfConfig pf;
  MpcConfig mpc;
  BenchmarkConfig bench;
  SimOptions sim;

  void validate() const;
  /// Copies shared settings (time step, windows, SOC target) into the
  /// sub-configurations that each need a copy.
  void sync();
};

/// Sets one dotted key; throws InputError for unknown keys or bad values.
void apply_param(Config& cfg, const std::string& key, double value);

/// Reads `key = number` lines; '#' starts a comment. Regenerates the fuel map
/// when any fuel.* key is present.
void apply_param_file(Config& cfg, const std::string& path);

/// Every key with its current value, one `key = value` line each, sorted.
std::string canonical_params(const Config& cfg);
std::uint64_t params_hash(const Config& cfg);

/// Header row: a label cell then speeds (rpm); each row: torque (N·m) then g/s.
BilinearTable<double> read_fuel_map_csv(const std::string& path);
/// soc,volts rows.
PiecewiseLinear<double> read_voc_csv(const std::string& path);

}  // namespace hev
