#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "hev/speed_planner.hpp"
#include "hev/strategy.hpp"

namespace hev {

/// Uniformly sampled drive. Speeds in km/h, slope in rad, yaw rate in rad/s.
struct DrivingCycle {
  double dt = 1.0;
  Eigen::VectorXd t;
  Eigen::VectorXd v_kmh;
  Eigen::VectorXd theta;
  Eigen::VectorXd omega;
  Eigen::VectorXd v_planned_kmh;

  Eigen::Index size() const { return t.size(); }
  void validate() const;
  Episode episode() const;  // m/s series
};

CycleDataset to_dataset(const std::vector<DrivingCycle>& cycles);

struct ScenarioConfig {
  PlannerLimits planner = [] {
    PlannerLimits l;
    l.a_lon_max = 0.5;
    return l;
  }();
  double k_track = 0.6;
  double noise_sigma = 0.15;  // m/s per step
  double dt = 1.0;
  int train_episodes = 48;
  int test_episodes = 12;
  double path_length_min = 400.0;
  double path_length_max = 1200.0;
  double ds = 2.0;             // m between path points
  double segment_min = 30.0;   // m
  double segment_max = 150.0;
  double straight_fraction = 0.4;
  double kappa_min = 0.005;    // 1/m
  double kappa_max = 0.08;
  double limit_fraction = 0.35;
  double limit_min = 2.5;      // m/s
  int max_steps = 3000;

  void validate() const;
};

/// Drives the tracking plant along `profile` (planned speed over `path`).
DrivingCycle track_profile(const PathProfile& path, const VelocityProfile& profile,
                           const ScenarioConfig& cfg, std::uint64_t seed);

std::vector<DrivingCycle> generate_cycles(std::uint64_t seed, const ScenarioConfig& cfg, int count);

/// Steady cruise with speed-limit changes and gentle curves, a high-demand
/// fast segment, then a slow recovery segment ending at rest.
PathProfile benchmark_path();
DrivingCycle benchmark_cycle(std::uint64_t seed, const ScenarioConfig& cfg);

struct SimRecord {
  double t = 0.0;
  double v_kmh = 0.0;
  double soc = 0.0;          // at the start of the step
  double p_traction = 0.0;   // W, demand from the vehicle model
  double p_brake = 0.0;      // W, taken by the friction brakes
  double p_req = 0.0;        // W, bus demand = traction + brake
  double p_b = 0.0;
  double p_g = 0.0;
  double engine_speed = 0.0;
  double engine_torque = 0.0;
  double gen_torque = 0.0;
  double fuel_rate = 0.0;    // g/s
  double fuel_cum = 0.0;     // g, after this step
  bool fallback = false;
  bool saturated = false;
};

struct SimLog {
  std::string strategy;
  std::vector<SimRecord> records;
  double soc_init = 0.0;
  double soc_final = 0.0;
  double dt = 1.0;
  bool aborted = false;
  std::string error;
  int fallback_steps = 0;
  int saturated_steps = 0;
  int command_violations = 0;  // commands the plant had to correct

  double raw_fuel() const { return records.empty() ? 0.0 : records.back().fuel_cum; }
};

struct SimOptions {
  double soc_init = 0.7;
  double speed_init = 800.0;
  WindowConfig windows;
};

SimLog simulate(const DrivingCycle& cycle, Strategy& strategy, const PowertrainParams& params,
                const SimOptions& opt);

double equivalent_fuel(const SimLog& log, const PowertrainParams& params, double soc_target);

/// 90th percentile of brake efficiency over loaded fuel-map nodes inside the envelope.
double top_decile_efficiency(const GensetParams& g);
/// Share of loaded steps whose engine point reaches `threshold` efficiency.
double top_decile_fraction(const SimLog& log, const GensetParams& g, double threshold);

/// Worst SOC excursion from `target` over the log, and the final one.
double peak_soc_deviation(const SimLog& log, double target);
double max_balance_residual(const SimLog& log);  // relative

struct BenchmarkConfig {
  int grid_m = 4000;
  int grid_q = 13;
  double w2 = 0.0;
};

/// Whole-cycle DP with known demand and end SOC equal to the start; relaxes to
/// a soft terminal when that is infeasible.
DpSolution global_dp_benchmark(const DrivingCycle& cycle, const PowertrainParams& params,
                               const BenchmarkConfig& bench, const MpcConfig& mpc,
                               const SimOptions& opt);
OcpProblem cycle_problem(const DrivingCycle& cycle, const MpcConfig& mpc, const SimOptions& opt);

struct StrategyRow {
  std::string name;
  bool ok = false;
  std::string status;
  double raw_fuel = 0.0;
  double soc_init = 0.0;
  double soc_final = 0.0;
  double equivalent_fuel = 0.0;
  double improvement_pct = 0.0;  // vs the baseline row
  int fallback_steps = 0;
  int saturated_steps = 0;
  double top_decile_fraction = 0.0;
  double peak_soc_deviation = 0.0;
  SimLog log;
};

struct PredictorRow {
  std::string name;
  double rmse_kmh = 0.0;
  std::size_t windows = 0;
};

struct ComparisonReport {
  std::vector<StrategyRow> strategies;
  std::vector<PredictorRow> predictors;

  const StrategyRow& row(const std::string& name) const;
};

struct CompareInputs {
  const DrivingCycle* cycle = nullptr;
  const PowertrainParams* params = nullptr;
  PfConfig pf;
  MpcConfig mpc;
  BenchmarkConfig bench;
  SimOptions sim;
  std::vector<std::string> strategies{"pf", "mpc-nn", "mpc-cnnlstm", "dp"};
  std::shared_ptr<const Predictor> nn;
  std::shared_ptr<const Predictor> cnn_lstm;
  std::vector<std::shared_ptr<const Predictor>> rmse_models;
  const WindowSet* rmse_windows = nullptr;
};

/// Runs each strategy on the same cycle; a failing row is reported, not thrown.
/// The first strategy is the improvement baseline.
ComparisonReport compare_strategies(const CompareInputs& in);

void write_cycle_csv(std::ostream& os, const DrivingCycle& c, const std::string& comment);
DrivingCycle read_cycle_csv(std::istream& is, const std::string& what);
void write_simlog_csv(std::ostream& os, const SimLog& log, const std::string& comment);
void write_report_csv(std::ostream& os, const ComparisonReport& r, const std::string& comment);
void write_prediction_csv(std::ostream& os, const ComparisonReport& r, const std::string& comment);
void write_soc_trace_csv(std::ostream& os, const SimLog& log, const std::string& comment);
void write_engine_points_csv(std::ostream& os, const SimLog& log, const GensetParams& g,
                             const std::string& comment);

}  // namespace hev
