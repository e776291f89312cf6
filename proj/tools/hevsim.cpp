#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hev/csv.hpp"
#include "hev/params.hpp"

namespace fs = std::filesystem;
using namespace hev;

namespace {

constexpr int kExitInfeasible = 2;
constexpr int kExitInput = 3;

struct Common {
  std::uint64_t seed = 42;
  std::string params_file;
  std::string grid;
  int horizon = 0;
  std::string fuel_map;
  std::string voc;
};

Config load_config(const Common& c) {
  Config cfg;
  if (!c.params_file.empty()) apply_param_file(cfg, c.params_file);
  if (!c.fuel_map.empty()) cfg.powertrain.genset.fuel_map = read_fuel_map_csv(c.fuel_map);
  if (!c.voc.empty()) cfg.powertrain.battery.voc_curve = read_voc_csv(c.voc);
  if (!c.grid.empty()) {
    const auto comma = c.grid.find(',');
    try {
      if (comma == std::string::npos) throw std::invalid_argument("comma");
      cfg.mpc.grid_m = std::stoi(c.grid.substr(0, comma));
      cfg.mpc.grid_q = std::stoi(c.grid.substr(comma + 1));
    } catch (const std::exception&) {
      throw InputError("--grid expects m,q");
    }
    cfg.bench.grid_m = cfg.mpc.grid_m;
    cfg.bench.grid_q = cfg.mpc.grid_q;
  }
  if (c.horizon > 0) {
    cfg.mpc.horizon = c.horizon;
    cfg.mpc.control_horizon = c.horizon;
    cfg.windows.horizon = std::max(cfg.windows.horizon, c.horizon);
  }
  cfg.training.seed = c.seed;
  cfg.sync();
  cfg.validate();
  return cfg;
}

std::string comment(const Common& c, const Config& cfg) {
  return provenance_line(c.seed, params_hash(cfg));
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p);
  if (!os) throw InputError("cannot write '" + p.string() + "'");
  return os;
}

void write_episode(const fs::path& p, const DrivingCycle& c, const std::string& note) {
  auto os = open_out(p);
  os << note << '\n' << "t,v_actual,v_planned\n";
  for (Eigen::Index k = 0; k < c.size(); ++k) {
    os << fmt(c.t[k], 3) << ',' << fmt(c.v_kmh[k] / 3.6, 6) << ','
       << fmt(c.v_planned_kmh[k] / 3.6, 6) << '\n';
  }
}

CycleDataset read_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputError("dataset directory '" + dir.string() + "' missing");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  CycleDataset data;
  for (const auto& f : files) {
    const CsvTable t = read_csv_file(f.string());
    data.push_back({t.col("v_actual"), t.col("v_planned")});
  }
  if (data.empty()) throw InputError("no episode files in '" + dir.string() + "'");
  return data;
}

struct Datasets {
  CycleDataset train;
  CycleDataset test;
};

Datasets synthetic_data(std::uint64_t seed, const Config& cfg) {
  const auto cycles = generate_cycles(
      seed, cfg.scenario, cfg.scenario.train_episodes + cfg.scenario.test_episodes);
  CycleDataset all = to_dataset(cycles);
  Datasets d;
  d.train.assign(all.begin(), all.begin() + cfg.scenario.train_episodes);
  d.test.assign(all.begin() + cfg.scenario.train_episodes, all.end());
  return d;
}

fs::path model_path(const fs::path& dir, PredictorKind kind) {
  return dir / (to_string(kind) + ".model");
}

std::shared_ptr<const Predictor> obtain_model(PredictorKind kind, const std::string& models_dir,
                                              const CycleDataset& train, const Config& cfg) {
  if (!models_dir.empty()) {
    const fs::path p = model_path(models_dir, kind);
    if (fs::exists(p)) return std::make_shared<const Predictor>(Predictor::load(p.string()));
  }
  auto model = std::make_shared<Predictor>(train_predictor(kind, train, cfg.training, cfg.windows,
                                                           0.0, cfg.scenario.planner.v_max));
  if (!models_dir.empty()) {
    fs::create_directories(models_dir);
    model->save(model_path(models_dir, kind).string());
  }
  return model;
}

PathProfile read_path(const std::string& file) {
  const CsvTable t = read_csv_file(file);
  PathProfile path;
  if (t.column("x") >= 0 && t.column("y") >= 0) {
    path = path_from_xy(t.col("x"), t.col("y"));
  } else {
    path.s = t.col("s");
    path.kappa = t.col("kappa");
  }
  if (t.column("speed_limit") >= 0) path.speed_limit = t.col("speed_limit");
  path.validate();
  return path;
}

DrivingCycle cycle_from(const std::string& file, std::uint64_t seed, const Config& cfg) {
  if (file.empty()) return benchmark_cycle(seed, cfg.scenario);
  std::ifstream is(file);
  if (!is) throw InputError("cannot open cycle '" + file + "'");
  return read_cycle_csv(is, file);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Series-hybrid tracked vehicle energy-management simulator"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&common](CLI::App* sub) {
    sub->add_option("--seed", common.seed, "Random seed");
    sub->add_option("--params", common.params_file, "Parameter file (key = value)");
    sub->add_option("--grid", common.grid, "DP grid as m,q");
    sub->add_option("--horizon", common.horizon, "MPC prediction horizon (steps)");
    sub->add_option("--fuel-map", common.fuel_map, "Fuel map CSV");
    sub->add_option("--voc", common.voc, "Open-circuit voltage CSV (soc,volts)");
  };

  std::string path_in, out;
  auto* plan = app.add_subcommand("plan", "Plan a velocity profile for a path");
  add_common(plan);
  plan->add_option("--path", path_in, "Path CSV: s,kappa or x,y (optional speed_limit)")->required();
  plan->add_option("--out", out, "Profile CSV (s,v)")->required();

  auto* gen = app.add_subcommand("gen", "Generate the synthetic dataset and benchmark cycle");
  add_common(gen);
  gen->add_option("--out", out, "Output directory")->required();

  std::string kind_name, data_dir;
  auto* train = app.add_subcommand("train", "Train a velocity predictor");
  add_common(train);
  train->add_option("--kind", kind_name, "exponential|markov|multistep-nn|cnn-lstm|planned")
      ->required();
  train->add_option("--data", data_dir, "Directory of episode CSVs")->required();
  train->add_option("--out", out, "Model file")->required();

  std::string models_dir;
  auto* eval = app.add_subcommand("eval-pred", "Prediction RMSE table");
  add_common(eval);
  eval->add_option("--models", models_dir, "Directory of model files")->required();
  eval->add_option("--data", data_dir, "Directory of episode CSVs")->required();
  eval->add_option("--out", out, "Output CSV")->required();

  std::string cycle_file, strategy_name = "pf", lattice_file;
  auto* sim = app.add_subcommand("sim", "Closed-loop simulation of one strategy");
  add_common(sim);
  sim->add_option("--cycle", cycle_file, "Cycle CSV (default: benchmark cycle for --seed)");
  sim->add_option("--strategy", strategy_name, "pf|mpc-nn|mpc-cnnlstm|dp")
      ->check(CLI::IsMember({"pf", "mpc-nn", "mpc-cnnlstm", "dp"}));
  sim->add_option("--models", models_dir, "Directory of model files");
  sim->add_option("--out", out, "SimLog CSV")->required();
  sim->add_option("--dump-lattice", lattice_file, "Write the DP lattice CSV (dp strategy)");

  auto* compare = app.add_subcommand("compare", "Compare all strategies on the benchmark cycle");
  add_common(compare);
  compare->add_option("--models", models_dir, "Directory of model files (trained if missing)");
  compare->add_option("--cycle", cycle_file, "Cycle CSV (default: benchmark cycle for --seed)");
  compare->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  try {
    const Config cfg = load_config(common);
    const std::string note = comment(common, cfg);

    if (*plan) {
      const PathProfile path = read_path(path_in);
      const VelocityProfile v = plan_speed(path, cfg.planner);
      auto os = open_out(out);
      os << note << '\n' << "s,v\n";
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        os << fmt(path.s[i], 6) << ',' << fmt(v[i], 6) << '\n';
      }
    } else if (*gen) {
      const auto cycles = generate_cycles(
          common.seed, cfg.scenario, cfg.scenario.train_episodes + cfg.scenario.test_episodes);
      char name[32];
      for (std::size_t i = 0; i < cycles.size(); ++i) {
        const bool is_train = static_cast<int>(i) < cfg.scenario.train_episodes;
        std::snprintf(name, sizeof name, "episode_%04zu.csv", i);
        write_episode(fs::path(out) / (is_train ? "train" : "test") / name, cycles[i], note);
      }
      auto os = open_out(fs::path(out) / "benchmark_cycle.csv");
      write_cycle_csv(os, benchmark_cycle(common.seed, cfg.scenario), note);
    } else if (*train) {
      const PredictorKind kind = predictor_kind_from_string(kind_name);
      const Predictor model = train_predictor(kind, read_dataset(data_dir), cfg.training,
                                              cfg.windows, 0.0, cfg.scenario.planner.v_max);
      if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
      model.save(out);
      std::cout << to_string(kind) << " validation_rmse_kmh=" << fmt(model.validation_rmse(), 6)
                << '\n';
    } else if (*eval) {
      const WindowSet windows = extract_windows(read_dataset(data_dir), cfg.windows);
      auto os = open_out(out);
      os << note << '\n' << "predictor,rmse_kmh,windows\n";
      for (auto kind : {PredictorKind::exponential, PredictorKind::markov,
                        PredictorKind::multistep_nn, PredictorKind::cnn_lstm,
                        PredictorKind::planned}) {
        const fs::path p = model_path(models_dir, kind);
        if (!fs::exists(p)) continue;
        const Predictor m = Predictor::load(p.string());
        os << to_string(kind) << ',' << fmt(evaluate_rmse_kmh(m, windows), 6) << ','
           << windows.size() << '\n';
      }
    } else if (*sim) {
      const DrivingCycle cycle = cycle_from(cycle_file, common.seed, cfg);
      std::unique_ptr<Strategy> strategy;
      if (strategy_name == "pf") {
        strategy = std::make_unique<PowerFollowing>(cfg.powertrain, cfg.pf);
      } else if (strategy_name == "dp") {
        const DpSolution sol = global_dp_benchmark(cycle, cfg.powertrain, cfg.bench, cfg.mpc, cfg.sim);
        if (sol.relaxed_terminal) {
          std::cerr << "warning: hard terminal infeasible, relaxed to soft terminal\n";
        }
        if (!lattice_file.empty()) {
          auto os = open_out(lattice_file);
          os << note << '\n';
          write_lattice_csv(os, sol, SocGrid::span(cfg.powertrain, cfg.bench.grid_m, cfg.bench.grid_q),
                            cycle_problem(cycle, cfg.mpc, cfg.sim));
        }
        strategy = std::make_unique<TrajectoryReplay>("dp", sol.trajectory);
      } else {
        const auto kind =
            strategy_name == "mpc-nn" ? PredictorKind::multistep_nn : PredictorKind::cnn_lstm;
        std::shared_ptr<const Predictor> model;
        if (!models_dir.empty() && fs::exists(model_path(models_dir, kind))) {
          model = std::make_shared<const Predictor>(
              Predictor::load(model_path(models_dir, kind).string()));
        } else {
          model = obtain_model(kind, models_dir, synthetic_data(common.seed, cfg).train, cfg);
        }
        strategy = std::make_unique<MpcController>(strategy_name, cfg.powertrain, cfg.mpc, cfg.pf,
                                                   model);
      }
      const SimLog log = simulate(cycle, *strategy, cfg.powertrain, cfg.sim);
      auto os = open_out(out);
      write_simlog_csv(os, log, note);
      std::cout << strategy_name << " raw_fuel_g=" << fmt(log.raw_fuel(), 4)
                << " equivalent_fuel_g="
                << fmt(equivalent_fuel(log, cfg.powertrain, cfg.mpc.soc_target), 4)
                << " soc_final=" << fmt(log.soc_final, 6) << '\n';
      if (log.aborted) {
        std::cerr << "error: " << log.error << '\n';
        return kExitInfeasible;
      }
    } else if (*compare) {
      const Datasets data = synthetic_data(common.seed, cfg);
      const DrivingCycle cycle = cycle_from(cycle_file, common.seed, cfg);
      const WindowSet test_windows = extract_windows(data.test, cfg.windows);
      CompareInputs in;
      in.cycle = &cycle;
      in.params = &cfg.powertrain;
      in.pf = cfg.pf;
      in.mpc = cfg.mpc;
      in.bench = cfg.bench;
      in.sim = cfg.sim;
      for (auto kind : {PredictorKind::exponential, PredictorKind::markov,
                        PredictorKind::multistep_nn, PredictorKind::cnn_lstm,
                        PredictorKind::planned}) {
        in.rmse_models.push_back(obtain_model(kind, models_dir, data.train, cfg));
      }
      in.nn = in.rmse_models[2];
      in.cnn_lstm = in.rmse_models[3];
      in.rmse_windows = &test_windows;
      const ComparisonReport report = compare_strategies(in);

      const fs::path dir(out);
      {
        auto os = open_out(dir / "report.csv");
        write_report_csv(os, report, note);
      }
      {
        auto os = open_out(dir / "prediction.csv");
        write_prediction_csv(os, report, note);
      }
      for (const auto& row : report.strategies) {
        if (!row.ok) continue;
        auto soc = open_out(dir / ("soc_" + row.name + ".csv"));
        write_soc_trace_csv(soc, row.log, note);
        auto eng = open_out(dir / ("engine_" + row.name + ".csv"));
        write_engine_points_csv(eng, row.log, cfg.powertrain.genset, note);
      }
      bool all_ok = true;
      for (const auto& row : report.strategies) {
        std::cout << row.name << ' ' << row.status << " equivalent_fuel_g="
                  << fmt(row.equivalent_fuel, 4) << " improvement_pct="
                  << fmt(row.improvement_pct, 3) << '\n';
        all_ok = all_ok && row.ok;
      }
      if (!all_ok) return kExitInfeasible;
    }
  } catch (const InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const PlannerNonConvergence& e) {
    std::cerr << "planner: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
