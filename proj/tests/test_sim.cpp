#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "hev/params.hpp"
#include "hev/sim.hpp"

using namespace hev;

namespace {

DrivingCycle make_cycle(const Eigen::VectorXd& v_kmh) {
  DrivingCycle c;
  const auto n = v_kmh.size();
  c.t = Eigen::VectorXd::LinSpaced(n, 0.0, static_cast<double>(n - 1));
  c.v_kmh = v_kmh;
  c.theta = Eigen::VectorXd::Zero(n);
  c.omega = Eigen::VectorXd::Zero(n);
  c.v_planned_kmh = v_kmh;
  return c;
}

DrivingCycle ramp_cycle() {
  Eigen::VectorXd v(60);
  for (int k = 0; k < 60; ++k) v[k] = k < 20 ? 1.5 * k : (k < 40 ? 30.0 : 30.0 - 1.5 * (k - 40));
  return make_cycle(v);
}

std::string temp_file(const std::string& name, const std::string& body) {
  const std::string path = "/tmp/hev_test_" + name;
  std::ofstream(path) << body;
  return path;
}

}  // namespace

TEST_CASE("standing still burns idle fuel only") {
  const auto p = default_powertrain();
  PowerFollowing pf(p, PfConfig{});
  const auto log = simulate(make_cycle(Eigen::VectorXd::Zero(10)), pf, p, SimOptions{});
  REQUIRE(log.records.size() == 10);
  CHECK_FALSE(log.aborted);
  CHECK(log.raw_fuel() == doctest::Approx(10.0 * fuel_rate(0.0, p.genset.idle_speed, p.genset)));
  CHECK(log.soc_final == 0.7);
}

TEST_CASE("every step balances power and accumulates fuel") {
  const auto p = default_powertrain();
  const auto cycle = ramp_cycle();
  PowerFollowing pf(p, PfConfig{});
  const auto log = simulate(cycle, pf, p, SimOptions{});
  REQUIRE_FALSE(log.aborted);
  CHECK(max_balance_residual(log) <= 1e-6);
  double fuel = 0.0, soc = log.soc_init;
  for (const auto& r : log.records) {
    CHECK(r.soc == soc);
    CHECK(r.p_g + r.p_b == doctest::Approx(r.p_req));
    CHECK(r.p_g >= 0.0);
    CHECK(r.p_brake >= 0.0);
    fuel += r.fuel_rate;
    CHECK(r.fuel_cum == doctest::Approx(fuel));
    soc = battery_soc_step(soc, r.p_b, p.battery, 1.0);
    CHECK(soc >= p.battery.soc_min);
    CHECK(soc <= p.battery.soc_max);
  }
  CHECK(log.soc_final == soc);
  CHECK(log.command_violations == 0);
}

TEST_CASE("simulation is deterministic") {
  const auto p = default_powertrain();
  const auto cycle = ramp_cycle();
  PowerFollowing a(p, PfConfig{}), b(p, PfConfig{});
  const auto la = simulate(cycle, a, p, SimOptions{});
  const auto lb = simulate(cycle, b, p, SimOptions{});
  std::ostringstream sa, sb;
  write_simlog_csv(sa, la, "# x");
  write_simlog_csv(sb, lb, "# x");
  CHECK(sa.str() == sb.str());
}

TEST_CASE("equivalent fuel charges the SOC difference at peak efficiency") {
  const auto p = default_powertrain();
  SimLog log;
  log.records.resize(1);
  log.records[0].fuel_cum = 100.0;
  log.soc_init = 0.71;
  log.soc_final = 0.70;
  // 0.01 * 345600 C * 328 V / (42500 J/g * 0.36 * 0.95)
  CHECK(equivalent_fuel(log, p, 0.7) == doctest::Approx(177.98885).epsilon(1e-7));
  log.soc_init = 0.69;
  CHECK(equivalent_fuel(log, p, 0.7) == doctest::Approx(22.01115).epsilon(1e-6));
}

TEST_CASE("replaying the benchmark trajectory tracks the DP cost") {
  const auto p = default_powertrain();
  const auto cycle = ramp_cycle();
  const BenchmarkConfig bench;
  const auto sol = global_dp_benchmark(cycle, p, bench, MpcConfig{}, SimOptions{});
  CHECK_FALSE(sol.relaxed_terminal);
  TrajectoryReplay dp("dp", sol.trajectory);
  const auto log = simulate(cycle, dp, p, SimOptions{});
  REQUIRE_FALSE(log.aborted);
  CHECK(log.raw_fuel() == doctest::Approx(sol.total_fuel).epsilon(1e-9));
  CHECK(std::abs(log.soc_final - 0.7) < 1e-8);
  CHECK(log.command_violations == 0);
}

TEST_CASE("comparison against itself shows no improvement") {
  const auto p = default_powertrain();
  const auto cycle = ramp_cycle();
  CompareInputs in;
  in.cycle = &cycle;
  in.params = &p;
  in.strategies = {"pf", "pf"};
  const auto report = compare_strategies(in);
  REQUIRE(report.strategies.size() == 2);
  CHECK(report.strategies[1].ok);
  CHECK(report.strategies[1].improvement_pct == 0.0);
  CHECK(report.strategies[0].equivalent_fuel == report.strategies[1].equivalent_fuel);

  in.strategies = {"pf", "mpc-nn"};
  const auto missing = compare_strategies(in);
  CHECK_FALSE(missing.strategies[1].ok);
  CHECK_FALSE(missing.strategies[1].status.empty());
}

TEST_CASE("scenario generation is seeded and respects the plant bounds") {
  ScenarioConfig cfg;
  const auto a = generate_cycles(7, cfg, 3);
  const auto b = generate_cycles(7, cfg, 3);
  const auto c = generate_cycles(8, cfg, 1);
  REQUIRE(a.size() == 3);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].v_kmh == b[i].v_kmh);
  CHECK(a[0].v_kmh != c[0].v_kmh);
  for (const auto& cy : a) {
    cy.validate();
    CHECK(cy.v_kmh.minCoeff() >= 0.0);
    CHECK(cy.v_kmh.maxCoeff() <= cfg.planner.v_max * 3.6 + 1e-9);
  }
  const auto bench = benchmark_cycle(42, cfg);
  CHECK(bench.v_kmh == benchmark_cycle(42, cfg).v_kmh);
  CHECK(bench.v_kmh[bench.size() - 1] < 3.0);
}

TEST_CASE("cycle csv round trip") {
  const auto cycle = ramp_cycle();
  std::stringstream ss;
  write_cycle_csv(ss, cycle, "# test");
  const auto back = read_cycle_csv(ss, "memory");
  CHECK(back.v_kmh.isApprox(cycle.v_kmh, 1e-12));
  CHECK(back.t.isApprox(cycle.t));
  std::stringstream bad("t,v\n0,1\n");
  CHECK_THROWS_AS(read_cycle_csv(bad, "bad"), InputError);
}

TEST_CASE("parameter files") {
  Config cfg;
  apply_param_file(cfg, temp_file("ok.params", "# comment\nbattery.soc_min = 0.55\n"));
  CHECK(cfg.powertrain.battery.soc_min == 0.55);
  CHECK_THROWS_AS(apply_param_file(cfg, temp_file("unknown.params", "battery.nope = 1\n")),
                  InputError);
  CHECK_THROWS_AS(apply_param_file(cfg, temp_file("junk.params", "battery.soc_min 0.5\n")),
                  InputError);
  CHECK_THROWS_AS(apply_param_file(cfg, "/nonexistent/file"), InputError);
  Config a, b;
  CHECK(params_hash(a) == params_hash(b));
  apply_param(b, "vehicle.mass", 2000.0);
  CHECK(params_hash(a) != params_hash(b));
}
