#include <doctest.h>

#include <random>
#include <sstream>

#include "hev/dp.hpp"
#include "hev/csv.hpp"
#include "oracle/brute_force.hpp"
#include "oracle/instances.hpp"

using namespace hev;

namespace {

SocGrid narrow_grid(int m, int q, double lo, double cell) {
  SocGrid g;
  g.m = m;
  g.q = q;
  g.soc_min = lo;
  g.soc_max = lo + cell * m;
  return g;
}

double sum_costs(const DpSolution& sol) {
  double c = 0.0;
  for (const auto& s : sol.trajectory) c += s.stage.cost;
  return c;
}

}  // namespace

TEST_CASE("idle stage costs the idle flow") {
  const auto p = default_powertrain();
  auto prob = OcpProblem::constant(1, 0.0);
  prob.soc_init = prob.soc_target = 0.7;
  const auto r = stage_cost(0.7, 0.7, 800.0, 800.0, 0, prob, p);
  REQUIRE(r);
  CHECK(r->p_b == 0.0);
  CHECK(r->p_g == 0.0);
  CHECK(r->cost == doctest::Approx(p.genset.fuel_map(0.0, 800.0)).epsilon(1e-12));
}

TEST_CASE("stage_cost infeasibility markers") {
  const auto p = default_powertrain();
  auto prob = OcpProblem::constant(1, 18.0);
  CHECK_FALSE(stage_cost(0.7, 0.7, 800.0, 1400.0, 0, prob, p));
  // 0.001 SOC in one second is roughly 113 kW of charge, 0.002 roughly 227 kW of discharge.
  CHECK_FALSE(stage_cost(0.7, 0.698, 2000.0, 2000.0, 0, prob, p));
  CHECK_FALSE(stage_cost(0.7, 0.701, 2000.0, 2000.0, 0, prob, p));
}

TEST_CASE("braking surplus goes to the friction brakes, never the genset") {
  const auto p = default_powertrain();
  auto prob = OcpProblem::constant(1, 20.0);
  prob.accel[0] = -1.5;
  const double p_req = demand_power(20.0, -1.5, 0.0, 0.0, p.vehicle);
  REQUIRE(p_req < 0.0);
  const auto r = stage_cost(0.7, 0.7, 800.0, 800.0, 0, prob, p);
  REQUIRE(r);
  CHECK(r->p_g == 0.0);
  CHECK(r->p_brake == doctest::Approx(-p_req));
  // Discharging while braking would need the genset to absorb power.
  CHECK_FALSE(stage_cost(0.7, 0.6999, 800.0, 800.0, 0, prob, p));
}

TEST_CASE("single-step problem equals its stage cost") {
  const auto p = default_powertrain();
  auto prob = OcpProblem::constant(1, 18.0);
  prob.soc_init = 0.7;
  prob.soc_target = 0.7;
  prob.speed_init = 1600.0;
  const SocGrid g = narrow_grid(6, 5, 0.6997, 1e-4);
  const auto sol = dp_solve(prob, g, p);
  const auto& s = sol.trajectory.front();
  const auto r = stage_cost(s.soc_from, s.soc_to, s.speed_from, s.speed_to, 0, prob, p);
  REQUIRE(r);
  CHECK(sol.total_cost == r->cost);
}

TEST_CASE("matches exhaustive enumeration on the constant 18 km/h instance") {
  const auto p = default_powertrain();
  auto prob = OcpProblem::constant(5, 18.0);
  prob.soc_init = 0.7;
  prob.soc_target = 0.7;
  prob.speed_init = 800.0;
  prob.w2 = 1e6;
  const SocGrid g = narrow_grid(10, 4, 0.6995, 1e-4);
  const auto sol = dp_solve(prob, g, p);
  const auto ref = oracle::brute_force(prob, g, p);
  CHECK(sol.total_cost == doctest::Approx(ref.cost).epsilon(1e-12));
}

TEST_CASE("zero demand holds SOC at target on the cheapest idle column") {
  const auto p = default_powertrain();
  auto prob = OcpProblem::constant(4, 0.0);
  prob.soc_init = prob.soc_target = 0.7;
  const SocGrid g = narrow_grid(8, 5, 0.6996, 1e-4);
  const auto sol = dp_solve(prob, g, p);
  const auto ref = oracle::brute_force(prob, g, p);
  CHECK(sol.total_cost == doctest::Approx(ref.cost).epsilon(1e-12));
  for (const auto& s : sol.trajectory) {
    CHECK(s.soc_to == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(s.speed_to == 800.0);
    CHECK(s.stage.p_g == 0.0);
  }
}

TEST_CASE("random instances agree with the oracle") {
  std::mt19937_64 rng(7);
  int compared = 0;
  for (int t = 0; t < 40; ++t) {
    auto in = oracle::random_instance(rng, 4, 8, 4);
    const auto ref = oracle::brute_force(in.prob, in.grid, in.params);
    if (!std::isfinite(ref.cost)) {
      CHECK_THROWS_AS(dp_solve(in.prob, in.grid, in.params), InfeasibleError);
      continue;
    }
    const auto sol = dp_solve(in.prob, in.grid, in.params);
    CHECK(std::abs(sol.total_cost - ref.cost) <= 1e-9 * std::max(1.0, ref.cost));
    ++compared;
  }
  CHECK(compared > 20);
}

TEST_CASE("Bellman consistency along the traced path") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 20; ++t) {
    auto in = oracle::random_instance(rng);
    in.prob.speed_state = true;
    DpSolution sol;
    try {
      sol = dp_solve(in.prob, in.grid, in.params);
    } catch (const InfeasibleError&) {
      continue;
    }
    const auto n = in.prob.horizon();
    double acc = 0.0;
    double prev = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto& s = sol.trajectory[static_cast<std::size_t>(k)];
      const int i = in.grid.nearest_soc(s.soc_to);
      const int j = static_cast<int>(std::lround((s.speed_to - in.grid.speed_min) /
                                                 ((in.grid.speed_max - in.grid.speed_min) /
                                                  (in.grid.q - 1))));
      const auto r = stage_cost(s.soc_from, s.soc_to, s.speed_from, s.speed_to, k, in.prob,
                                in.params);
      REQUIRE(r);
      CHECK(r->cost == s.stage.cost);
      acc += r->cost;
      const double ctc = sol.cost_to_come[static_cast<std::size_t>(k)](i, j);
      CHECK(ctc == acc);
      CHECK(ctc >= prev);
      prev = ctc;
    }
    CHECK(sol.total_cost == acc);
  }
}

TEST_CASE("traced controls replay through the battery model") {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 20; ++t) {
    auto in = oracle::random_instance(rng);
    DpSolution sol;
    try {
      sol = dp_solve(in.prob, in.grid, in.params);
    } catch (const InfeasibleError&) {
      continue;
    }
    double soc = sol.soc_start;
    for (const auto& s : sol.trajectory) {
      CHECK(s.stage.p_b <= in.params.battery.p_discharge_max);
      CHECK(s.stage.p_b >= in.params.battery.p_charge_max);
      const double next = soc - battery_current(soc, s.stage.p_b, in.params.battery) /
                                    in.params.battery.capacity;
      CHECK(std::abs(next - s.soc_to) <= in.grid.soc_step());
      soc = s.soc_to;
      CHECK(std::abs(s.stage.p_g + s.stage.p_b - s.stage.p_brake - s.stage.p_req) <=
            1e-6 * std::max(1.0, std::abs(s.stage.p_req)));
    }
  }
}

TEST_CASE("raising the SOC weight never increases the tracking error") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 15; ++t) {
    auto in = oracle::random_instance(rng);
    in.prob.terminal = TerminalMode::soft;
    double last = std::numeric_limits<double>::infinity();
    for (double w2 : {0.0, 1e3, 1e5, 1e7, 1e9}) {
      in.prob.w2 = w2;
      DpSolution sol;
      try {
        sol = dp_solve(in.prob, in.grid, in.params);
      } catch (const InfeasibleError&) {
        break;
      }
      double dev = 0.0;
      for (const auto& s : sol.trajectory) {
        dev += (s.soc_to - in.prob.soc_target) * (s.soc_to - in.prob.soc_target);
      }
      CHECK(dev <= last + 1e-15);
      last = dev;
    }
  }
}

TEST_CASE("nested grid refinement never costs more") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 10; ++t) {
    auto in = oracle::random_instance(rng, 4, 6, 3);
    in.prob.soc_init = in.grid.soc_level(in.grid.m / 2);
    SocGrid fine = in.grid;
    fine.m = 2 * in.grid.m;
    fine.q = 2 * in.grid.q - 1;
    DpSolution coarse;
    try {
      coarse = dp_solve(in.prob, in.grid, in.params);
    } catch (const InfeasibleError&) {
      continue;
    }
    const auto refined = dp_solve(in.prob, fine, in.params);
    CHECK(refined.total_cost <= coarse.total_cost + 1e-9);
  }
}

TEST_CASE("ties resolve toward the lowest indices") {
  const auto p = default_powertrain();
  auto prob = OcpProblem::constant(1, 0.0);
  prob.w1 = 0.0;
  prob.w2 = 0.0;
  prob.soc_init = 0.7;
  prob.speed_state = false;
  const SocGrid g = narrow_grid(4, 3, 0.6998, 1e-4);
  const auto sol = dp_solve(prob, g, p);
  CHECK(sol.total_cost == 0.0);
  // Discharging at zero demand would need the genset to absorb power.
  CHECK(sol.trajectory[0].soc_to == g.soc_level(2));
  CHECK(sol.trajectory[0].speed_to == g.speed_level(0));
}

TEST_CASE("hard terminal returns to the snapped start") {
  const auto p = default_powertrain();
  auto prob = OcpProblem::constant(3, 25.0);
  prob.soc_init = 0.70004;
  prob.terminal = TerminalMode::hard;
  prob.w2 = 0.0;
  prob.speed_init = 1600.0;
  const SocGrid g = narrow_grid(10, 13, 0.6995, 1e-4);
  const auto sol = dp_solve(prob, g, p);
  CHECK(sol.trajectory.back().soc_to == sol.soc_start);
  CHECK(sol.snap_distance == doctest::Approx(sol.soc_start - 0.70004));
  CHECK(std::abs(sol.snap_distance) <= g.soc_step() / 2 + 1e-15);
}

TEST_CASE("infeasible horizon names the stage") {
  const auto p = default_powertrain();
  auto prob = OcpProblem::constant(3, 18.0);
  prob.v_kmh[1] = 90.0;
  prob.accel[1] = 3.0;
  try {
    dp_solve(prob, narrow_grid(4, 3, 0.6998, 1e-4), p);
    FAIL("expected InfeasibleError");
  } catch (const InfeasibleError& e) {
    CHECK(std::string(e.what()).find("stage 1") != std::string::npos);
  }
}

TEST_CASE("trajectory cost sums to the total and lattice dump lists reachable nodes") {
  const auto p = default_powertrain();
  auto prob = OcpProblem::constant(3, 10.0);
  const SocGrid g = narrow_grid(6, 4, 0.6997, 1e-4);
  const auto sol = dp_solve(prob, g, p);
  CHECK(sum_costs(sol) == doctest::Approx(sol.total_cost).epsilon(1e-14));
  std::stringstream ss;
  write_lattice_csv(ss, sol, g, prob);
  const auto t = read_csv(ss, "lattice");
  CHECK(t.header.size() == 6);
  CHECK(t.data.rows() > 0);
  CHECK(t.col("stage").maxCoeff() == 3.0);
}

TEST_CASE("problem validation") {
  auto prob = OcpProblem::constant(2, 10.0);
  prob.w2 = -1.0;
  CHECK_THROWS_AS(prob.validate(), InputError);
  SocGrid g;
  g.m = 1;
  CHECK_THROWS_AS(g.validate(), InputError);
}
