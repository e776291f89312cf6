#include <doctest.h>

#include <random>

#include "hev/powertrain.hpp"

using namespace hev;

TEST_CASE("demand power") {
  const auto v = default_powertrain().vehicle;
  CHECK(demand_power(0.0, 0.0, 0.0, 0.0, v) == 0.0);
  CHECK(demand_power(36.0, 0.0, 0.0, 0.0, v) == doctest::Approx(45102.9402).epsilon(1e-9));
  CHECK(demand_power(0.0, 0.0, 0.0, 0.5, v) == doctest::Approx(24160.997368).epsilon(1e-9));
  CHECK(demand_power(0.0, 0.0, 0.0, -0.5, v) == doctest::Approx(24160.997368).epsilon(1e-9));
  // Regeneration is scaled by the drive efficiencies instead of divided.
  CHECK(demand_power(36.0, -1.0, 0.0, 0.0, v) == doctest::Approx(-47048.0731).epsilon(1e-9));
  CHECK_THROWS_AS(demand_power(-1.0, 0.0, 0.0, 0.0, v), InputError);
  CHECK_THROWS_AS(demand_power(10.0, std::nan(""), 0.0, 0.0, v), InputError);
}

TEST_CASE("open-circuit voltage") {
  const auto b = default_powertrain().battery;
  CHECK(voc_lookup(0.7, b) == doctest::Approx(328.0).epsilon(1e-14));
  CHECK(voc_lookup(1.0, b) == 340.0);
  CHECK_THROWS_AS(voc_lookup(-0.1, b), InputError);
}

TEST_CASE("battery step and its inverse") {
  const auto b = default_powertrain().battery;
  CHECK(battery_soc_step(0.7, 0.0, b, 1.0) == 0.7);
  CHECK(0.7 - battery_soc_step(0.7, 32000.0, b, 1.0) ==
        doctest::Approx(2.91231156e-4).epsilon(1e-8));
  CHECK_THROWS_AS(battery_soc_step(0.7, 328.0 * 328.0 / 0.4 + 1.0, b, 1.0), InfeasibleError);
  CHECK_THROWS_AS(battery_soc_step(0.6, 5e4, b, 3600.0), BoundViolation);

  CHECK(battery_power_from_dsoc(0.0, 0.7, b) == 0.0);
  CHECK(battery_power_from_dsoc(-2.91231156e-4, 0.7, b) == doctest::Approx(32000.0).epsilon(1e-7));
  const double charge = battery_power_from_dsoc(2.91231156e-4, 0.7, b);
  CHECK(charge < 0.0);
  CHECK(-charge > 32000.0);  // the resistive loss adds to the charging draw

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> soc(0.61, 0.79), ds(-3e-4, 3e-4);
  for (int i = 0; i < 200; ++i) {
    const double s = soc(rng), d = ds(rng);
    const double p = battery_power_from_dsoc(d, s, b);
    CHECK(std::abs(battery_soc_step(s, p, b, 1.0) - s - d) < 1e-10);
  }
}

TEST_CASE("battery step is strictly decreasing in power") {
  const auto b = default_powertrain().battery;
  double last = 1.0;
  for (double p = -80e3; p <= 120e3; p += 5e3) {
    const double s = battery_soc_step(0.7, p, b, 1.0);
    CHECK(s < last);
    last = s;
  }
}

TEST_CASE("power balance split") {
  const auto a = balance_power(30e3, 10e3);
  REQUIRE(a);
  CHECK(a->p_g == 20e3);
  CHECK(a->p_brake == 0.0);
  const auto b = balance_power(-30e3, -10e3);
  REQUIRE(b);
  CHECK(b->p_g == 0.0);
  CHECK(b->p_brake == 20e3);
  CHECK_FALSE(balance_power(10e3, 20e3));
  CHECK_FALSE(balance_power(-10e3, 5e3));
}

TEST_CASE("genset operating point") {
  const auto g = default_powertrain().genset;
  const auto idle = genset_solve(2000.0, 0.0, 0.0, g);
  CHECK(idle.gen_torque == 0.0);
  CHECK(idle.engine_torque == 0.0);

  const double p_rated = 290.0 * 2000.0 / 9.55 * g.gen_eff;
  const auto rated = genset_solve(2000.0, p_rated, 0.0, g);
  CHECK(rated.gen_torque == doctest::Approx(290.0).epsilon(1e-12));
  CHECK(rated.mech_power == doctest::Approx(60732.9843).epsilon(1e-9));
  CHECK(rated.elec_power == doctest::Approx(p_rated).epsilon(1e-12));

  const double too_much = (g.gen_torque_max(2000.0) + 5.0) * 2000.0 / 9.55 * g.gen_eff;
  CHECK_THROWS_AS(genset_solve(2000.0, too_much, 0.0, g), InfeasibleError);
  CHECK_THROWS_AS(genset_solve(700.0, 0.0, 0.0, g), InputError);

  const auto accel = genset_solve(1500.0, 10e3, 200.0, g);
  CHECK(accel.engine_torque - accel.gen_torque ==
        doctest::Approx(kPi / 30.0 * 1.2 * 200.0).epsilon(1e-12));
}

TEST_CASE("fuel map interpolation") {
  const auto g = default_powertrain().genset;
  const auto& map = g.fuel_map;
  const auto& t = map.row_axis();
  const auto& n = map.col_axis();
  CHECK(fuel_rate(0.0, g.idle_speed, g) == map.values()(0, 0));
  CHECK(fuel_rate(0.0, g.idle_speed, g) > 0.0);
  CHECK(fuel_rate(t[3], n[4], g) == map.values()(3, 4));
  const double mid = 0.5 * (n[4] + n[5]);
  CHECK(fuel_rate(t[3], mid, g) ==
        doctest::Approx(0.5 * (map.values()(3, 4) + map.values()(3, 5))).epsilon(1e-14));
  CHECK_THROWS_AS(fuel_rate(-1.0, 1500.0, g), InputError);
  CHECK_THROWS_AS(fuel_rate(10.0, 5000.0, g), InputError);
}

TEST_CASE("synthetic fuel map peaks near its sweet spot") {
  const auto g = default_powertrain().genset;
  const double best = engine_efficiency(240.0, 2200.0, g);
  // The idle flow rides on top of the efficiency bowl, so the node sits a little below peak.
  CHECK(best <= g.peak_efficiency);
  CHECK(best > 0.95 * g.peak_efficiency);
  for (double n = 800.0; n <= 3200.0; n += 100.0) {
    for (double t = 0.0; t <= g.engine_torque_max(n); t += 20.0) {
      CHECK(engine_efficiency(t, n, g) <= best + 1e-12);
    }
  }
  CHECK(engine_efficiency(60.0, 1000.0, g) < best);
  CHECK(engine_efficiency(0.0, 1500.0, g) == 0.0);
}

TEST_CASE("generator headroom respects the inertia load") {
  const auto g = default_powertrain().genset;
  const double steady = gen_torque_headroom(2000.0, 0.0, g);
  CHECK(steady == doctest::Approx(max_gen_torque(2000.0, g)));
  CHECK(gen_torque_headroom(2000.0, 400.0, g) <= steady);
  CHECK(max_electrical_power(g) > 50e3);
}
