#include "hev/dp.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "hev/csv.hpp"

namespace hev {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// SOC change over one step when the battery delivers `p_b` at open-circuit `voc`.
double dsoc_for_power(double p_b, double voc, const BatteryParams& b, double dt) {
  const double disc = std::max(voc * voc - 4.0 * b.resistance * p_b, 0.0);
  return -dt * (voc - std::sqrt(disc)) / (2.0 * b.resistance * b.capacity);
}

struct CellBand {
  int lo = 0;  // smallest i_to - i_from considered
  int hi = 0;
};

// Conservative range of SOC-cell moves whose battery power can balance the
// stage demand; the evaluator does the exact check.
std::optional<CellBand> cell_band(double p_req, const PowertrainParams& params,
                                  const SocGrid& grid, double p_g_max, double dt) {
  const auto& b = params.battery;
  const double p_hi = std::min(b.p_discharge_max, std::max(p_req, 0.0));
  const double p_lo = std::max(b.p_charge_max, p_req - p_g_max);
  if (p_lo > p_hi) return std::nullopt;
  const double v_lo = voc_lookup(grid.soc_min, b);
  const double v_hi = voc_lookup(grid.soc_max, b);
  const double d_min = std::min(dsoc_for_power(p_hi, v_lo, b, dt), dsoc_for_power(p_hi, v_hi, b, dt));
  const double d_max = std::max(dsoc_for_power(p_lo, v_lo, b, dt), dsoc_for_power(p_lo, v_hi, b, dt));
  const double step = grid.soc_step();
  CellBand band;
  band.lo = static_cast<int>(std::max(std::floor(d_min / step) - 1.0, -double(grid.m)));
  band.hi = static_cast<int>(std::min(std::ceil(d_max / step) + 1.0, double(grid.m)));
  return band;
}

}  // namespace

double SocGrid::soc_level(int i) const {
  if (i == m) return soc_max;
  return soc_min + (soc_max - soc_min) * i / m;
}

double SocGrid::speed_level(int j) const {
  if (q == 1) return speed_min;
  if (j == q - 1) return speed_max;
  return speed_min + (speed_max - speed_min) * j / (q - 1);
}

int SocGrid::nearest_soc(double soc) const {
  const long i = std::lround((soc - soc_min) / soc_step());
  return static_cast<int>(std::clamp<long>(i, 0, m));
}

void SocGrid::validate() const {
  if (m < 2 || q < 1) throw InputError("grid: need m >= 2 SOC intervals and q >= 1 speed levels");
  if (!(soc_min < soc_max) || !(speed_min < speed_max || q == 1)) {
    throw InputError("grid: empty SOC or speed span");
  }
}

SocGrid SocGrid::span(const PowertrainParams& p, int m, int q) {
  SocGrid g;
  g.m = m;
  g.q = q;
  g.soc_min = p.battery.soc_min;
  g.soc_max = p.battery.soc_max;
  g.speed_min = p.genset.idle_speed;
  g.speed_max = p.genset.speed_max;
  g.validate();
  return g;
}

void OcpProblem::validate() const {
  const Eigen::Index n = v_kmh.size();
  if (n < 1) throw InputError("ocp: horizon must be at least one step");
  if (accel.size() != n || yaw.size() != n || slope.size() != n) {
    throw InputError("ocp: v, accel, yaw and slope sequences differ in length");
  }
  if (!(w1 >= 0.0 && w2 >= 0.0)) throw InputError("ocp: weights must be non-negative");
  if (!(dt > 0.0)) throw InputError("ocp: dt must be positive");
  if (!v_kmh.allFinite() || !accel.allFinite() || !yaw.allFinite() || !slope.allFinite()) {
    throw InputError("ocp: non-finite cycle data");
  }
}

OcpProblem OcpProblem::constant(int n, double v_kmh) {
  OcpProblem p;
  p.v_kmh = Eigen::VectorXd::Constant(n, v_kmh);
  p.accel = Eigen::VectorXd::Zero(n);
  p.yaw = Eigen::VectorXd::Zero(n);
  p.slope = Eigen::VectorXd::Zero(n);
  return p;
}

Eigen::VectorXd forward_accel(const Eigen::VectorXd& v_kmh, double v_after_kmh, double dt) {
  const Eigen::Index n = v_kmh.size();
  Eigen::VectorXd a(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double next = k + 1 < n ? v_kmh[k + 1] : v_after_kmh;
    a[k] = (next - v_kmh[k]) / 3.6 / dt;
  }
  return a;
}

StageEvaluator::StageEvaluator(const OcpProblem& prob, const PowertrainParams& params,
                               Eigen::Index k)
    : prob_(prob), params_(params) {
  if (k < 0 || k >= prob.horizon()) throw InputError("stage index outside the horizon");
  p_req_ = demand_power(prob.v_kmh[k], prob.accel[k], prob.slope[k], prob.yaw[k], params.vehicle);
}

std::optional<StageResult> StageEvaluator::operator()(double soc_from, double soc_to,
                                                      double speed_from, double speed_to) const {
  const auto& b = params_.battery;
  const auto& g = params_.genset;
  const double dt = prob_.dt;
  const double dn = speed_to - speed_from;
  if (std::abs(dn) > g.speed_rate_max * dt + 1e-9) return std::nullopt;

  StageResult r;
  r.p_req = p_req_;
  r.p_b = battery_power_from_dsoc(soc_to - soc_from, soc_from, b, dt);
  if (r.p_b > b.p_discharge_max || r.p_b < b.p_charge_max) return std::nullopt;
  const auto split = balance_power(p_req_, r.p_b);
  if (!split) return std::nullopt;
  r.p_g = split->p_g;
  r.p_brake = split->p_brake;
  const auto op = try_genset_solve(speed_to, r.p_g, dn / dt, g);
  if (!op) return std::nullopt;
  r.op = *op;
  r.fuel = op->fuel_rate * dt;
  const double dev = soc_to - prob_.soc_target;
  r.cost = prob_.w1 * r.fuel + prob_.w2 * dev * dev * dt;
  return r;
}

std::optional<StageResult> stage_cost(double soc_from, double soc_to, double speed_from,
                                      double speed_to, Eigen::Index k, const OcpProblem& prob,
                                      const PowertrainParams& params) {
  return StageEvaluator(prob, params, k)(soc_from, soc_to, speed_from, speed_to);
}

DpSolution dp_solve(const OcpProblem& prob, const SocGrid& grid, const PowertrainParams& params) {
  prob.validate();
  grid.validate();
  constexpr double kSocTol = 1e-9;
  if (prob.soc_init < grid.soc_min - kSocTol || prob.soc_init > grid.soc_max + kSocTol) {
    throw InputError("ocp: initial SOC outside the grid");
  }
  const int n = static_cast<int>(prob.horizon());
  const int rows = grid.m + 1;
  const int cols = prob.speed_state ? grid.q : 1;
  const int i0 = grid.nearest_soc(prob.soc_init);
  const double dt = prob.dt;
  const double p_g_max = max_electrical_power(params.genset) * 1.01 + 1.0;
  const int speed_reach =
      grid.q > 1 ? static_cast<int>(std::floor(params.genset.speed_rate_max * dt /
                                               ((grid.speed_max - grid.speed_min) / (grid.q - 1)) +
                                               1e-9))
                 : 0;

  DpSolution sol;
  sol.soc_start = grid.soc_level(i0);
  sol.snap_distance = sol.soc_start - prob.soc_init;
  sol.cost_to_come.reserve(n);
  sol.pred_soc.reserve(n);
  sol.pred_speed.reserve(n);

  // Best steady-speed transition for SOC-only mode; lowest speed index wins ties.
  auto steady_best = [&](const StageEvaluator& ev, double from, double to)
      -> std::pair<std::optional<StageResult>, int> {
    std::optional<StageResult> best;
    int arg = -1;
    for (int j = 0; j < grid.q; ++j) {
      const double s = grid.speed_level(j);
      auto r = ev(from, to, s, s);
      if (r && (!best || r->cost < best->cost)) {
        best = r;
        arg = j;
      }
    }
    return {best, arg};
  };

  int lo = i0, hi = i0;
  for (int k = 0; k < n; ++k) {
    const StageEvaluator ev(prob, params, k);
    const auto band = cell_band(ev.demand(), params, grid, p_g_max, dt);
    if (!band) {
      std::ostringstream os;
      os << "dp: stage " << k << " has no admissible battery power";
      throw InfeasibleError(os.str());
    }
    Eigen::MatrixXd cost = Eigen::MatrixXd::Constant(rows, cols, kInf);
    Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic> ps =
        Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic>::Constant(rows, cols, -1);
    Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic> pj = ps;
    const Eigen::MatrixXd* prev = k > 0 ? &sol.cost_to_come[k - 1] : nullptr;

    const int to_lo = std::max(0, lo + band->lo);
    const int to_hi = std::min(grid.m, hi + band->hi);
    int new_lo = rows, new_hi = -1;
    for (int it = to_lo; it <= to_hi; ++it) {
      const double soc_to = grid.soc_level(it);
      const int from_lo = std::max(lo, it - band->hi);
      const int from_hi = std::min(hi, it - band->lo);
      for (int jt = 0; jt < cols; ++jt) {
        const double speed_to = grid.speed_level(jt);
        double best = kInf;
        int best_i = -1, best_j = -1;
        for (int ifr = from_lo; ifr <= from_hi; ++ifr) {
          const double soc_from = grid.soc_level(ifr);
          if (k == 0) {
            std::optional<StageResult> r;
            if (prob.speed_state) {
              r = ev(soc_from, soc_to, prob.speed_init, speed_to);
            } else {
              r = steady_best(ev, soc_from, soc_to).first;
            }
            if (r && r->cost < best) {
              best = r->cost;
              best_i = ifr;
              best_j = -1;
            }
            continue;
          }
          const int j_lo = prob.speed_state ? std::max(0, jt - speed_reach) : 0;
          const int j_hi = prob.speed_state ? std::min(cols - 1, jt + speed_reach) : 0;
          for (int jf = j_lo; jf <= j_hi; ++jf) {
            const double before = (*prev)(ifr, jf);
            if (before == kInf) continue;
            std::optional<StageResult> r;
            if (prob.speed_state) {
              r = ev(soc_from, soc_to, grid.speed_level(jf), speed_to);
            } else {
              r = steady_best(ev, soc_from, soc_to).first;
            }
            if (!r) continue;
            const double c = before + r->cost;
            if (c < best) {
              best = c;
              best_i = ifr;
              best_j = jf;
            }
          }
        }
        if (best_i >= 0) {
          cost(it, jt) = best;
          ps(it, jt) = best_i;
          pj(it, jt) = best_j;
          new_lo = std::min(new_lo, it);
          new_hi = std::max(new_hi, it);
        }
      }
    }
    if (new_hi < 0) {
      std::ostringstream os;
      os << "dp: no feasible transition reaches stage " << k + 1;
      throw InfeasibleError(os.str());
    }
    lo = new_lo;
    hi = new_hi;
    sol.cost_to_come.push_back(std::move(cost));
    sol.pred_soc.push_back(std::move(ps));
    sol.pred_speed.push_back(std::move(pj));
  }

  const Eigen::MatrixXd& last = sol.cost_to_come.back();
  double best = kInf;
  int bi = -1, bj = -1;
  const int term_lo = prob.terminal == TerminalMode::hard ? i0 : 0;
  const int term_hi = prob.terminal == TerminalMode::hard ? i0 : grid.m;
  for (int i = term_lo; i <= term_hi; ++i) {
    for (int j = 0; j < cols; ++j) {
      if (last(i, j) < best) {
        best = last(i, j);
        bi = i;
        bj = j;
      }
    }
  }
  if (bi < 0) throw InfeasibleError("dp: no feasible path ends at the initial SOC");

  sol.total_cost = best;
  sol.trajectory.resize(n);
  int i = bi, j = bj;
  for (int k = n - 1; k >= 0; --k) {
    const int pi = sol.pred_soc[k](i, j);
    const int pjx = sol.pred_speed[k](i, j);
    const StageEvaluator ev(prob, params, k);
    DpStep step;
    step.soc_from = grid.soc_level(pi);
    step.soc_to = grid.soc_level(i);
    std::optional<StageResult> r;
    if (prob.speed_state) {
      step.speed_from = k == 0 ? prob.speed_init : grid.speed_level(pjx);
      step.speed_to = grid.speed_level(j);
      r = ev(step.soc_from, step.soc_to, step.speed_from, step.speed_to);
    } else {
      auto [res, arg] = steady_best(ev, step.soc_from, step.soc_to);
      r = res;
      step.speed_from = step.speed_to = grid.speed_level(std::max(arg, 0));
    }
    if (!r) throw Error("dp: traceback hit an infeasible transition");
    step.stage = *r;
    sol.trajectory[k] = step;
    i = pi;
    j = std::max(pjx, 0);
  }
  for (const auto& s : sol.trajectory) sol.total_fuel += s.stage.fuel;
  return sol;
}

void write_lattice_csv(std::ostream& os, const DpSolution& sol, const SocGrid& grid,
                       const OcpProblem& prob) {
  os << "stage,soc,speed,cost,pred_soc,pred_speed\n";
  for (std::size_t k = 0; k < sol.cost_to_come.size(); ++k) {
    const auto& c = sol.cost_to_come[k];
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
      for (Eigen::Index j = 0; j < c.cols(); ++j) {
        if (!std::isfinite(c(i, j))) continue;
        const int pj = sol.pred_speed[k](i, j);
        const double speed = prob.speed_state ? grid.speed_level(static_cast<int>(j)) : 0.0;
        const double pred_speed =
            !prob.speed_state ? 0.0 : (pj < 0 ? prob.speed_init : grid.speed_level(pj));
        os << k + 1 << ',' << fmt(grid.soc_level(static_cast<int>(i)), 6) << ',' << fmt(speed, 1)
           << ',' << fmt(c(i, j), 9) << ',' << fmt(grid.soc_level(sol.pred_soc[k](i, j)), 6)
           << ',' << fmt(pred_speed, 1) << '\n';
      }
    }
  }
}

}  // namespace hev
