#include "anm/planner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <queue>
#include <set>
#include <stdexcept>

namespace anm {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

LookaheadProblem assemble(const AnmSystem& sys, const SystemState& state,
                          const ScenarioTree& tree, const PlannerConfig& cfg) {
  LookaheadProblem p;
  p.sys = &sys;
  p.tree = tree;
  p.state = state;
  p.cfg = cfg;
  p.horizon = tree.horizon();
  p.n_scenarios = tree.n_scenarios();
  if (p.horizon < 1) throw std::invalid_argument("tree horizon must be >= 1");
  if (static_cast<int>(tree.stage_groups.size()) != p.horizon)
    throw std::invalid_argument("tree stage group structure inconsistent with horizon");

  const int n_gen = sys.n_generators();
  const int n_flex = sys.n_flexibles();
  const int w = p.n_scenarios;
  const int t_hor = p.horizon;

  p.cap_index.assign(w, std::vector<std::vector<int>>(t_hor, std::vector<int>(n_gen, -1)));
  p.bin_index.assign(w, std::vector<std::vector<int>>(t_hor, std::vector<int>(n_flex, -1)));

  p.stage_discount.resize(t_hor);
  p.stage_price.resize(t_hor);
  int q = state.quarter;
  for (int stage = 0; stage < t_hor; ++stage) {
    p.stage_discount[stage] = std::pow(cfg.gamma, stage);
    q = q % 96 + 1;  // quarter of period stage+1
    p.stage_price[stage] = sys.prices.curtailment_at(q);
  }

  for (int stage = 0; stage < t_hor; ++stage) {
    for (const auto& group : tree.stage_groups[stage]) {
      for (int g = 0; g < n_gen; ++g) {
        LookaheadProblem::CapVar cv;
        cv.stage = stage;
        cv.scenarios = group;
        cv.gen = g;
        cv.upper = 0.0;
        for (int k : group)
          cv.upper = std::max(cv.upper, tree.scenarios[k].traj.gen_potential[stage][g]);
        const int id = static_cast<int>(p.cap_vars.size());
        for (int k : group) p.cap_index[k][stage][g] = id;
        p.cap_vars.push_back(std::move(cv));
      }
      for (int f = 0; f < n_flex; ++f) {
        LookaheadProblem::BinVar bv;
        bv.stage = stage;
        bv.scenarios = group;
        bv.flex = f;
        // Activation at this stage requires the countdown started at t to
        // have reached zero: s at stage j is max(s0 - j, 0).
        bv.forced_zero = state.flex_countdown[f] - stage > 0;
        const int id = static_cast<int>(p.bin_vars.size());
        for (int k : group) p.bin_index[k][stage][f] = id;
        p.bin_vars.push_back(std::move(bv));
      }
    }
  }

  // Modulation offsets of services already running at time t: at period
  // t+j the countdown is max(s0 - j, 0).
  p.base_offset.assign(t_hor, std::vector<double>(n_flex, 0.0));
  for (int f = 0; f < n_flex; ++f) {
    const FlexParams& fp = sys.devices[sys.flexibles[f]].flex;
    const int s0 = state.flex_countdown[f];
    for (int stage = 0; stage < t_hor; ++stage) {
      const int s_next = std::max(s0 - (stage + 1), 0);
      if (s_next > 0)
        p.base_offset[stage][f] = modulation_signal(fp, fp.duration - s_next + 1);
    }
  }

  // No-overlap windows along each scenario path: at most one activation per
  // load within any T_d + 1 consecutive stages (next activation is allowed
  // exactly when the countdown returns to zero).
  std::set<std::vector<int>> seen;
  for (int k = 0; k < w; ++k) {
    for (int f = 0; f < n_flex; ++f) {
      const int dur = sys.devices[sys.flexibles[f]].flex.duration;
      for (int start = 0; start < t_hor; ++start) {
        std::vector<int> vars;
        for (int s = start; s < std::min(start + dur + 1, t_hor); ++s) {
          const int id = p.bin_index[k][s][f];
          if (!p.bin_vars[id].forced_zero) vars.push_back(id);
        }
        std::sort(vars.begin(), vars.end());
        vars.erase(std::unique(vars.begin(), vars.end()), vars.end());
        if (vars.size() >= 2 && seen.insert(vars).second)
          p.window_cons.push_back(vars);
      }
    }
  }
  // Drop windows dominated by a superset window.
  std::vector<std::vector<int>> keep;
  for (const auto& a : p.window_cons) {
    bool dominated = false;
    for (const auto& b : p.window_cons) {
      if (&a == &b || b.size() <= a.size()) continue;
      if (std::includes(b.begin(), b.end(), a.begin(), a.end())) {
        dominated = true;
        break;
      }
    }
    if (!dominated) keep.push_back(a);
  }
  p.window_cons = std::move(keep);
  return p;
}

namespace {

// Per-(scenario, stage) electrical block layout of the constraint vector:
// [vm - vmax per bus, vmin - vm per bus, |I| - imax per link], followed by
// the window constraints.
struct Evaluator {
  const LookaheadProblem& p;
  const AnmSystem& sys;
  int nb, nl, block_size, n_blocks, n_elec, n_con;
  // warm-start voltage cache per block, persists across evaluations
  std::vector<Eigen::VectorXcd> vcache;
  std::vector<bool> vcache_ok;

  // scratch from the last eval
  std::vector<PowerFlowSolution> block_pf;
  std::vector<std::vector<double>> block_caps, block_off;
  std::vector<bool> block_diverged;
  std::vector<double> g;  // constraint values
  double cost = 0.0;
  bool any_diverged = false;

  explicit Evaluator(const LookaheadProblem& prob)
      : p(prob), sys(*prob.sys) {
    nb = sys.network.n_buses();
    nl = static_cast<int>(sys.network.links.size());
    block_size = 2 * nb + nl;
    n_blocks = p.n_scenarios * p.horizon;
    n_elec = n_blocks * block_size;
    n_con = n_elec + static_cast<int>(p.window_cons.size());
    vcache.assign(n_blocks, Eigen::VectorXcd());
    vcache_ok.assign(n_blocks, false);
    block_pf.resize(n_blocks);
    block_caps.assign(n_blocks, std::vector<double>(sys.n_generators()));
    block_off.assign(n_blocks, std::vector<double>(sys.n_flexibles()));
    block_diverged.assign(n_blocks, false);
    g.assign(n_con, 0.0);
  }

  int block_id(int k, int stage) const { return k * p.horizon + stage; }

  double flex_offset(const std::vector<double>& x, int k, int stage, int f) const {
    double off = p.base_offset[stage][f];
    const FlexParams& fp = sys.devices[sys.flexibles[f]].flex;
    for (int tau = std::max(0, stage + 1 - fp.duration); tau <= stage; ++tau) {
      const int id = p.bin_index[k][tau][f];
      const double a = x[p.n_cap() + id];
      if (a != 0.0) off += a * modulation_signal(fp, stage + 1 - tau);
    }
    return off;
  }

  // Evaluates cost and all constraints at x.
  void eval(const std::vector<double>& x) {
    cost = 0.0;
    any_diverged = false;
    const int n_gen = sys.n_generators();
    for (int k = 0; k < p.n_scenarios; ++k) {
      const Scenario& sc = p.tree.scenarios[k];
      for (int stage = 0; stage < p.horizon; ++stage) {
        const int b = block_id(k, stage);
        auto& caps = block_caps[b];
        for (int gi = 0; gi < n_gen; ++gi) {
          caps[gi] = x[p.cap_index[k][stage][gi]];
          const double pot = sc.traj.gen_potential[stage][gi];
          cost += sc.probability * p.stage_discount[stage] * p.stage_price[stage] / 4.0 *
                  (pot - std::min(caps[gi], pot));
        }
        auto& off = block_off[b];
        for (int f = 0; f < sys.n_flexibles(); ++f)
          off[f] = flex_offset(x, k, stage, f);
        const Eigen::VectorXcd* warm = vcache_ok[b] ? &vcache[b] : nullptr;
        ElectricalEval ev = evaluate_electrical(sys, sc.traj.exo[stage].load_p,
                                                sc.traj.exo[stage].irradiance,
                                                sc.traj.exo[stage].wind_speed, caps, off,
                                                warm);
        block_pf[b] = std::move(ev.pf);
        block_diverged[b] = !block_pf[b].converged;
        if (block_diverged[b]) {
          any_diverged = true;
          vcache_ok[b] = false;
          for (int j = 0; j < block_size; ++j) g[b * block_size + j] = 0.0;
          continue;
        }
        vcache[b] = block_pf[b].v;
        vcache_ok[b] = true;
        double* gb = g.data() + b * block_size;
        for (int n = 0; n < nb; ++n) {
          const double vm = std::abs(block_pf[b].v[n]);
          gb[n] = vm - sys.network.buses[n].v_max;
          gb[nb + n] = sys.network.buses[n].v_min - vm;
        }
        for (int l = 0; l < nl; ++l)
          gb[2 * nb + l] = block_pf[b].branch_currents[l] - sys.network.links[l].i_max;
      }
    }
    // activation costs, weighted by group probability and discount
    for (std::size_t i = 0; i < p.bin_vars.size(); ++i) {
      const auto& bv = p.bin_vars[i];
      double prob = 0.0;
      for (int k : bv.scenarios) prob += p.tree.scenarios[k].probability;
      cost += x[p.n_cap() + i] * prob * p.stage_discount[bv.stage] *
              sys.devices[sys.flexibles[bv.flex]].flex.activation_cost;
    }
    for (std::size_t wcon = 0; wcon < p.window_cons.size(); ++wcon) {
      double s = 0.0;
      for (int id : p.window_cons[wcon]) s += x[p.n_cap() + id];
      g[n_elec + wcon] = s - 1.0;
    }
  }

  // Gradient of cost + sum_j w_j g_j at the point of the last eval().
  void grad(const std::vector<double>& x, const std::vector<double>& w,
            std::vector<double>& out) {
    out.assign(p.n_vars(), 0.0);
    const int n_gen = sys.n_generators();
    // objective: curtailment part
    for (int k = 0; k < p.n_scenarios; ++k) {
      const Scenario& sc = p.tree.scenarios[k];
      for (int stage = 0; stage < p.horizon; ++stage) {
        for (int gi = 0; gi < n_gen; ++gi) {
          const int id = p.cap_index[k][stage][gi];
          const double pot = sc.traj.gen_potential[stage][gi];
          // left subgradient at the min(u, pot) kink so descent is possible
          // from the uncurtailed start point
          if (x[id] <= pot)
            out[id] -= sc.probability * p.stage_discount[stage] * p.stage_price[stage] / 4.0;
        }
      }
    }
    // objective: activation part
    for (std::size_t i = 0; i < p.bin_vars.size(); ++i) {
      const auto& bv = p.bin_vars[i];
      double prob = 0.0;
      for (int k : bv.scenarios) prob += p.tree.scenarios[k].probability;
      out[p.n_cap() + i] += prob * p.stage_discount[bv.stage] *
                            sys.devices[sys.flexibles[bv.flex]].flex.activation_cost;
    }
    // electrical constraints via adjoint sensitivities
    Eigen::VectorXd wv(nb), wi(nl), dp, dq;
    for (int k = 0; k < p.n_scenarios; ++k) {
      const Scenario& sc = p.tree.scenarios[k];
      for (int stage = 0; stage < p.horizon; ++stage) {
        const int b = block_id(k, stage);
        if (block_diverged[b]) continue;
        const double* wb = w.data() + b * block_size;
        bool active = false;
        for (int j = 0; j < block_size && !active; ++j) active = wb[j] != 0.0;
        if (!active) continue;
        for (int n = 0; n < nb; ++n) wv[n] = wb[n] - wb[nb + n];
        for (int l = 0; l < nl; ++l) wi[l] = wb[2 * nb + l];
        PfSensitivity sens(sys.network, block_pf[b]);
        sens.adjoint(wv, wi, dp, dq);
        const double inv_base = 1.0 / sys.network.base_mva;
        for (int gi = 0; gi < n_gen; ++gi) {
          const Device& dev = sys.devices[sys.generators[gi]];
          const double pot = sc.traj.gen_potential[stage][gi];
          const int id = p.cap_index[k][stage][gi];
          if (x[id] <= pot)
            out[id] += (dp[dev.bus_id] + dq[dev.bus_id] * dev.tan_phi) * inv_base;
        }
        for (int f = 0; f < sys.n_flexibles(); ++f) {
          const Device& dev = sys.devices[sys.flexibles[f]];
          const double base = (dp[dev.bus_id] + dq[dev.bus_id] * dev.tan_phi) * inv_base;
          if (base == 0.0) continue;
          const FlexParams& fp = dev.flex;
          for (int tau = std::max(0, stage + 1 - fp.duration); tau <= stage; ++tau) {
            const int id = p.bin_index[k][tau][f];
            out[p.n_cap() + id] += base * modulation_signal(fp, stage + 1 - tau);
          }
        }
      }
    }
    // window constraints (linear)
    for (std::size_t wcon = 0; wcon < p.window_cons.size(); ++wcon) {
      const double ww = w[n_elec + wcon];
      if (ww == 0.0) continue;
      for (int id : p.window_cons[wcon]) out[p.n_cap() + id] += ww;
    }
  }
};

struct Bounds {
  std::vector<double> lo, hi;
};

Bounds make_bounds(const LookaheadProblem& p, const std::vector<int>& fixed_binaries) {
  Bounds b;
  b.lo.resize(p.n_vars());
  b.hi.resize(p.n_vars());
  for (int i = 0; i < p.n_cap(); ++i) {
    b.lo[i] = 0.0;
    b.hi[i] = p.cap_vars[i].upper;
  }
  for (int i = 0; i < p.n_bin(); ++i) {
    const int j = p.n_cap() + i;
    if (p.bin_vars[i].forced_zero || fixed_binaries[i] == 0) {
      b.lo[j] = b.hi[j] = 0.0;
    } else if (fixed_binaries[i] == 1) {
      b.lo[j] = b.hi[j] = 1.0;
    } else {
      b.lo[j] = 0.0;
      b.hi[j] = 1.0;
    }
  }
  return b;
}

void project(std::vector<double>& x, const Bounds& b) {
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = std::clamp(x[i], b.lo[i], b.hi[i]);
}

}  // namespace

int lookahead_constraint_count(const LookaheadProblem& problem) {
  Evaluator ev(problem);
  return ev.n_con;
}

double lookahead_penalty_eval(const LookaheadProblem& problem,
                              const std::vector<double>& x,
                              const std::vector<double>& lambda, double mu,
                              std::vector<double>* grad, double* max_violation,
                              double* cost_value) {
  Evaluator ev(problem);
  ev.eval(x);
  if (ev.any_diverged) {
    if (grad) grad->assign(problem.n_vars(), 0.0);
    if (max_violation) *max_violation = 1e9;
    if (cost_value) *cost_value = ev.cost;
    return 1e12;
  }
  double psi = ev.cost;
  double viol = -std::numeric_limits<double>::infinity();
  std::vector<double> w(ev.n_con, 0.0);
  for (int j = 0; j < ev.n_con; ++j) {
    const double t = lambda[j] + mu * ev.g[j];
    if (t > 0.0) {
      psi += (t * t - lambda[j] * lambda[j]) / (2.0 * mu);
      w[j] = t;
    } else {
      psi -= lambda[j] * lambda[j] / (2.0 * mu);
    }
    viol = std::max(viol, ev.g[j]);
  }
  if (grad) ev.grad(x, w, *grad);
  if (max_violation) *max_violation = viol;
  if (cost_value) *cost_value = ev.cost;
  return psi;
}

ContinuousSolution solve_continuous(const LookaheadProblem& p,
                                    const std::vector<int>& fixed_binaries,
                                    const std::vector<double>* warm_start,
                                    AlState* al_state) {
  Evaluator ev(p);
  const Bounds bounds = make_bounds(p, fixed_binaries);
  const int nv = p.n_vars();

  std::vector<double> x(nv, 0.0);
  for (int i = 0; i < p.n_cap(); ++i) x[i] = bounds.hi[i];  // start uncurtailed
  if (warm_start && static_cast<int>(warm_start->size()) == nv) x = *warm_start;
  project(x, bounds);

  std::vector<double> lambda(ev.n_con, 0.0);
  double mu = 10.0;
  if (al_state && static_cast<int>(al_state->lambda.size()) == ev.n_con) {
    lambda = al_state->lambda;
    mu = al_state->mu;
  }
  double prev_viol = std::numeric_limits<double>::max();

  ContinuousSolution sol;
  std::vector<double> w(ev.n_con);
  double cur_viol = 0.0, cur_cost = 0.0;

  // Merit value at pt; leaves the evaluator, w, cur_viol and cur_cost at pt
  // so the gradient can be formed afterwards without re-evaluating.
  auto al_value = [&](const std::vector<double>& pt) {
    ev.eval(pt);
    ++sol.evaluations;
    if (ev.any_diverged) {
      cur_viol = 1e9;
      cur_cost = ev.cost;
      return 1e12;
    }
    double psi = ev.cost;
    double v = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < ev.n_con; ++j) {
      const double t = lambda[j] + mu * ev.g[j];
      if (t > 0.0) {
        psi += (t * t - lambda[j] * lambda[j]) / (2.0 * mu);
        w[j] = t;
      } else {
        psi -= lambda[j] * lambda[j] / (2.0 * mu);
        w[j] = 0.0;
      }
      v = std::max(v, ev.g[j]);
    }
    cur_viol = v;
    cur_cost = ev.cost;
    return psi;
  };

  double viol = 0.0, cost = 0.0, pgnorm = 0.0;
  for (int outer = 0; outer < p.cfg.al_max_outer; ++outer) {
    // Inner: projected gradient with Barzilai-Borwein steps and Armijo
    // backtracking.
    std::vector<double> gr(nv), x_prev, g_prev;
    double f = al_value(x);
    bool ev_at_x = true;  // whether the evaluator state matches x
    viol = cur_viol;
    cost = cur_cost;
    if (cur_viol < 1e9) ev.grad(x, w, gr);
    double gmax0 = 0.0;
    for (double v : gr) gmax0 = std::max(gmax0, std::abs(v));
    double alpha = 1.0 / std::max(gmax0, 1.0);  // first step ~ unit box move
    for (int inner = 0; inner < p.cfg.al_max_inner; ++inner) {
      // projected gradient norm
      pgnorm = 0.0;
      for (int i = 0; i < nv; ++i) {
        const double step = std::clamp(x[i] - gr[i], bounds.lo[i], bounds.hi[i]) - x[i];
        pgnorm = std::max(pgnorm, std::abs(step));
      }
      const double inner_tol = std::max(p.cfg.kkt_tol, 3e-3 * std::pow(0.3, outer));
      if (pgnorm <= inner_tol) break;

      if (!x_prev.empty()) {
        double sy = 0.0, ss = 0.0;
        for (int i = 0; i < nv; ++i) {
          const double s = x[i] - x_prev[i];
          const double y = gr[i] - g_prev[i];
          sy += s * y;
          ss += s * s;
        }
        alpha = (sy > 1e-14) ? std::clamp(ss / sy, 1e-8, 1e6) : std::min(alpha * 2.0, 1e6);
      }
      x_prev = x;
      g_prev = gr;
      // backtracking line search on the projected step
      double step = alpha;
      bool accepted = false;
      for (int ls = 0; ls < 25; ++ls) {
        std::vector<double> xt(nv);
        double descent = 0.0;
        for (int i = 0; i < nv; ++i) {
          xt[i] = std::clamp(x[i] - step * gr[i], bounds.lo[i], bounds.hi[i]);
          descent += gr[i] * (x[i] - xt[i]);
        }
        const double ft = al_value(xt);
        ev_at_x = false;
        if (ft <= f - 1e-4 * descent) {
          x = std::move(xt);
          f = ft;
          viol = cur_viol;
          cost = cur_cost;
          if (cur_viol < 1e9) ev.grad(x, w, gr);  // evaluator already at x
          ev_at_x = true;
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;
    }

    // Loose stationarity is enough here: the feasibility polish below pins
    // the active constraint boundary to high precision.
    if (viol <= p.cfg.feas_tol && pgnorm <= std::max(100.0 * p.cfg.kkt_tol, 1e-3)) break;
    // multiplier update at the current point
    if (!ev_at_x) al_value(x);
    for (int j = 0; j < ev.n_con; ++j)
      lambda[j] = std::max(0.0, lambda[j] + mu * ev.g[j]);
    if (viol > 0.5 * prev_viol && viol > p.cfg.feas_tol) mu = std::min(mu * 10.0, 1e8);
    prev_viol = viol;
  }

  // Feasibility polish: curtailing harder only relaxes the electrical
  // constraints on these feeders, so bisect a uniform scaling of the caps
  // toward zero and keep the mildest reduction that is strictly feasible
  // (constraints sitting exactly on the boundary would register as
  // violations when the plan is replayed).
  const double polish_target = -1e-7;
  if (viol > polish_target) {
    const std::vector<double> base_caps(x.begin(), x.begin() + p.n_cap());
    auto viol_at = [&](double s) {
      for (int i = 0; i < p.n_cap(); ++i)
        x[i] = std::clamp(s * base_caps[i], bounds.lo[i], bounds.hi[i]);
      al_value(x);
      cost = cur_cost;
      return cur_viol;
    };
    if (viol_at(0.0) <= polish_target) {
      double lo = 0.0, hi = 1.0;  // lo is strictly feasible, hi is not
      for (int it = 0; it < 40; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (viol_at(mid) <= polish_target)
          lo = mid;
        else
          hi = mid;
      }
      viol = viol_at(lo);
    } else {
      viol = viol_at(1.0);  // restore the unpolished point
    }
  }

  if (al_state) {
    al_state->lambda = lambda;
    al_state->mu = mu;
  }
  sol.x = x;
  sol.objective = cost;
  sol.max_violation = std::max(viol, 0.0);
  sol.kkt_residual = pgnorm;
  sol.feasible = viol <= std::max(p.cfg.feas_tol, 1e-6) * 10.0;
  sol.converged = sol.feasible && pgnorm <= 100.0 * p.cfg.kkt_tol;
  return sol;
}

namespace {

ControlAction extract_first_stage(const LookaheadProblem& p,
                                  const std::vector<double>& x) {
  ControlAction a;
  a.gen_cap.resize(p.sys->n_generators());
  a.flex_activate.resize(p.sys->n_flexibles());
  for (int g = 0; g < p.sys->n_generators(); ++g)
    a.gen_cap[g] = x[p.cap_index[0][0][g]];
  for (int f = 0; f < p.sys->n_flexibles(); ++f) {
    const int id = p.bin_index[0][0][f];
    a.flex_activate[f] = x[p.n_cap() + id] > 0.5 ? 1 : 0;
  }
  return a;
}

}  // namespace

PlannerSolution branch_and_bound(const LookaheadProblem& p, double time_limit_s,
                                 const std::vector<double>* warm_start) {
  const auto t0 = Clock::now();
  PlannerSolution out;

  struct Node {
    double bound;
    int id;
    std::vector<int> fixed;
    std::vector<double> x;
    AlState al;
    bool operator>(const Node& o) const {
      return bound != o.bound ? bound > o.bound : id > o.id;
    }
  };

  std::priority_queue<Node, std::vector<Node>, std::greater<Node>> open;
  int next_id = 0;

  std::vector<int> root_fixed(p.n_bin(), -1);
  for (int i = 0; i < p.n_bin(); ++i)
    if (p.bin_vars[i].forced_zero) root_fixed[i] = 0;

  AlState root_al;
  ContinuousSolution root = solve_continuous(p, root_fixed, warm_start, &root_al);
  ++out.node_count;
  if (!root.feasible && warm_start) {
    // A stale warm start can steer the local solve into an infeasible basin;
    // retry from the default uncurtailed start before giving up.
    root_al = AlState{};
    root = solve_continuous(p, root_fixed, nullptr, &root_al);
    ++out.node_count;
  }
  if (!root.feasible) {
    out.status = SolveStatus::infeasible;
    out.wall_time_s = seconds_since(t0);
    return out;
  }

  double incumbent = std::numeric_limits<double>::max();
  std::vector<double> best_x;
  const auto cutoff = [&](double bound) {
    return bound >= incumbent - p.cfg.bb_rel_gap * std::max(1.0, std::abs(incumbent));
  };

  // Seed an incumbent by pinning every free binary to zero: activations are
  // rarely profitable, so this usually prunes most of the tree up front.
  {
    bool all_integral = true;
    for (int i = 0; i < p.n_bin() && all_integral; ++i) {
      const double v = root.x[p.n_cap() + i];
      all_integral = std::min(v, 1.0 - v) <= 1e-6;
    }
    if (!all_integral) {
      std::vector<int> zero_fixed(p.n_bin(), 0);
      AlState al = root_al;
      ContinuousSolution zero = solve_continuous(p, zero_fixed, &root.x, &al);
      ++out.node_count;
      if (zero.feasible) {
        incumbent = zero.objective;
        best_x = zero.x;
      }
    }
  }

  open.push({root.objective, next_id++, root_fixed, root.x, root_al});

  bool hit_limit = false;
  while (!open.empty()) {
    if (seconds_since(t0) > time_limit_s || out.node_count >= p.cfg.bb_max_nodes) {
      hit_limit = true;
      break;
    }
    Node node = open.top();
    open.pop();
    if (incumbent < std::numeric_limits<double>::max() && cutoff(node.bound)) break;

    // integrality check
    int frac_var = -1;
    double frac_dist = 1e-6;
    for (int i = 0; i < p.n_bin(); ++i) {
      const double v = node.x[p.n_cap() + i];
      const double d = std::min(v, 1.0 - v);
      if (d > frac_dist) {
        frac_dist = d;
        frac_var = i;
      }
    }
    if (frac_var < 0) {
      if (node.bound < incumbent) {
        incumbent = node.bound;
        best_x = node.x;
      }
      continue;
    }
    for (int fix = 0; fix <= 1; ++fix) {
      std::vector<int> child_fixed = node.fixed;
      child_fixed[frac_var] = fix;
      AlState child_al = node.al;
      ContinuousSolution child = solve_continuous(p, child_fixed, &node.x, &child_al);
      ++out.node_count;
      if (!child.feasible || cutoff(child.objective)) continue;
      open.push({child.objective, next_id++, std::move(child_fixed), child.x,
                 std::move(child_al)});
    }
  }

  out.wall_time_s = seconds_since(t0);
  if (incumbent == std::numeric_limits<double>::max()) {
    // Round the best relaxed node as a last integral candidate.
    if (!open.empty()) {
      Node node = open.top();
      std::vector<int> fixed = node.fixed;
      for (int i = 0; i < p.n_bin(); ++i)
        if (fixed[i] < 0) fixed[i] = node.x[p.n_cap() + i] > 0.5 ? 1 : 0;
      ContinuousSolution rounded = solve_continuous(p, fixed, &node.x);
      ++out.node_count;
      if (rounded.feasible) {
        incumbent = rounded.objective;
        best_x = rounded.x;
      }
    }
    if (incumbent == std::numeric_limits<double>::max()) {
      out.status = SolveStatus::time_limit;
      return out;
    }
  }
  out.objective = incumbent;
  out.plan_x = best_x;
  out.first_stage = extract_first_stage(p, best_x);
  out.status = hit_limit ? SolveStatus::time_limit : SolveStatus::optimal;
  return out;
}

ControlAction postprocess_curtailment(const ControlAction& action,
                                      const ScenarioTree& tree) {
  ControlAction out = action;
  for (std::size_t g = 0; g < out.gen_cap.size(); ++g) {
    bool binding = false;
    for (const Scenario& sc : tree.scenarios) {
      if (out.gen_cap[g] < sc.traj.gen_potential[0][g]) {
        binding = true;
        break;
      }
    }
    if (!binding) out.gen_cap[g] = kNoCap;
  }
  return out;
}

PlannerSolution fallback_plan(const AnmSystem& sys, const SystemState& state,
                              const ScenarioTree& tree, const PlannerConfig& cfg) {
  ScenarioTree trimmed = tree;
  for (Scenario& sc : trimmed.scenarios) {
    sc.traj.exo.resize(1);
    sc.traj.gen_potential.resize(1);
  }
  std::vector<int> all(trimmed.n_scenarios());
  for (int k = 0; k < trimmed.n_scenarios(); ++k) all[k] = k;
  trimmed.stage_groups.assign(1, {all});

  PlannerConfig fcfg = cfg;
  fcfg.horizon = 1;
  LookaheadProblem p = assemble(sys, state, trimmed, fcfg);
  std::vector<int> fixed(p.n_bin(), 0);  // curtailment actions only
  ContinuousSolution sol = solve_continuous(p, fixed);

  PlannerSolution out;
  out.fallback = true;
  out.status = SolveStatus::fallback_used;
  if (sol.feasible) {
    out.objective = sol.objective;
    out.plan_x = sol.x;
    out.first_stage = extract_first_stage(p, sol.x);
  } else {
    // Even curtailment-only failed; emit a flagged no-op.
    out.first_stage = ControlAction::noop(sys);
    out.objective = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

ActResult act(const AnmSystem& sys, const SystemState& state, const PlannerConfig& cfg,
              ActContext& ctx, Rng& rng) {
  const auto t0 = Clock::now();
  ActResult res;
  if (ctx.mode == PlannerMode::perfect_info) {
    if (!ctx.future_path)
      throw std::invalid_argument("perfect_info mode requires the realized future path");
    const int horizon = std::min<int>(cfg.horizon, static_cast<int>(ctx.future_path->size()));
    res.tree = tree_from_path(sys, *ctx.future_path, horizon);
  } else {
    res.tree = reduce_to_tree(sys, state, cfg.horizon, cfg.sample_count,
                              cfg.n_scenarios, rng, cfg.branch_tolerance);
  }

  LookaheadProblem problem = assemble(sys, state, res.tree, cfg);

  // No-op shortcut: if leaving everything uncapped violates nothing, the
  // zero-cost no-op is exactly optimal (every cost term is nonnegative).
  {
    std::vector<double> x(problem.n_vars(), 0.0);
    for (int i = 0; i < problem.n_cap(); ++i) x[i] = problem.cap_vars[i].upper;
    std::vector<double> lambda(lookahead_constraint_count(problem), 0.0);
    double viol = 0.0;
    lookahead_penalty_eval(problem, x, lambda, 1.0, nullptr, &viol, nullptr);
    if (viol <= -1e-7) {
      res.noop_shortcut = true;
      res.solution.objective = 0.0;
      res.solution.status = SolveStatus::optimal;
      res.solution.plan_x = x;
      res.solution.first_stage = extract_first_stage(problem, x);
      res.action = postprocess_curtailment(res.solution.first_stage, res.tree);
      ctx.warm_start = std::move(x);
      res.wall_time_s = seconds_since(t0);
      return res;
    }
  }

  const std::vector<double>* warm =
      (ctx.warm_start && static_cast<int>(ctx.warm_start->size()) == problem.n_vars())
          ? &*ctx.warm_start
          : nullptr;
  res.solution = branch_and_bound(problem, cfg.time_limit_s, warm);

  if (res.solution.status == SolveStatus::infeasible ||
      (res.solution.status == SolveStatus::time_limit && res.solution.plan_x.empty())) {
    res.solution = fallback_plan(sys, state, res.tree, cfg);
    res.used_fallback = true;
    ctx.warm_start.reset();
  } else {
    ctx.warm_start = res.solution.plan_x;
  }
  res.action = postprocess_curtailment(res.solution.first_stage, res.tree);
  res.wall_time_s = seconds_since(t0);
  return res;
}

}  // namespace anm
