#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "anm/planner.hpp"
#include "anm/rng.hpp"

using namespace anm;

namespace {

GmmMarkovModel gaussian_model(double mean_value, double stddev, int lags = 1) {
  GmmMarkovModel m;
  m.lags = lags;
  m.n_components = 1;
  GmmComponent c;
  c.weight = 1.0;
  c.mean = Eigen::VectorXd::Constant(lags + 1, mean_value);
  c.cov = Eigen::MatrixXd::Identity(lags + 1, lags + 1) * (stddev * stddev);
  m.components = {c};
  return m;
}

// slack -- bus1 (wind 6 MW + load) -- bus2 (two flexible loads + load);
// the 0-1 line rating makes full wind output infeasible.
AnmSystem planner_system(double i_max_01 = 0.35) {
  std::vector<Bus> buses(3);
  for (int i = 0; i < 3; ++i) buses[i].id = i;
  buses[0].kind = BusKind::slack;
  buses[1].kind = buses[2].kind = BusKind::pq;

  Link l01;
  l01.from_bus = 0;
  l01.to_bus = 1;
  l01.y_branch = 1.0 / Complex{0.01, 0.08};
  l01.i_max = i_max_01;
  Link l12;
  l12.from_bus = 1;
  l12.to_bus = 2;
  l12.y_branch = 1.0 / Complex{0.015, 0.1};
  l12.i_max = 1.0;

  AnmSystem sys;
  sys.network = NetworkModel::build(buses, {l01, l12});

  Device load1;
  load1.id = 0;
  load1.bus_id = 1;
  load1.kind = DeviceKind::aggregate_load;
  load1.tan_phi = 0.4;

  Device wind;
  wind.id = 1;
  wind.bus_id = 1;
  wind.kind = DeviceKind::wind_generator;
  wind.wind = default_wind_curve(6.0);

  Device flex_a;
  flex_a.id = 2;
  flex_a.bus_id = 2;
  flex_a.kind = DeviceKind::flexible_load;
  flex_a.tan_phi = 0.4;
  flex_a.load_scale = 0.5;
  flex_a.flex.duration = 4;
  flex_a.flex.amplitude_mw = 0.4;
  flex_a.flex.direction = FlexDirection::down_then_up;
  flex_a.flex.activation_cost = 4.0;

  Device flex_b = flex_a;
  flex_b.id = 3;
  flex_b.flex.direction = FlexDirection::up_then_down;
  flex_b.flex.amplitude_mw = 0.3;
  flex_b.flex.activation_cost = 3.0;

  Device load2;
  load2.id = 4;
  load2.bus_id = 2;
  load2.kind = DeviceKind::aggregate_load;
  load2.tan_phi = 0.4;

  sys.devices = {load1, wind, flex_a, flex_b, load2};
  sys.network.buses[1].attached_devices = {0, 1};
  sys.network.buses[2].attached_devices = {2, 3, 4};
  sys.load_model = gaussian_model(-0.5, 0.04);
  sys.load_model.clamp_hi = 0.0;
  sys.wind_model = gaussian_model(9.0, 0.7);
  sys.wind_model.clamp_lo = 0.0;
  sys.ir_model = gaussian_model(150.0, 25.0);
  sys.ir_model.clamp_lo = 0.0;
  sys.finalize();
  return sys;
}

SystemState planner_state(const AnmSystem& sys, double wind_speed) {
  SystemState st;
  st.load_p.assign(sys.n_loads(), -0.5);
  st.irradiance = 150.0;
  st.wind_speed = wind_speed;
  st.gen_cap.assign(sys.n_generators(), kNoCap);
  st.flex_countdown.assign(sys.n_flexibles(), 0);
  st.load_hist.assign(sys.n_loads(), {-0.5});
  st.ir_hist = {150.0};
  st.wind_hist = {wind_speed};
  st.quarter = 40;
  return st;
}

std::vector<ExogenousValues> constant_path(const AnmSystem& sys, int periods,
                                           double wind_speed, double load = -0.5) {
  std::vector<ExogenousValues> path(periods);
  for (ExogenousValues& e : path) {
    e.load_p.assign(sys.n_loads(), load);
    e.wind_speed = wind_speed;
    e.irradiance = 150.0;
  }
  return path;
}

// Largest cap for generator g keeping every electrical limit satisfied at
// the given exogenous point, found by bisection over repeated power flows.
double bisect_max_cap(const AnmSystem& sys, const ExogenousValues& exo, int g,
                      double hi_cap) {
  auto max_violation = [&](double cap) {
    std::vector<double> caps(sys.n_generators(), kNoCap);
    caps[g] = cap;
    std::vector<double> off(sys.n_flexibles(), 0.0);
    ElectricalEval ev =
        evaluate_electrical(sys, exo.load_p, exo.irradiance, exo.wind_speed, caps, off);
    REQUIRE(ev.pf.converged);
    double worst = -1e30;
    for (int b = 0; b < sys.network.n_buses(); ++b) {
      const double vm = std::abs(ev.pf.v[b]);
      worst = std::max(worst, vm - sys.network.buses[b].v_max);
      worst = std::max(worst, sys.network.buses[b].v_min - vm);
    }
    for (std::size_t l = 0; l < sys.network.links.size(); ++l)
      worst = std::max(worst, ev.pf.branch_currents[l] - sys.network.links[l].i_max);
    return worst;
  };
  double lo = 0.0, hi = hi_cap;
  REQUIRE(max_violation(0.0) <= 0.0);
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (max_violation(mid) <= 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

LookaheadProblem assemble_from_path(const AnmSystem& sys, const SystemState& st,
                                    const std::vector<ExogenousValues>& path,
                                    PlannerConfig cfg) {
  ScenarioTree tree = tree_from_path(sys, path, cfg.horizon);
  return assemble(sys, st, tree, cfg);
}

}  // namespace

TEST_CASE("assemble: single-period single-scenario structure") {
  AnmSystem sys = planner_system();
  SystemState st = planner_state(sys, 6.0);
  PlannerConfig cfg;
  cfg.horizon = 1;
  LookaheadProblem p = assemble_from_path(sys, st, constant_path(sys, 1, 6.0), cfg);
  CHECK(p.n_cap() == sys.n_generators());
  CHECK(p.n_bin() == sys.n_flexibles());
  CHECK(p.horizon == 1);
  CHECK(p.n_scenarios == 1);
  // the uncapped, no-activation point has zero cost
  std::vector<double> x(p.n_vars(), 0.0);
  for (int i = 0; i < p.n_cap(); ++i) x[i] = p.cap_vars[i].upper;
  std::vector<double> lambda(lookahead_constraint_count(p), 0.0);
  double cost = 0.0;
  lookahead_penalty_eval(p, x, lambda, 1.0, nullptr, nullptr, &cost);
  CHECK(cost == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("assemble: binaries of actively counting services are forced to zero") {
  AnmSystem sys = planner_system();
  SystemState st = planner_state(sys, 6.0);
  st.flex_countdown[0] = 3;
  PlannerConfig cfg;
  cfg.horizon = 4;
  LookaheadProblem p = assemble_from_path(sys, st, constant_path(sys, 4, 6.0), cfg);
  int forced = 0;
  for (const auto& bv : p.bin_vars) {
    if (bv.flex == 0 && bv.stage < 3) {
      CHECK(bv.forced_zero);
      ++forced;
    } else if (bv.flex == 1) {
      CHECK(!bv.forced_zero);
    }
  }
  CHECK(forced == 3);
}

TEST_CASE("solve_continuous: benign instance returns zero curtailment") {
  AnmSystem sys = planner_system();
  SystemState st = planner_state(sys, 6.0);  // ~1 MW wind, well within limits
  PlannerConfig cfg;
  cfg.horizon = 2;
  LookaheadProblem p = assemble_from_path(sys, st, constant_path(sys, 2, 6.0), cfg);
  std::vector<int> fixed(p.n_bin(), 0);
  ContinuousSolution sol = solve_continuous(p, fixed);
  REQUIRE(sol.feasible);
  CHECK(sol.objective == doctest::Approx(0.0).epsilon(1e-9));
  for (int i = 0; i < p.n_cap(); ++i)
    CHECK(sol.x[i] == doctest::Approx(p.cap_vars[i].upper));
}

TEST_CASE("solve_continuous: single binding constraint matches the bisection oracle") {
  AnmSystem sys = planner_system();
  SystemState st = planner_state(sys, 13.0);  // rated wind, line 0-1 binds
  PlannerConfig cfg;
  cfg.horizon = 1;
  std::vector<ExogenousValues> path = constant_path(sys, 1, 13.0);
  LookaheadProblem p = assemble_from_path(sys, st, path, cfg);
  REQUIRE(p.n_cap() == 1);
  std::vector<int> fixed(p.n_bin(), 0);
  ContinuousSolution sol = solve_continuous(p, fixed);
  REQUIRE(sol.feasible);

  const double oracle = bisect_max_cap(sys, path[0], 0, p.cap_vars[0].upper);
  CHECK(oracle < p.cap_vars[0].upper);  // the limit actually binds
  CHECK(sol.x[0] == doctest::Approx(oracle).epsilon(1e-4));
  // objective equals the curtailment cost of that cap
  const double pot = p.cap_vars[0].upper;
  const double price = sys.prices.curtailment_at(st.next_quarter());
  CHECK(sol.objective ==
        doctest::Approx((pot - sol.x[0]) / 4.0 * price).epsilon(1e-3));
}

TEST_CASE("penalty gradient matches central finite differences") {
  AnmSystem sys = planner_system();
  SystemState st = planner_state(sys, 11.0);
  PlannerConfig cfg;
  cfg.horizon = 2;
  LookaheadProblem p = assemble_from_path(sys, st, constant_path(sys, 2, 11.0), cfg);

  std::vector<double> x(p.n_vars());
  for (int i = 0; i < p.n_cap(); ++i) x[i] = 0.6 * p.cap_vars[i].upper;
  for (int i = p.n_cap(); i < p.n_vars(); ++i) x[i] = 0.35;
  const int n_con = lookahead_constraint_count(p);
  std::vector<double> lambda(n_con);
  Rng rng(3);
  for (double& l : lambda) l = 0.5 * rng.uniform01();
  const double mu = 40.0;

  std::vector<double> grad;
  lookahead_penalty_eval(p, x, lambda, mu, &grad);
  REQUIRE(grad.size() == x.size());

  const double h = 1e-5;
  for (int i = 0; i < p.n_vars(); ++i) {
    std::vector<double> hi = x, lo = x;
    hi[i] += h;
    lo[i] -= h;
    const double f_hi = lookahead_penalty_eval(p, hi, lambda, mu);
    const double f_lo = lookahead_penalty_eval(p, lo, lambda, mu);
    const double fd = (f_hi - f_lo) / (2.0 * h);
    CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-4).scale(1.0));
  }
}

TEST_CASE("branch_and_bound: no free binaries reduces to the continuous solve") {
  AnmSystem sys = planner_system();
  SystemState st = planner_state(sys, 13.0);
  st.flex_countdown = {4, 4};  // every service already running
  PlannerConfig cfg;
  cfg.horizon = 1;
  ScenarioTree tree = tree_from_path(sys, constant_path(sys, 1, 13.0), 1);
  LookaheadProblem p = assemble(sys, st, tree, cfg);
  PlannerSolution bb = branch_and_bound(p, 30.0);
  REQUIRE(bb.status == SolveStatus::optimal);

  std::vector<int> all_zero(p.n_bin(), 0);
  ContinuousSolution cont = solve_continuous(p, all_zero);
  REQUIRE(cont.feasible);
  CHECK(bb.objective == doctest::Approx(cont.objective).epsilon(1e-6));
}

TEST_CASE("branch_and_bound: matches brute-force enumeration on micro instances") {
  Rng seed_rng(77);
  for (int rep = 0; rep < 4; ++rep) {
    const double wind = 10.0 + 1.2 * rep;
    AnmSystem sys = planner_system(0.33 + 0.02 * rep);
    SystemState st = planner_state(sys, wind);
    PlannerConfig cfg;
    cfg.horizon = 2;  // 2 stages x 2 flexibles = 4 binaries
    ScenarioTree tree = tree_from_path(sys, constant_path(sys, 2, wind), 2);
    LookaheadProblem p = assemble(sys, st, tree, cfg);
    REQUIRE(p.n_bin() <= 4);

    PlannerSolution bb = branch_and_bound(p, 60.0);
    REQUIRE(bb.status == SolveStatus::optimal);

    double best = 1e300;
    for (int mask = 0; mask < (1 << p.n_bin()); ++mask) {
      std::vector<int> fixed(p.n_bin());
      bool valid = true;
      for (int i = 0; i < p.n_bin(); ++i) {
        fixed[i] = (mask >> i) & 1;
        if (fixed[i] && p.bin_vars[i].forced_zero) valid = false;
      }
      if (!valid) continue;
      ContinuousSolution sol = solve_continuous(p, fixed);
      if (sol.feasible) best = std::min(best, sol.objective);
    }
    REQUIRE(best < 1e300);
    CHECK(bb.objective ==
          doctest::Approx(best).epsilon(1e-4).scale(std::max(1.0, std::abs(best))));
  }
}

TEST_CASE("postprocess_curtailment: retained iff binding against some scenario") {
  ScenarioTree tree;
  tree.scenarios.resize(2);
  for (Scenario& s : tree.scenarios) {
    s.probability = 0.5;
    s.traj.exo.resize(1);
    s.traj.gen_potential = {{0.0, 0.0}};
  }
  tree.scenarios[0].traj.gen_potential[0] = {2.5, 1.0};
  tree.scenarios[1].traj.gen_potential[0] = {3.5, 0.8};

  ControlAction a;
  a.gen_cap = {3.0, 2.0};
  ControlAction out = postprocess_curtailment(a, tree);
  CHECK(out.gen_cap[0] == 3.0);       // binds in scenario 1 (3.0 < 3.5)
  CHECK(out.gen_cap[1] == kNoCap);    // exceeds every potential

  // property test over random plans
  Rng rng(41);
  for (int rep = 0; rep < 300; ++rep) {
    ScenarioTree t2;
    const int w = rng.uniform_int(1, 3);
    t2.scenarios.resize(w);
    const int ng = rng.uniform_int(1, 4);
    for (Scenario& s : t2.scenarios) {
      s.probability = 1.0 / w;
      s.traj.exo.resize(1);
      s.traj.gen_potential.resize(1);
      s.traj.gen_potential[0].resize(ng);
      for (double& v : s.traj.gen_potential[0]) v = 5.0 * rng.uniform01();
    }
    ControlAction plan;
    plan.gen_cap.resize(ng);
    for (double& c : plan.gen_cap)
      c = rng.uniform01() < 0.2 ? kNoCap : 5.0 * rng.uniform01();
    ControlAction post = postprocess_curtailment(plan, t2);
    for (int g = 0; g < ng; ++g) {
      bool binding = false;
      for (const Scenario& s : t2.scenarios)
        binding = binding || plan.gen_cap[g] < s.traj.gen_potential[0][g];
      if (binding)
        CHECK(post.gen_cap[g] == plan.gen_cap[g]);
      else
        CHECK(post.gen_cap[g] == kNoCap);
    }
  }
}

TEST_CASE("fallback_plan: healthy system yields a no-op") {
  AnmSystem sys = planner_system();
  SystemState st = planner_state(sys, 6.0);
  ScenarioTree tree = tree_from_path(sys, constant_path(sys, 3, 6.0), 3);
  PlannerConfig cfg;
  cfg.horizon = 3;
  PlannerSolution sol = fallback_plan(sys, st, tree, cfg);
  CHECK(sol.fallback);
  ControlAction post = postprocess_curtailment(sol.first_stage, tree);
  for (double c : post.gen_cap) CHECK(c == kNoCap);
  for (auto a : sol.first_stage.flex_activate) CHECK(a == 0);
}

TEST_CASE("fallback_plan: stressed system curtails to the single-period oracle") {
  AnmSystem sys = planner_system();
  SystemState st = planner_state(sys, 13.0);
  std::vector<ExogenousValues> path = constant_path(sys, 3, 13.0);
  ScenarioTree tree = tree_from_path(sys, path, 3);
  PlannerConfig cfg;
  cfg.horizon = 3;
  PlannerSolution sol = fallback_plan(sys, st, tree, cfg);
  CHECK(sol.fallback);
  const double oracle = bisect_max_cap(sys, path[0], 0, 6.0);
  CHECK(sol.first_stage.gen_cap[0] == doctest::Approx(oracle).epsilon(1e-3));
}

TEST_CASE("act: benign state takes the exact no-op shortcut") {
  AnmSystem sys = planner_system();
  SystemState st = planner_state(sys, 6.0);
  PlannerConfig cfg;
  cfg.horizon = 3;
  ActContext ctx;
  ctx.mode = PlannerMode::perfect_info;
  std::vector<ExogenousValues> path = constant_path(sys, 6, 6.0);
  ctx.future_path = &path;
  Rng rng(1);
  ActResult res = act(sys, st, cfg, ctx, rng);
  CHECK(res.noop_shortcut);
  CHECK(!res.used_fallback);
  CHECK(res.solution.objective == 0.0);
  for (double c : res.action.gen_cap) CHECK(c == kNoCap);
}

TEST_CASE("act: stressed state emits a protective curtailment with no violations") {
  AnmSystem sys = planner_system();
  SystemState st = planner_state(sys, 13.0);
  PlannerConfig cfg;
  cfg.horizon = 3;
  ActContext ctx;
  ctx.mode = PlannerMode::perfect_info;
  std::vector<ExogenousValues> path = constant_path(sys, 6, 13.0);
  ctx.future_path = &path;
  Rng rng(1);
  ActResult res = act(sys, st, cfg, ctx, rng);
  CHECK(!res.noop_shortcut);
  REQUIRE(res.action.gen_cap[0] < kNoCap);
  TransitionOutcome out = step(sys, st, res.action, path[0]);
  REQUIRE(out.pf.converged);
  CHECK(out.violations.empty());
}

TEST_CASE("act: scenarios mode is deterministic under a fixed stream") {
  AnmSystem sys = planner_system();
  SystemState st = planner_state(sys, 12.0);
  PlannerConfig cfg;
  cfg.horizon = 3;
  cfg.sample_count = 40;
  cfg.n_scenarios = 2;
  ActContext ctx_a, ctx_b;
  Rng a = Rng::stream(9, 0), b = Rng::stream(9, 0);
  ActResult ra = act(sys, st, cfg, ctx_a, a);
  ActResult rb = act(sys, st, cfg, ctx_b, b);
  CHECK(ra.action.gen_cap == rb.action.gen_cap);
  CHECK(ra.action.flex_activate == rb.action.flex_activate);
  CHECK(ra.solution.objective == rb.solution.objective);
}

TEST_CASE("act: first-stage action is a single vector regardless of W") {
  AnmSystem sys = planner_system();
  SystemState st = planner_state(sys, 12.0);
  PlannerConfig cfg;
  cfg.horizon = 3;
  cfg.sample_count = 60;
  cfg.n_scenarios = 3;
  ActContext ctx;
  Rng rng = Rng::stream(33, 0);
  ScenarioTree tree = reduce_to_tree(sys, st, cfg.horizon, cfg.sample_count,
                                     cfg.n_scenarios, rng);
  LookaheadProblem p = assemble(sys, st, tree, cfg);
  // stage-0 variables are shared: the same variable id for every scenario
  for (int k = 1; k < p.n_scenarios; ++k) {
    for (int g = 0; g < sys.n_generators(); ++g)
      CHECK(p.cap_index[k][0][g] == p.cap_index[0][0][g]);
    for (int f = 0; f < sys.n_flexibles(); ++f)
      CHECK(p.bin_index[k][0][f] == p.bin_index[0][0][f]);
  }
  ActResult res = act(sys, st, cfg, ctx, rng);
  CHECK(res.action.gen_cap.size() == static_cast<std::size_t>(sys.n_generators()));
  CHECK(res.action.flex_activate.size() == static_cast<std::size_t>(sys.n_flexibles()));
}
