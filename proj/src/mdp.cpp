#include "anm/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace anm {

void AnmSystem::finalize() {
  generators.clear();
  loads.clear();
  flexibles.clear();
  for (const Device& d : devices) {
    if (d.is_generator()) {
      if (d.tan_phi < 0.0)
        throw std::invalid_argument("generator tan_phi must be non-negative");
      generators.push_back(d.id);
    } else {
      loads.push_back(d.id);
      if (d.kind == DeviceKind::flexible_load) flexibles.push_back(d.id);
    }
  }
  flex_pos_of_load.assign(loads.size(), -1);
  for (std::size_t i = 0; i < loads.size(); ++i) {
    for (std::size_t f = 0; f < flexibles.size(); ++f)
      if (flexibles[f] == loads[i]) flex_pos_of_load[i] = static_cast<int>(f);
  }
}

double AnmSystem::generator_potential(const Device& dev, double irradiance,
                                      double wind_speed) const {
  if (dev.kind == DeviceKind::wind_generator) return wind_power(dev.wind, wind_speed);
  return pv_power(dev.pv, irradiance);
}

ControlAction ControlAction::noop(const AnmSystem& sys) {
  ControlAction a;
  a.gen_cap.assign(sys.n_generators(), kNoCap);
  a.flex_activate.assign(sys.n_flexibles(), 0);
  return a;
}

ExogenousDraw draw_exogenous(const AnmSystem& sys, Rng& rng) {
  ExogenousDraw d;
  d.load_w.resize(sys.n_loads());
  for (auto& w : d.load_w) w = {rng.uniform01(), rng.gauss()};
  d.wind_w = {rng.uniform01(), rng.gauss()};
  d.ir_w = {rng.uniform01(), rng.gauss()};
  return d;
}

ExogenousValues sample_exogenous(const AnmSystem& sys, const SystemState& state,
                                 const ExogenousDraw& draw) {
  ExogenousValues v;
  const int qn = state.next_quarter();
  v.load_p.resize(sys.n_loads());
  for (int i = 0; i < sys.n_loads(); ++i) {
    const double x = sample_next(sys.load_model, state.load_hist[i], qn,
                                 draw.load_w[i][0], draw.load_w[i][1]);
    v.load_p[i] = sys.devices[sys.loads[i]].load_scale * x;
  }
  v.wind_speed = sample_next(sys.wind_model, state.wind_hist, qn,
                             draw.wind_w[0], draw.wind_w[1]);
  v.irradiance = sample_next(sys.ir_model, state.ir_hist, qn,
                             draw.ir_w[0], draw.ir_w[1]);
  return v;
}

void apply_exogenous(const AnmSystem& sys, SystemState& state,
                     const ExogenousValues& v) {
  for (int i = 0; i < sys.n_loads(); ++i) {
    const double scale = sys.devices[sys.loads[i]].load_scale;
    auto& h = state.load_hist[i];
    h.erase(h.begin());
    h.push_back(v.load_p[i] / scale);
  }
  state.wind_hist.erase(state.wind_hist.begin());
  state.wind_hist.push_back(v.wind_speed);
  state.ir_hist.erase(state.ir_hist.begin());
  state.ir_hist.push_back(v.irradiance);
  state.load_p = v.load_p;
  state.wind_speed = v.wind_speed;
  state.irradiance = v.irradiance;
  state.quarter = state.next_quarter();
}

std::vector<ExogenousValues> simulate_exogenous_path(const AnmSystem& sys,
                                                     const SystemState& state,
                                                     int steps, Rng& rng) {
  std::vector<ExogenousValues> path;
  path.reserve(steps);
  SystemState s = state;
  for (int t = 0; t < steps; ++t) {
    const ExogenousValues v = sample_exogenous(sys, s, draw_exogenous(sys, rng));
    apply_exogenous(sys, s, v);
    path.push_back(v);
  }
  return path;
}

double barrier_chi(double x) {
  if (x <= 0.0) return 0.0;
  return 1e3 * std::min(std::exp(x) - 1.0, 1e3);
}

double barrier_phi(const NetworkModel& network, const PowerFlowSolution& solution) {
  double phi = 0.0;
  for (int n = 0; n < network.n_buses(); ++n) {
    const double vm = std::abs(solution.v[n]);
    phi += barrier_chi(vm - network.buses[n].v_max);
    phi += barrier_chi(network.buses[n].v_min - vm);
  }
  for (std::size_t l = 0; l < network.links.size(); ++l)
    phi += barrier_chi(solution.branch_currents[l] - network.links[l].i_max);
  return phi;
}

std::vector<bool> feasible_actions(const AnmSystem& sys, const SystemState& state) {
  std::vector<bool> can(sys.n_flexibles());
  for (int f = 0; f < sys.n_flexibles(); ++f)
    can[f] = state.flex_countdown[f] == 0;
  return can;
}

double discounted_return(const std::vector<double>& rewards, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0))
    throw std::invalid_argument("gamma must lie in (0, 1)");
  double r = 0.0, g = 1.0;
  for (double x : rewards) {
    r += g * x;
    g *= gamma;
  }
  return r;
}

ElectricalEval evaluate_electrical(const AnmSystem& sys,
                                   const std::vector<double>& load_p,
                                   double irradiance, double wind_speed,
                                   const std::vector<double>& gen_cap,
                                   const std::vector<double>& flex_offset,
                                   const Eigen::VectorXcd* warm_start) {
  ElectricalEval ev;
  const int n_dev = static_cast<int>(sys.devices.size());
  std::vector<double> p_dev(n_dev, 0.0), cap_dev(n_dev, kNoCap), off_dev(n_dev, 0.0);
  ev.gen_potential.resize(sys.n_generators());
  ev.gen_effective.resize(sys.n_generators());
  for (int g = 0; g < sys.n_generators(); ++g) {
    const Device& dev = sys.devices[sys.generators[g]];
    ev.gen_potential[g] = sys.generator_potential(dev, irradiance, wind_speed);
    p_dev[dev.id] = ev.gen_potential[g];
    cap_dev[dev.id] = gen_cap[g];
    ev.gen_effective[g] = std::min(gen_cap[g], ev.gen_potential[g]);
  }
  for (int i = 0; i < sys.n_loads(); ++i)
    p_dev[sys.loads[i]] = load_p[i];
  for (int f = 0; f < sys.n_flexibles(); ++f)
    off_dev[sys.flexibles[f]] = flex_offset[f];

  const int nb = sys.network.n_buses();
  ev.p_bus.setZero(nb);
  ev.q_bus.setZero(nb);
  for (int b = 0; b < nb; ++b) {
    const auto [p, q] = injections_at_bus(sys.network.buses[b], sys.devices,
                                          p_dev, cap_dev, off_dev);
    ev.p_bus[b] = p / sys.network.base_mva;
    ev.q_bus[b] = q / sys.network.base_mva;
  }
  if (warm_start)
    ev.pf = solve_power_flow_from(sys.network, ev.p_bus, ev.q_bus, sys.slack_voltage,
                                  *warm_start);
  else
    ev.pf = solve_power_flow(sys.network, ev.p_bus, ev.q_bus, sys.slack_voltage);
  return ev;
}

TransitionOutcome step(const AnmSystem& sys, const SystemState& state,
                       const ControlAction& action, const ExogenousValues& next_exo) {
  for (int f = 0; f < sys.n_flexibles(); ++f)
    if (action.flex_activate[f] && state.flex_countdown[f] > 0)
      throw std::invalid_argument("infeasible action: flexible load already active");
  if (static_cast<int>(action.gen_cap.size()) != sys.n_generators())
    throw std::invalid_argument("action cap vector size mismatch");
  for (double c : action.gen_cap)
    if (c < 0.0) throw std::invalid_argument("negative curtailment cap");

  TransitionOutcome out;
  out.next = state;
  apply_exogenous(sys, out.next, next_exo);
  out.next.gen_cap = action.gen_cap;

  std::vector<double> flex_offset(sys.n_flexibles(), 0.0);
  for (int f = 0; f < sys.n_flexibles(); ++f) {
    const FlexParams& fp = sys.devices[sys.flexibles[f]].flex;
    const int s_next = std::max(state.flex_countdown[f] - 1, 0) +
                       (action.flex_activate[f] ? fp.duration : 0);
    out.next.flex_countdown[f] = s_next;
    flex_offset[f] = s_next > 0 ? modulation_signal(fp, fp.duration - s_next + 1) : 0.0;
  }

  ElectricalEval ev = evaluate_electrical(sys, out.next.load_p, out.next.irradiance,
                                          out.next.wind_speed, action.gen_cap, flex_offset);
  out.pf = std::move(ev.pf);
  out.gen_potential = std::move(ev.gen_potential);
  out.pf_diverged = !out.pf.converged;

  const int qn = out.next.quarter;
  for (int g = 0; g < sys.n_generators(); ++g) {
    const double curtailed = std::max(0.0, out.gen_potential[g] - action.gen_cap[g]);
    // /4 converts MW over a 15-minute period to MWh.
    out.reward.curtailment_cost += curtailed / 4.0 * sys.prices.curtailment_at(qn);
  }
  for (int f = 0; f < sys.n_flexibles(); ++f)
    if (action.flex_activate[f])
      out.reward.flexibility_cost += sys.devices[sys.flexibles[f]].flex.activation_cost;
  if (out.pf_diverged) {
    out.reward.barrier = 1e6;
  } else {
    out.reward.barrier = barrier_phi(sys.network, out.pf);
    out.violations = check_limits(sys.network, out.pf);
  }
  return out;
}

TransitionOutcome step(const AnmSystem& sys, const SystemState& state,
                       const ControlAction& action, const ExogenousDraw& draw) {
  return step(sys, state, action, sample_exogenous(sys, state, draw));
}

SystemState make_initial_state(const AnmSystem& sys, Rng& rng, int warmup) {
  SystemState s;
  const int n_loads = sys.n_loads();
  s.load_hist.resize(n_loads);
  // Quarter indices are chosen so the state ends at quarter 96 after warmup.
  const int q0 = ((96 - warmup) % 96 + 96) % 96;  // quarter index (0-based) of start
  auto seed_hist = [&](const GmmMarkovModel& m, std::vector<double>& h) {
    h.resize(m.lags);
    for (int j = 0; j < m.lags; ++j) {
      int q = q0 - (m.lags - 1 - j);
      q = ((q % 96) + 96) % 96;
      double v = m.quarter_profile.size() == 96 ? m.quarter_profile[q]
                                                : 0.5 * (m.clamp_lo + m.clamp_hi);
      h[j] = std::clamp(v, m.clamp_lo, m.clamp_hi);
    }
  };
  for (int i = 0; i < n_loads; ++i) seed_hist(sys.load_model, s.load_hist[i]);
  seed_hist(sys.wind_model, s.wind_hist);
  seed_hist(sys.ir_model, s.ir_hist);
  s.quarter = q0 == 0 ? 96 : q0;
  s.load_p.resize(n_loads);
  for (int i = 0; i < n_loads; ++i)
    s.load_p[i] = sys.devices[sys.loads[i]].load_scale * s.load_hist[i].back();
  s.wind_speed = s.wind_hist.back();
  s.irradiance = s.ir_hist.back();
  s.gen_cap.assign(sys.n_generators(), kNoCap);
  s.flex_countdown.assign(sys.n_flexibles(), 0);

  for (int t = 0; t < warmup; ++t)
    apply_exogenous(sys, s, sample_exogenous(sys, s, draw_exogenous(sys, rng)));
  return s;
}

}  // namespace anm
