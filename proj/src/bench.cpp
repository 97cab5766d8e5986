#include "anm/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace anm {

namespace {

// Reference design constants: 53 residential nodes carrying 11/22/33
// flexible loads with 1.7/3.4/5.0 MW total maximum amplitude.
constexpr int kRefResidential = 53;
constexpr double kRefFlexCount[] = {11.0, 22.0, 33.0};
constexpr double kRefFlexTotalMw[] = {1.7, 3.4, 5.0};

// Peak magnitude of the synthetic load process (process space, MW before
// scaling): evening peak of the daily profile.
constexpr double kLoadProcessPeak = 1.0;

}  // namespace

void InstanceSpec::validate() const {
  if (n_buses != 1 + n_residential + n_production + n_topological)
    throw std::invalid_argument("bus count must equal 1 slack + residential + production + topological");
  if (n_residential < 1) throw std::invalid_argument("need at least one residential node");
  if (n_production < 0 || n_topological < 0) throw std::invalid_argument("negative node count");
  if (peak_load_mw <= 0.0 || pv_surface_m2 < 0.0 || wind_capacity_mw < 0.0)
    throw std::invalid_argument("sizing targets must be positive");
  if (line_stress <= 0.0) throw std::invalid_argument("line_stress must be positive");
  if (flexible_count(*this) > n_residential)
    throw std::invalid_argument("more flexible loads than residential nodes");
}

int flexible_count(const InstanceSpec& spec) {
  const double f = kRefFlexCount[static_cast<int>(spec.flexibility)];
  return std::max(1, static_cast<int>(std::lround(f * spec.n_residential / kRefResidential)));
}

double flexible_total_amplitude(const InstanceSpec& spec) {
  return kRefFlexTotalMw[static_cast<int>(spec.flexibility)] *
         spec.n_residential / kRefResidential;
}

AnmSystem generate_instance(const InstanceSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng = Rng::stream(seed, 7);

  const int nb = spec.n_buses;
  std::vector<Bus> buses(nb);
  std::vector<int> parent(nb, -1);
  std::vector<BusKind> kinds(nb, BusKind::pq);
  kinds[0] = BusKind::slack;
  for (int i = 1; i <= spec.n_topological; ++i) kinds[i] = BusKind::topological;
  // residential then production fill the remaining slots
  for (int i = 0; i < nb; ++i) {
    buses[i].id = i;
    buses[i].kind = kinds[i];
    if (i > 0) parent[i] = rng.uniform_int(0, i - 1);
  }
  const int res_begin = 1 + spec.n_topological;
  const int prod_begin = res_begin + spec.n_residential;

  // Devices. Residential nodes host one load (possibly flexible) plus a
  // rooftop PV unit; production nodes host one wind farm. Load device ids
  // appear in bus order, so the shared load process maps deterministically.
  const int n_flex = flexible_count(spec);
  const double flex_amp = flexible_total_amplitude(spec) / n_flex;
  std::vector<int> res_order(spec.n_residential);
  std::iota(res_order.begin(), res_order.end(), 0);
  for (int i = spec.n_residential - 1; i > 0; --i)
    std::swap(res_order[i], res_order[rng.uniform_int(0, i)]);

  std::vector<bool> is_flex(spec.n_residential, false);
  for (int i = 0; i < n_flex; ++i) is_flex[res_order[i]] = true;

  AnmSystem sys;
  const double load_scale = spec.peak_load_mw / spec.n_residential / kLoadProcessPeak;
  int flex_seen = 0;
  for (int r = 0; r < spec.n_residential; ++r) {
    const int bus = res_begin + r;
    Device load;
    load.id = static_cast<int>(sys.devices.size());
    load.bus_id = bus;
    load.tan_phi = 0.4;
    load.load_scale = load_scale;
    if (is_flex[r]) {
      load.kind = DeviceKind::flexible_load;
      load.flex.duration = 8;
      load.flex.amplitude_mw = flex_amp;
      // about half of the loads offer a downward modulation first
      load.flex.direction = (flex_seen++ % 2 == 0) ? FlexDirection::down_then_up
                                                   : FlexDirection::up_then_down;
      load.flex.activation_cost = 10.0 * flex_amp;
    } else {
      load.kind = DeviceKind::aggregate_load;
    }
    buses[bus].attached_devices.push_back(load.id);
    sys.devices.push_back(std::move(load));

    Device pv;
    pv.id = static_cast<int>(sys.devices.size());
    pv.bus_id = bus;
    pv.kind = DeviceKind::pv_generator;
    pv.tan_phi = 0.0;
    pv.pv.efficiency = 0.2;
    pv.pv.surface_m2 = spec.pv_surface_m2;
    buses[bus].attached_devices.push_back(pv.id);
    sys.devices.push_back(std::move(pv));
  }
  for (int p = 0; p < spec.n_production; ++p) {
    const int bus = prod_begin + p;
    Device wind;
    wind.id = static_cast<int>(sys.devices.size());
    wind.bus_id = bus;
    wind.kind = DeviceKind::wind_generator;
    wind.tan_phi = 0.2;
    wind.wind = default_wind_curve(spec.wind_capacity_mw);
    buses[bus].attached_devices.push_back(wind.id);
    sys.devices.push_back(std::move(wind));
  }

  // Worst-case transfer per bus (MW), used to size branch current limits.
  std::vector<double> gen_peak(nb, 0.0), load_peak(nb, 0.0);
  for (const Device& d : sys.devices) {
    if (d.kind == DeviceKind::pv_generator)
      gen_peak[d.bus_id] += pv_power(d.pv, 1000.0);
    else if (d.kind == DeviceKind::wind_generator)
      gen_peak[d.bus_id] += d.wind.capacity_mw;
    else
      load_peak[d.bus_id] += load_scale * 1.6 + (d.kind == DeviceKind::flexible_load
                                                     ? d.flex.amplitude_mw
                                                     : 0.0);
  }
  // Accumulate subtree totals leaf-to-root (parents precede children).
  std::vector<double> sub_gen = gen_peak, sub_load = load_peak;
  for (int i = nb - 1; i >= 1; --i) {
    sub_gen[parent[i]] += sub_gen[i];
    sub_load[parent[i]] += sub_load[i];
  }

  const double base_mva = 10.0, base_kv = 15.0;
  std::vector<Link> links;
  for (int i = 1; i < nb; ++i) {
    Link l;
    l.from_bus = parent[i];
    l.to_bus = i;
    const double len = 0.5 + rng.uniform01();  // km-ish length factor
    const Complex z(0.010 * len, 0.025 * len);  // per-unit series impedance
    l.y_branch = 1.0 / z;
    l.y_shunt_m = l.y_shunt_n = Complex(0.0, 5e-4 * len);
    // Stress the generation side only: curtailment can always restore
    // feasibility, while load-driven flows keep full headroom.
    const double s_max = std::max(spec.line_stress * sub_gen[i], 1.25 * sub_load[i]) * 1.05;
    l.i_max = std::max(s_max / base_mva, 0.05);
    links.push_back(std::move(l));
  }

  sys.network = NetworkModel::build(std::move(buses), std::move(links), base_mva, base_kv);
  sys.slack_voltage = Complex(1.0, 0.0);
  sys.prices = PriceProfile::two_level(spec.price_off_peak, spec.price_peak);
  sys.finalize();
  return sys;
}

void fit_default_models(AnmSystem& sys, int days, std::uint64_t seed) {
  FitProcessOptions load_opt;
  load_opt.hard_hi = 0.0;  // withdrawals never positive
  sys.load_model = fit_process_model(make_synthetic_corpus(CorpusKind::load, days, seed),
                                     2, 10, seed ^ 0x10ad, load_opt);
  FitProcessOptions wind_opt;
  wind_opt.hard_lo = 0.0;
  sys.wind_model = fit_process_model(make_synthetic_corpus(CorpusKind::wind, days, seed),
                                     1, 1, seed ^ 0x817d, wind_opt);
  FitProcessOptions ir_opt;
  ir_opt.hard_lo = 0.0;
  sys.ir_model = fit_process_model(
      make_synthetic_corpus(CorpusKind::irradiance, days, seed), 1, 10, seed ^ 0x50a1, ir_opt);
}

RunReport run_experiment(const AnmSystem& sys, PlannerMode mode,
                         const PlannerConfig& config, int runs, int steps,
                         std::uint64_t seed, const std::string& label) {
  if (runs < 1 || steps < 1) throw std::invalid_argument("runs and steps must be >= 1");
  RunReport report;
  report.mode_label = label.empty()
                          ? (mode == PlannerMode::perfect_info ? "perfect_info" : "scenarios")
                          : label;
  report.mode = mode;
  report.config = config;
  report.steps = steps;
  report.seed = seed;
  report.runs.resize(runs);

  for (int i = 0; i < runs; ++i) {
    RunResult& rr = report.runs[i];
    rr.run = i;
    try {
      Rng init_rng = Rng::stream(seed, 1000 + i);
      SystemState state = make_initial_state(sys, init_rng);
      // The exogenous processes are action-independent, so the realized path
      // is precomputed once per (seed, run) and shared across modes; its tail
      // doubles as the perfect-information lookahead.
      Rng path_rng = Rng::stream(seed, 2000 + i);
      const auto path =
          simulate_exogenous_path(sys, state, steps + config.horizon, path_rng);
      Rng plan_rng = Rng::stream(seed, 3000 + i);

      ActContext ctx;
      ctx.mode = mode;
      int violated = 0, fallbacks = 0, noops = 0;
      for (int t = 0; t < steps; ++t) {
        std::vector<ExogenousValues> future(path.begin() + t, path.end());
        ctx.future_path = &future;
        Rng step_rng = plan_rng.split(t);
        ActResult res = act(sys, state, config, ctx, step_rng);
        rr.solver_times.push_back(res.wall_time_s);
        if (res.used_fallback) ++fallbacks;
        if (res.noop_shortcut) ++noops;

        TransitionOutcome out = step(sys, state, res.action, path[t]);
        rr.rewards.push_back(out.reward.total());
        if (out.pf_diverged || !out.violations.empty()) ++violated;
        state = std::move(out.next);
      }
      rr.discounted_return = discounted_return(rr.rewards, config.gamma);
      rr.violation_period_pct = 100.0 * violated / steps;
      rr.fallback_pct = 100.0 * fallbacks / steps;
      rr.noop_pct = 100.0 * noops / steps;
    } catch (const std::exception& e) {
      rr.failed = true;
      rr.error = e.what();
    }
  }

  // Deterministic aggregation over non-failed runs, ordered by run index.
  std::vector<double> times;
  int ok = 0;
  for (const RunResult& rr : report.runs) {
    if (rr.failed) {
      ++report.failed_runs;
      continue;
    }
    ++ok;
    report.mean_return += rr.discounted_return;
    report.mean_violation_pct += rr.violation_period_pct;
    report.mean_fallback_pct += rr.fallback_pct;
    times.insert(times.end(), rr.solver_times.begin(), rr.solver_times.end());
  }
  if (ok > 0) {
    report.mean_return /= ok;
    report.mean_violation_pct /= ok;
    report.mean_fallback_pct /= ok;
  }
  if (!times.empty()) {
    report.mean_solver_time_s =
        std::accumulate(times.begin(), times.end(), 0.0) / times.size();
    std::sort(times.begin(), times.end());
    report.p95_solver_time_s = times[static_cast<std::size_t>(0.95 * (times.size() - 1))];
  }
  return report;
}

Comparison compare_modes(const AnmSystem& sys, const std::vector<ModeSpec>& modes,
                         const PlannerConfig& base_config, int runs, int steps,
                         std::uint64_t seed) {
  if (modes.size() < 2) throw std::invalid_argument("need at least two modes to compare");
  Comparison cmp;
  for (const ModeSpec& m : modes) {
    PlannerConfig cfg = base_config;
    cfg.n_scenarios = m.n_scenarios;
    std::string label = m.label;
    if (label.empty())
      label = m.mode == PlannerMode::perfect_info
                  ? "perfect_info"
                  : "scenarios(" + std::to_string(m.n_scenarios) + ")";
    cmp.reports.push_back(run_experiment(sys, m.mode, cfg, runs, steps, seed, label));
  }
  cmp.first_strictly_better.assign(modes.size(), 0.0);
  for (std::size_t m = 1; m < modes.size(); ++m) {
    int wins = 0, paired = 0;
    for (int i = 0; i < runs; ++i) {
      const RunResult& a = cmp.reports[0].runs[i];
      const RunResult& b = cmp.reports[m].runs[i];
      if (a.failed || b.failed) continue;
      ++paired;
      if (a.discounted_return > b.discounted_return) ++wins;
    }
    cmp.first_strictly_better[m] = paired > 0 ? static_cast<double>(wins) / paired : 0.0;
  }
  return cmp;
}

}  // namespace anm
