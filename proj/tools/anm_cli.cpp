// Command-line surface for the toolkit: fit stochastic models, generate
// instances, simulate the receding-horizon controller, benchmark planner
// modes and render reports. Every subcommand is deterministic given its
// inputs and a single seed, which is expanded internally through a
// counter-based stream splitter.
//
// Exit codes: 0 success, 2 invalid input (bad flags, malformed or missing
// files), 3 runtime failure (diverged simulation, solver breakdown).

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "anm/bench.hpp"
#include "anm/io.hpp"
#include "anm/svg.hpp"

namespace fs = std::filesystem;
using anm::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitRuntime = 3;

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

anm::AnmSystem load_system(const std::string& instance, const std::string& models_dir) {
  anm::AnmSystem sys;
  try {
    sys = anm::load_instance(instance);
    anm::attach_models(sys, fs::path(models_dir) / "load.json",
                       fs::path(models_dir) / "wind.json",
                       fs::path(models_dir) / "irradiance.json");
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
  return sys;
}

anm::PlannerMode parse_mode(const std::string& s, int& n_scenarios) {
  if (s == "perfect_info") return anm::PlannerMode::perfect_info;
  if (s == "scenarios") return anm::PlannerMode::scenarios;
  const auto colon = s.find(':');
  if (s.substr(0, colon) == "scenarios" && colon != std::string::npos) {
    n_scenarios = std::stoi(s.substr(colon + 1));
    if (n_scenarios < 1) throw InputError("scenario count must be >= 1");
    return anm::PlannerMode::scenarios;
  }
  throw InputError("unknown mode '" + s + "' (expected perfect_info or scenarios[:W])");
}

json report_to_json(const anm::RunReport& r) {
  json j;
  j["mode"] = r.mode_label;
  j["steps"] = r.steps;
  j["seed"] = r.seed;
  j["config"] = {{"horizon", r.config.horizon},
                 {"sample_count", r.config.sample_count},
                 {"n_scenarios", r.config.n_scenarios},
                 {"gamma", r.config.gamma},
                 {"time_limit_s", r.config.time_limit_s}};
  j["failed_runs"] = r.failed_runs;
  j["mean_return"] = r.mean_return;
  j["mean_violation_pct"] = r.mean_violation_pct;
  j["mean_fallback_pct"] = r.mean_fallback_pct;
  j["runs"] = json::array();
  for (const anm::RunResult& rr : r.runs) {
    json jr;
    jr["run"] = rr.run;
    jr["failed"] = rr.failed;
    if (rr.failed) jr["error"] = rr.error;
    jr["return"] = rr.discounted_return;
    jr["violation_pct"] = rr.violation_period_pct;
    jr["fallback_pct"] = rr.fallback_pct;
    jr["noop_pct"] = rr.noop_pct;
    j["runs"].push_back(std::move(jr));
  }
  return j;
}

// Wall-clock data lives in its own artifact so the main report replays
// byte-identically under a fixed seed.
json timings_to_json(const std::vector<anm::RunReport>& reports) {
  json j;
  j["schema"] = "anm-timings/1";
  j["modes"] = json::array();
  for (const anm::RunReport& r : reports) {
    json jm;
    jm["mode"] = r.mode_label;
    jm["mean_solver_time_s"] = r.mean_solver_time_s;
    jm["p95_solver_time_s"] = r.p95_solver_time_s;
    jm["runs"] = json::array();
    for (const anm::RunResult& rr : r.runs) {
      json jr;
      jr["run"] = rr.run;
      jr["solver_times"] = rr.solver_times;
      jm["runs"].push_back(std::move(jr));
    }
    j["modes"].push_back(std::move(jm));
  }
  return j;
}

// Renders the comparison table from a report JSON plus, when timing data is
// available, the two timing figures. The table is a pure function of the
// report, so re-rendering is byte-identical.
void render_report(const json& report, const json* timings, const fs::path& out_dir) {
  std::ostringstream table;
  table << "mode,mean_return,violation_pct,fallback_pct,failed_runs\n";
  for (const json& jm : report.at("modes")) {
    table << jm.at("mode").get<std::string>() << ',' << fmt(jm.at("mean_return").get<double>())
          << ',' << fmt(jm.at("mean_violation_pct").get<double>()) << ','
          << fmt(jm.at("mean_fallback_pct").get<double>()) << ','
          << jm.at("failed_runs").get<int>() << '\n';
  }
  anm::write_text_atomic(out_dir / "table.csv", table.str());
  if (!timings) return;

  anm::SvgPlot scatter;
  scatter.title = "Expected return vs mean solver time";
  scatter.x_label = "mean solver time per step [s]";
  scatter.y_label = "discounted return";
  const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"};
  std::vector<double> all_times;
  int color = 0;
  for (const json& jm : report.at("modes")) {
    const std::string label = jm.at("mode").get<std::string>();
    const json* jt = nullptr;
    for (const json& cand : timings->at("modes"))
      if (cand.at("mode").get<std::string>() == label) jt = &cand;
    if (!jt) continue;
    anm::SvgSeries s;
    s.label = label;
    s.color = palette[color++ % 5];
    for (const json& jr : jm.at("runs")) {
      if (jr.at("failed").get<bool>()) continue;
      const int run = jr.at("run").get<int>();
      for (const json& tr : jt->at("runs")) {
        if (tr.at("run").get<int>() != run) continue;
        const auto& times = tr.at("solver_times");
        double mean = 0.0;
        for (const json& t : times) {
          mean += t.get<double>();
          all_times.push_back(t.get<double>());
        }
        if (!times.empty()) mean /= times.size();
        s.x.push_back(mean);
        s.y.push_back(jr.at("return").get<double>());
      }
    }
    scatter.series.push_back(std::move(s));
  }
  anm::write_text_atomic(out_dir / "return_vs_time.svg", scatter.render());
  const anm::SvgPlot hist = anm::histogram_plot(
      all_times, 30, "Distribution of per-step solution time", "solver time [s]");
  anm::write_text_atomic(out_dir / "solver_time_hist.svg", hist.render());
}

int cmd_fit(const std::string& out_dir, int days, std::uint64_t seed, int load_lags,
            int load_comps, int wind_lags, int wind_comps, int ir_lags, int ir_comps) {
  fs::create_directories(out_dir);
  struct Job {
    anm::CorpusKind kind;
    const char* name;
    int lags, comps;
    double hard_lo, hard_hi;
    std::uint64_t salt;
  };
  const Job jobs[] = {
      {anm::CorpusKind::load, "load", load_lags, load_comps, -1e30, 0.0, 0x10ad},
      {anm::CorpusKind::wind, "wind", wind_lags, wind_comps, 0.0, 1e30, 0x817d},
      {anm::CorpusKind::irradiance, "irradiance", ir_lags, ir_comps, 0.0, 1e30, 0x50a1},
  };
  // Fit everything before writing anything so failures leave no partial
  // output behind.
  std::vector<anm::GmmMarkovModel> models;
  for (const Job& job : jobs) {
    anm::FitProcessOptions opt;
    opt.hard_lo = job.hard_lo;
    opt.hard_hi = job.hard_hi;
    models.push_back(anm::fit_process_model(anm::make_synthetic_corpus(job.kind, days, seed),
                                            job.lags, job.comps, seed ^ job.salt, opt));
    std::cout << "fit " << job.name << ": " << models.back().loglik_trace.size()
              << " EM iterations, final log-likelihood "
              << fmt(models.back().loglik_trace.back()) << "\n";
  }
  for (std::size_t i = 0; i < models.size(); ++i)
    anm::save_model(models[i], fs::path(out_dir) / (std::string(jobs[i].name) + ".json"));
  return kExitOk;
}

int cmd_simulate(const std::string& instance, const std::string& models_dir,
                 const std::string& mode_str, int steps, std::uint64_t seed,
                 const std::string& out_dir, anm::PlannerConfig cfg) {
  anm::AnmSystem sys = load_system(instance, models_dir);
  int w = cfg.n_scenarios;
  const anm::PlannerMode mode = parse_mode(mode_str, w);
  cfg.n_scenarios = w;
  fs::create_directories(out_dir);

  anm::Rng init_rng = anm::Rng::stream(seed, 1000);
  anm::SystemState state = anm::make_initial_state(sys, init_rng);
  anm::Rng path_rng = anm::Rng::stream(seed, 2000);
  const auto path = anm::simulate_exogenous_path(sys, state, steps + cfg.horizon, path_rng);
  anm::Rng plan_rng = anm::Rng::stream(seed, 3000);

  std::ostringstream trace;
  trace << "step,quarter,reward,curtailment_cost,flexibility_cost,barrier,violations,"
           "fallback,noop,total_load_mw,wind_speed,irradiance\n";
  std::ostringstream timing;
  timing << "step,solver_time_s\n";
  anm::ActContext ctx;
  ctx.mode = mode;
  std::vector<double> rewards;
  int violated = 0, fallbacks = 0;
  bool diverged = false;
  for (int t = 0; t < steps; ++t) {
    std::vector<anm::ExogenousValues> future(path.begin() + t, path.end());
    ctx.future_path = &future;
    anm::Rng step_rng = plan_rng.split(t);
    anm::ActResult res = anm::act(sys, state, cfg, ctx, step_rng);
    anm::TransitionOutcome out = anm::step(sys, state, res.action, path[t]);
    rewards.push_back(out.reward.total());
    if (out.pf_diverged) diverged = true;
    if (out.pf_diverged || !out.violations.empty()) ++violated;
    if (res.used_fallback) ++fallbacks;
    double total_load = 0.0;
    for (double l : out.next.load_p) total_load += l;
    trace << t << ',' << out.next.quarter << ',' << fmt(out.reward.total()) << ','
          << fmt(out.reward.curtailment_cost) << ',' << fmt(out.reward.flexibility_cost)
          << ',' << fmt(out.reward.barrier) << ',' << out.violations.size() << ','
          << (res.used_fallback ? 1 : 0) << ',' << (res.noop_shortcut ? 1 : 0) << ','
          << fmt(total_load) << ',' << fmt(out.next.wind_speed) << ','
          << fmt(out.next.irradiance) << '\n';
    timing << t << ',' << fmt(res.wall_time_s) << '\n';
    state = std::move(out.next);
  }

  json summary;
  summary["schema"] = "anm-summary/1";
  summary["mode"] = mode_str;
  summary["steps"] = steps;
  summary["seed"] = seed;
  summary["discounted_return"] = anm::discounted_return(rewards, cfg.gamma);
  summary["violation_period_pct"] = 100.0 * violated / steps;
  summary["fallback_pct"] = 100.0 * fallbacks / steps;
  summary["diverged"] = diverged;
  anm::write_text_atomic(fs::path(out_dir) / "trace.csv", trace.str());
  anm::write_text_atomic(fs::path(out_dir) / "summary.json", summary.dump(2) + "\n");
  // Wall-clock times go to a separate file: trace and summary replay
  // byte-identically under a fixed seed, timing.csv does not.
  anm::write_text_atomic(fs::path(out_dir) / "timing.csv", timing.str());
  return diverged ? kExitRuntime : kExitOk;
}

int cmd_plan(const std::string& instance, const std::string& models_dir,
             const std::string& state_path, const std::string& mode_str,
             std::uint64_t seed, const std::string& out_dir, anm::PlannerConfig cfg) {
  anm::AnmSystem sys = load_system(instance, models_dir);
  int w = cfg.n_scenarios;
  const anm::PlannerMode mode = parse_mode(mode_str, w);
  cfg.n_scenarios = w;
  if (mode == anm::PlannerMode::perfect_info)
    throw InputError("plan works on the current state only; use mode scenarios[:W]");
  fs::create_directories(out_dir);

  anm::SystemState state;
  if (!state_path.empty()) {
    try {
      state = anm::state_from_json(anm::read_json_file(state_path));
    } catch (const std::exception& e) {
      throw InputError(e.what());
    }
  } else {
    anm::Rng init_rng = anm::Rng::stream(seed, 1000);
    state = anm::make_initial_state(sys, init_rng);
  }

  anm::ActContext ctx;
  anm::Rng rng = anm::Rng::stream(seed, 3000);
  anm::ActResult res = anm::act(sys, state, cfg, ctx, rng);

  json j;
  j["schema"] = "anm-plan/1";
  j["objective"] = res.solution.objective;
  j["fallback"] = res.used_fallback;
  j["noop_shortcut"] = res.noop_shortcut;
  j["node_count"] = res.solution.node_count;
  j["gen_cap"] = json::array();
  for (double c : res.action.gen_cap)
    j["gen_cap"].push_back(std::isfinite(c) ? json(c) : json());
  j["flex_activate"] = json::array();
  for (auto a : res.action.flex_activate) j["flex_activate"].push_back(a != 0);
  anm::write_text_atomic(fs::path(out_dir) / "plan.json", j.dump(2) + "\n");
  std::cout << "planned in " << fmt(res.wall_time_s) << " s, objective "
            << fmt(res.solution.objective) << "\n";
  return kExitOk;
}

int cmd_benchmark(const std::string& instance, const std::string& models_dir,
                  const std::vector<std::string>& mode_strs, int runs, int steps,
                  std::uint64_t seed, const std::string& out_dir,
                  anm::PlannerConfig cfg) {
  anm::AnmSystem sys = load_system(instance, models_dir);
  std::vector<anm::ModeSpec> modes;
  for (const std::string& m : mode_strs) {
    anm::ModeSpec spec;
    spec.n_scenarios = cfg.n_scenarios;
    spec.mode = parse_mode(m, spec.n_scenarios);
    spec.label = m;
    modes.push_back(std::move(spec));
  }
  fs::create_directories(out_dir);
  anm::Comparison cmp;
  if (modes.size() >= 2) {
    cmp = anm::compare_modes(sys, modes, cfg, runs, steps, seed);
  } else {
    anm::PlannerConfig c = cfg;
    c.n_scenarios = modes.at(0).n_scenarios;
    cmp.reports.push_back(
        anm::run_experiment(sys, modes[0].mode, c, runs, steps, seed, modes[0].label));
  }

  json report;
  report["schema"] = "anm-report/1";
  report["modes"] = json::array();
  for (const anm::RunReport& r : cmp.reports) report["modes"].push_back(report_to_json(r));
  if (!cmp.first_strictly_better.empty())
    report["first_strictly_better"] = cmp.first_strictly_better;
  anm::write_text_atomic(fs::path(out_dir) / "report.json", report.dump(2) + "\n");
  const json timings = timings_to_json(cmp.reports);
  anm::write_text_atomic(fs::path(out_dir) / "timings.json", timings.dump(2) + "\n");
  render_report(report, &timings, out_dir);
  int failed = 0;
  for (const anm::RunReport& r : cmp.reports) failed += r.failed_runs;
  return failed > 0 ? kExitRuntime : kExitOk;
}

int cmd_report(const std::string& input, const std::string& timings_path,
               const std::string& out_dir) {
  json report;
  json timings;
  bool have_timings = false;
  try {
    report = anm::read_json_file(input);
    if (report.value("schema", "") != "anm-report/1")
      throw InputError("unsupported report schema");
    // default to a timings.json sitting next to the report
    fs::path tp = timings_path.empty()
                      ? fs::path(input).parent_path() / "timings.json"
                      : fs::path(timings_path);
    if (!timings_path.empty() || fs::exists(tp)) {
      timings = anm::read_json_file(tp);
      if (timings.value("schema", "") != "anm-timings/1")
        throw InputError("unsupported timings schema");
      have_timings = true;
    }
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
  fs::create_directories(out_dir);
  render_report(report, have_timings ? &timings : nullptr, out_dir);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active network management toolkit"};
  app.require_subcommand(1);

  std::uint64_t seed = 1;
  app.add_option("--seed", seed, "Master random seed")->capture_default_str();

  // fit
  auto* fit = app.add_subcommand("fit", "Fit stochastic process models on synthetic corpora");
  std::string fit_out = "out";
  int fit_days = 30;
  int load_lags = 2, load_comps = 10, wind_lags = 1, wind_comps = 1, ir_lags = 1,
      ir_comps = 10;
  fit->add_option("--out-dir", fit_out, "Output directory")->capture_default_str();
  fit->add_option("--days", fit_days, "Synthetic corpus length in days")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  fit->add_option("--load-lags", load_lags)->check(CLI::PositiveNumber)->capture_default_str();
  fit->add_option("--load-components", load_comps)->check(CLI::PositiveNumber)->capture_default_str();
  fit->add_option("--wind-lags", wind_lags)->check(CLI::PositiveNumber)->capture_default_str();
  fit->add_option("--wind-components", wind_comps)->check(CLI::PositiveNumber)->capture_default_str();
  fit->add_option("--ir-lags", ir_lags)->check(CLI::PositiveNumber)->capture_default_str();
  fit->add_option("--ir-components", ir_comps)->check(CLI::PositiveNumber)->capture_default_str();

  // gen-instance
  auto* gen = app.add_subcommand("gen-instance", "Generate a random radial instance");
  std::string gen_out = "instance.json";
  anm::InstanceSpec spec;
  std::string flex_level = "low";
  gen->add_option("--out", gen_out, "Output instance file")->capture_default_str();
  gen->add_option("--buses", spec.n_buses)->capture_default_str();
  gen->add_option("--residential", spec.n_residential)->capture_default_str();
  gen->add_option("--production", spec.n_production)->capture_default_str();
  gen->add_option("--topological", spec.n_topological)->capture_default_str();
  gen->add_option("--flexibility", flex_level, "low, medium or high")->capture_default_str();
  gen->add_option("--peak-load", spec.peak_load_mw, "Aggregate peak withdrawal [MW]")
      ->capture_default_str();
  gen->add_option("--pv-surface", spec.pv_surface_m2, "PV surface per residential node [m^2]")
      ->capture_default_str();
  gen->add_option("--wind-capacity", spec.wind_capacity_mw, "Wind capacity per production node [MW]")
      ->capture_default_str();
  gen->add_option("--line-stress", spec.line_stress,
                  "Current limits as a fraction of worst-case transfer")
      ->capture_default_str();

  // shared planner overrides
  anm::PlannerConfig cfg;
  cfg.horizon = 15;
  const auto add_planner_flags = [&cfg](CLI::App* cmd) {
    cmd->add_option("--horizon", cfg.horizon, "Lookahead periods T")->capture_default_str();
    cmd->add_option("--samples", cfg.sample_count, "Trajectories sampled before clustering")
        ->capture_default_str();
    cmd->add_option("--scenarios", cfg.n_scenarios, "Scenario count W")->capture_default_str();
    cmd->add_option("--gamma", cfg.gamma, "Discount factor")->capture_default_str();
    cmd->add_option("--time-limit", cfg.time_limit_s, "Per-step solver limit [s]")
        ->capture_default_str();
  };

  // simulate
  auto* sim = app.add_subcommand("simulate", "Run a receding-horizon simulation");
  std::string sim_instance, sim_models, sim_mode = "scenarios:3", sim_out = "out";
  int sim_steps = 288;
  sim->add_option("--instance", sim_instance)->required();
  sim->add_option("--models", sim_models, "Directory with load/wind/irradiance models")->required();
  sim->add_option("--mode", sim_mode, "perfect_info or scenarios[:W]")->capture_default_str();
  sim->add_option("--steps", sim_steps)->check(CLI::PositiveNumber)->capture_default_str();
  sim->add_option("--out-dir", sim_out)->capture_default_str();
  add_planner_flags(sim);

  // plan
  auto* plan = app.add_subcommand("plan", "One-shot plan for a saved or sampled state");
  std::string plan_instance, plan_models, plan_state, plan_mode = "scenarios:3",
                                                      plan_out = "out";
  plan->add_option("--instance", plan_instance)->required();
  plan->add_option("--models", plan_models)->required();
  plan->add_option("--state", plan_state, "Saved state file (default: sample one)");
  plan->add_option("--mode", plan_mode)->capture_default_str();
  plan->add_option("--out-dir", plan_out)->capture_default_str();
  add_planner_flags(plan);

  // benchmark
  auto* bench = app.add_subcommand("benchmark", "Paired-seed comparison across planner modes");
  std::string bench_instance, bench_models, bench_out = "out";
  std::vector<std::string> bench_modes = {"perfect_info", "scenarios:3", "scenarios:1"};
  int bench_runs = 20, bench_steps = 96;
  bench->add_option("--instance", bench_instance)->required();
  bench->add_option("--models", bench_models)->required();
  bench->add_option("--modes", bench_modes, "Modes to compare")->capture_default_str();
  bench->add_option("--runs", bench_runs)->check(CLI::PositiveNumber)->capture_default_str();
  bench->add_option("--steps", bench_steps)->check(CLI::PositiveNumber)->capture_default_str();
  bench->add_option("--out-dir", bench_out)->capture_default_str();
  add_planner_flags(bench);

  // report
  auto* rep = app.add_subcommand("report", "Render tables and figures from a report file");
  std::string rep_input, rep_timings, rep_out = "out";
  rep->add_option("--input", rep_input, "report.json from `benchmark`")->required();
  rep->add_option("--timings", rep_timings,
                  "timings.json from `benchmark` (default: next to the report)");
  rep->add_option("--out-dir", rep_out)->capture_default_str();

  // let --seed (defined on the root) appear after the subcommand name
  for (CLI::App* sub : app.get_subcommands([](const CLI::App*) { return true; }))
    sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    // --help and friends exit 0; anything else is a usage error
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*fit)
      return cmd_fit(fit_out, fit_days, seed, load_lags, load_comps, wind_lags, wind_comps,
                     ir_lags, ir_comps);
    if (*gen) {
      if (flex_level == "low")
        spec.flexibility = anm::FlexLevel::low;
      else if (flex_level == "medium")
        spec.flexibility = anm::FlexLevel::medium;
      else if (flex_level == "high")
        spec.flexibility = anm::FlexLevel::high;
      else
        throw InputError("flexibility must be low, medium or high");
      try {
        spec.validate();
      } catch (const std::exception& e) {
        throw InputError(e.what());
      }
      anm::save_instance(anm::generate_instance(spec, seed), gen_out);
      return kExitOk;
    }
    if (*sim) return cmd_simulate(sim_instance, sim_models, sim_mode, sim_steps, seed, sim_out, cfg);
    if (*plan)
      return cmd_plan(plan_instance, plan_models, plan_state, plan_mode, seed, plan_out, cfg);
    if (*bench)
      return cmd_benchmark(bench_instance, bench_models, bench_modes, bench_runs, bench_steps,
                           seed, bench_out, cfg);
    if (*rep) return cmd_report(rep_input, rep_timings, rep_out);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
