#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "anm/planner.hpp"

namespace anm {

enum class FlexLevel { low, medium, high };

// Parametric stand-in for a medium-voltage benchmark feeder: a random
// radial tree with residential nodes (aggregate load + rooftop PV),
// production nodes (wind farm) and bare topological nodes. Sizing scales
// the reference design (53 residential nodes, ~20 MW peak, 6 MW wind
// units, flexibility totals 1.7/3.4/5.0 MW over 11/22/33 flexible loads)
// down to the requested node counts.
struct InstanceSpec {
  int n_buses = 15;
  int n_residential = 9;
  int n_production = 2;
  int n_topological = 3;  // plus exactly one slack
  FlexLevel flexibility = FlexLevel::low;

  double peak_load_mw = 3.5;       // aggregate withdrawal peak target
  double pv_surface_m2 = 2000.0;   // per residential node
  double wind_capacity_mw = 6.0;   // per production node
  double price_off_peak = 20.0;    // currency per MWh
  double price_peak = 40.0;
  // Branch current limits as a fraction of the worst-case subtree transfer;
  // < 1 makes congestion (and hence curtailment) possible at peaks.
  double line_stress = 0.9;

  void validate() const;
};

// Reference-design flexibility scaling for this spec: count and total
// maximum amplitude (MW).
int flexible_count(const InstanceSpec& spec);
double flexible_total_amplitude(const InstanceSpec& spec);

// Random radial instance per the spec; stochastic models are not attached
// (see fit_default_models / attach_models).
AnmSystem generate_instance(const InstanceSpec& spec, std::uint64_t seed);

// Fits the three process models on synthetic corpora with the default
// structure (lags N, components n): load (2, 10), wind (1, 1),
// irradiance (1, 10).
void fit_default_models(AnmSystem& sys, int days, std::uint64_t seed);

struct RunResult {
  int run = 0;
  bool failed = false;
  std::string error;
  double discounted_return = 0.0;
  double violation_period_pct = 0.0;  // % of periods with any limit violation
  double fallback_pct = 0.0;          // % of periods resolved by the fallback
  double noop_pct = 0.0;              // % of periods settled by the no-op shortcut
  std::vector<double> solver_times;   // seconds per step
  std::vector<double> rewards;        // per step
};

struct RunReport {
  std::string mode_label;
  PlannerMode mode = PlannerMode::scenarios;
  PlannerConfig config;
  int steps = 0;
  std::uint64_t seed = 0;
  std::vector<RunResult> runs;

  // aggregates over non-failed runs
  int failed_runs = 0;
  double mean_return = 0.0;
  double mean_violation_pct = 0.0;
  double mean_fallback_pct = 0.0;
  double mean_solver_time_s = 0.0;
  double p95_solver_time_s = 0.0;
};

// The experimental protocol: per run, draw an initial state (flexible loads
// inactive, histories warmed up), precompute the realized exogenous path
// (the processes are action-independent, which makes paired-seed
// comparisons exact), then simulate `steps` receding-horizon periods.
// A panic inside a run marks it failed and reported, never silently dropped.
RunReport run_experiment(const AnmSystem& sys, PlannerMode mode,
                         const PlannerConfig& config, int runs, int steps,
                         std::uint64_t seed, const std::string& label = "");

struct ModeSpec {
  PlannerMode mode = PlannerMode::scenarios;
  int n_scenarios = 1;
  std::string label;
};

struct Comparison {
  std::vector<RunReport> reports;  // one per mode, same run seeds throughout
  // fraction of paired runs where reports[0] strictly beats reports[i]
  std::vector<double> first_strictly_better;
};

// Paired-seed comparison across modes: run i consumes identical exogenous
// realizations in every mode.
Comparison compare_modes(const AnmSystem& sys, const std::vector<ModeSpec>& modes,
                         const PlannerConfig& base_config, int runs, int steps,
                         std::uint64_t seed);

}  // namespace anm
