#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "anm/scenario_tree.hpp"

namespace anm {

struct PlannerConfig {
  int horizon = 15;       // lookahead T
  int sample_count = 100; // trajectories sampled before clustering
  int n_scenarios = 3;    // W
  double gamma = 0.99;
  double branch_tolerance = 0.0;
  double time_limit_s = 600.0;  // per step; desk presets use far less

  // continuous solver (augmented Lagrangian)
  int al_max_outer = 8;
  int al_max_inner = 40;
  double kkt_tol = 1e-6;
  double feas_tol = 1e-6;

  // branch and bound
  double bb_rel_gap = 1e-4;
  int bb_max_nodes = 256;
};

enum class PlannerMode { perfect_info, scenarios };

// Deterministic equivalent of the lookahead program over a scenario tree.
// Generator curtailment is handled by a cap variable per nonanticipativity
// group whose scenario injections are min(cap, potential), which keeps the
// emitted plan physically consistent by construction; flexible-load
// activations are binaries with linear no-overlap window constraints.
struct LookaheadProblem {
  const AnmSystem* sys = nullptr;
  ScenarioTree tree;
  SystemState state;
  PlannerConfig cfg;
  int horizon = 0;
  int n_scenarios = 0;

  struct CapVar {
    int stage;                   // action stage, cap applies to period stage+1
    std::vector<int> scenarios;  // nonanticipativity group
    int gen;                     // index into sys->generators
    double upper;                // max potential over the group's scenarios
  };
  struct BinVar {
    int stage;
    std::vector<int> scenarios;
    int flex;                    // index into sys->flexibles
    bool forced_zero;            // initial countdown still running
  };
  std::vector<CapVar> cap_vars;
  std::vector<BinVar> bin_vars;
  std::vector<std::vector<std::vector<int>>> cap_index;  // [k][stage][gen] -> var
  std::vector<std::vector<std::vector<int>>> bin_index;  // [k][stage][flex] -> var
  std::vector<std::vector<double>> base_offset;  // [stage][flex], MW, services active at t
  std::vector<std::vector<int>> window_cons;     // var-id sets with sum <= 1
  std::vector<double> stage_discount;            // gamma^stage
  std::vector<double> stage_price;               // C_curt(q_{stage+1})

  int n_cap() const { return static_cast<int>(cap_vars.size()); }
  int n_bin() const { return static_cast<int>(bin_vars.size()); }
  int n_vars() const { return n_cap() + n_bin(); }
};

LookaheadProblem assemble(const AnmSystem& sys, const SystemState& state,
                          const ScenarioTree& tree, const PlannerConfig& cfg);

struct ContinuousSolution {
  std::vector<double> x;  // caps then binaries
  double objective = 0.0;
  double max_violation = 0.0;
  double kkt_residual = 0.0;
  bool feasible = false;
  bool converged = false;
  int evaluations = 0;
};

// Multiplier/penalty state carried between related solves (branch-and-bound
// children, receding-horizon warm starts).
struct AlState {
  std::vector<double> lambda;
  double mu = 10.0;
};

// Local solve of the continuous program: augmented-Lagrangian outer loop
// over the electrical limit and window constraints, projected-gradient
// inner minimization within the variable boxes, and a final feasibility
// polish along the curtailment direction. fixed_binaries pins bin var i to
// fixed_binaries[i] in {0,1}; -1 leaves it relaxed in [0,1]. When al_state
// is given it seeds the multipliers and receives the final ones.
ContinuousSolution solve_continuous(const LookaheadProblem& problem,
                                    const std::vector<int>& fixed_binaries,
                                    const std::vector<double>* warm_start = nullptr,
                                    AlState* al_state = nullptr);

enum class SolveStatus { optimal, time_limit, infeasible, fallback_used };

struct PlannerSolution {
  ControlAction first_stage;
  std::vector<double> plan_x;  // full variable vector of the incumbent
  double objective = 0.0;
  SolveStatus status = SolveStatus::optimal;
  int node_count = 0;
  double wall_time_s = 0.0;
  bool fallback = false;
};

// Best-first branch and bound over the activation binaries; node bounds are
// continuous-relaxation values (local solves, so the bound is heuristic on
// nonconvex instances). Deterministic tie-break on node id.
PlannerSolution branch_and_bound(const LookaheadProblem& problem, double time_limit_s,
                                 const std::vector<double>* warm_start = nullptr);

// Augmented-Lagrangian merit value at x with the given multipliers/penalty;
// optionally its analytic gradient and the raw max constraint violation.
// Exposed so the gradient can be validated against finite differences.
double lookahead_penalty_eval(const LookaheadProblem& problem,
                              const std::vector<double>& x,
                              const std::vector<double>& lambda, double mu,
                              std::vector<double>* grad = nullptr,
                              double* max_violation = nullptr,
                              double* cost_value = nullptr);

// Number of augmented-Lagrangian constraints (electrical limits plus
// activation-window constraints) carried by the problem.
int lookahead_constraint_count(const LookaheadProblem& problem);

// p-bar retained iff some scenario's next-period potential exceeds it,
// otherwise reset to +infinity.
ControlAction postprocess_curtailment(const ControlAction& action, const ScenarioTree& tree);

// Single-period curtailment-only solve over the same scenarios; total: falls
// back to a flagged no-op if even that fails.
PlannerSolution fallback_plan(const AnmSystem& sys, const SystemState& state,
                              const ScenarioTree& tree, const PlannerConfig& cfg);

struct ActContext {
  PlannerMode mode = PlannerMode::scenarios;
  // Realized future exogenous path starting at the next period; required in
  // perfect_info mode (supplied by the harness).
  const std::vector<ExogenousValues>* future_path = nullptr;
  // Warm start carried between receding-horizon steps.
  std::optional<std::vector<double>> warm_start;
};

struct ActResult {
  ControlAction action;
  PlannerSolution solution;
  ScenarioTree tree;
  bool used_fallback = false;
  bool noop_shortcut = false;
  double wall_time_s = 0.0;
};

// Full receding-horizon pipeline: sample/cluster (or adopt the realized
// path), assemble, solve time-limited, post-process, emit the first-stage
// action. A no-op that satisfies every constraint is returned directly:
// costs are nonnegative, so it is exactly optimal.
ActResult act(const AnmSystem& sys, const SystemState& state, const PlannerConfig& cfg,
              ActContext& ctx, Rng& rng);

}  // namespace anm
