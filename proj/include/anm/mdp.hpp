#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "anm/devices.hpp"
#include "anm/grid.hpp"
#include "anm/rng.hpp"
#include "anm/stochastic.hpp"

namespace anm {

struct PriceProfile {
  std::array<double, 96> curtailment{};  // currency per MWh, per quarter of hour

  static PriceProfile two_level(double off_peak, double peak,
                                int peak_from = 29, int peak_to = 88) {
    PriceProfile p;
    for (int q = 1; q <= 96; ++q)
      p.curtailment[q - 1] = (q >= peak_from && q <= peak_to) ? peak : off_peak;
    return p;
  }
  double curtailment_at(int quarter) const { return curtailment[quarter - 1]; }
};

// The full managed system: electrical model, devices, stochastic models and
// prices. Immutable after finalize(); safe to share across workers.
struct AnmSystem {
  NetworkModel network;
  std::vector<Device> devices;
  Complex slack_voltage{1.0, 0.0};
  PriceProfile prices = PriceProfile::two_level(20.0, 40.0);
  GmmMarkovModel load_model, wind_model, ir_model;

  // Derived device index lists (device ids); loads includes flexibles.
  std::vector<int> generators, loads, flexibles;
  std::vector<int> flex_pos_of_load;  // per loads index: index into flexibles or -1

  void finalize();

  int n_generators() const { return static_cast<int>(generators.size()); }
  int n_loads() const { return static_cast<int>(loads.size()); }
  int n_flexibles() const { return static_cast<int>(flexibles.size()); }

  // Uncurtailed production potential of generator device `dev` given the
  // exogenous drivers.
  double generator_potential(const Device& dev, double irradiance, double wind_speed) const;
};

// MDP state (s1, s2, s3, q_t). Histories are in process space (per-load
// scaling removed) and include the current value as their newest entry.
struct SystemState {
  std::vector<double> load_p;        // MW (<= 0), per AnmSystem::loads order
  double irradiance = 0.0;           // W/m^2
  double wind_speed = 0.0;           // m/s
  std::vector<double> gen_cap;       // MW cap per generator, kNoCap = none
  std::vector<int> flex_countdown;   // s_f per flexible load
  std::vector<std::vector<double>> load_hist;  // per load, oldest first
  std::vector<double> ir_hist, wind_hist;
  int quarter = 1;  // 1..96

  int next_quarter() const { return quarter % 96 + 1; }
};

struct ControlAction {
  std::vector<double> gen_cap;        // p-bar per generator, kNoCap allowed
  std::vector<std::uint8_t> flex_activate;

  static ControlAction noop(const AnmSystem& sys);
};

struct ExogenousDraw {
  std::vector<std::array<double, 2>> load_w;  // (w1, w2) per load
  std::array<double, 2> wind_w{}, ir_w{};
};

struct ExogenousValues {
  std::vector<double> load_p;  // MW, scaled, per loads order
  double wind_speed = 0.0;
  double irradiance = 0.0;
};

ExogenousDraw draw_exogenous(const AnmSystem& sys, Rng& rng);

// Pure mapping from (state histories, draw) to next-period exogenous values.
ExogenousValues sample_exogenous(const AnmSystem& sys, const SystemState& state,
                                 const ExogenousDraw& draw);

// Advances only the exogenous part of the state (histories, s1, quarter).
void apply_exogenous(const AnmSystem& sys, SystemState& state,
                     const ExogenousValues& values);

// Autonomous rollout of the exogenous processes (they do not depend on
// actions), used for paired-seed runs and perfect-information lookahead.
std::vector<ExogenousValues> simulate_exogenous_path(const AnmSystem& sys,
                                                     const SystemState& state,
                                                     int steps, Rng& rng);

struct RewardBreakdown {
  double curtailment_cost = 0.0;
  double flexibility_cost = 0.0;
  double barrier = 0.0;
  double total() const { return -(curtailment_cost + flexibility_cost + barrier); }
};

struct TransitionOutcome {
  SystemState next;
  PowerFlowSolution pf;
  RewardBreakdown reward;
  std::vector<LimitViolation> violations;
  bool pf_diverged = false;
  std::vector<double> gen_potential;  // realized uncurtailed potential, per generator
};

// x <= 0 -> 0, else 1000 * min(exp(x) - 1, 1000).
double barrier_chi(double x);

// Sum of chi over voltage-band and current-limit excesses.
double barrier_phi(const NetworkModel& network, const PowerFlowSolution& solution);

// Per-load admissible activation: {0,1} iff countdown == 0.
std::vector<bool> feasible_actions(const AnmSystem& sys, const SystemState& state);

// sum_t gamma^t r_t
double discounted_return(const std::vector<double>& rewards, double gamma);

// One MDP transition. The action must be feasible (throws otherwise); a
// diverged power flow scores the capped maximal barrier (1e6) instead of
// crashing.
TransitionOutcome step(const AnmSystem& sys, const SystemState& state,
                       const ControlAction& action, const ExogenousValues& next_exo);

// Convenience wrapper drawing the exogenous values from (w1, w2) draws.
TransitionOutcome step(const AnmSystem& sys, const SystemState& state,
                       const ControlAction& action, const ExogenousDraw& draw);

// Electrical evaluation shared with the planner: given exogenous values and
// controls, build bus injections (per-unit) and solve the power flow.
struct ElectricalEval {
  PowerFlowSolution pf;
  Eigen::VectorXd p_bus, q_bus;        // per-unit injections
  std::vector<double> gen_potential;   // MW per generator
  std::vector<double> gen_effective;   // min(cap, potential) MW
};
ElectricalEval evaluate_electrical(const AnmSystem& sys,
                                   const std::vector<double>& load_p,
                                   double irradiance, double wind_speed,
                                   const std::vector<double>& gen_cap,
                                   const std::vector<double>& flex_offset,
                                   const Eigen::VectorXcd* warm_start = nullptr);

// Initial state per the experimental protocol: flexible loads inactive,
// histories seeded from the quarter profiles then warmed up by sampling
// `warmup` discarded steps; ends at quarter 96.
SystemState make_initial_state(const AnmSystem& sys, Rng& rng, int warmup = 96);

}  // namespace anm
