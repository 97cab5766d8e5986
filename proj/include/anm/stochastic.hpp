#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace anm {

struct GmmComponent {
  double weight = 1.0;
  Eigen::VectorXd mean;  // over the (history..., next) window, oldest first
  Eigen::MatrixXd cov;
};

// Gaussian-mixture Markov model over (N+1)-lag windows of a scalar process.
// Daily trends are handled by fitting on a per-quarter-hour detrended series;
// the profile is added back when conditioning/sampling.
struct GmmMarkovModel {
  int lags = 1;          // N
  int n_components = 1;  // n
  std::vector<GmmComponent> components;
  Eigen::VectorXd quarter_profile;  // size 96 when detrending, empty otherwise
  double clamp_lo = -1e30;
  double clamp_hi = 1e30;
  // fit diagnostics
  std::vector<double> loglik_trace;
  bool jitter_applied = false;

  double profile_at(int quarter) const {  // quarter in 1..96
    return quarter_profile.size() == 96 ? quarter_profile[quarter - 1] : 0.0;
  }
};

struct EmOptions {
  double rel_tolerance = 1e-7;
  int max_iterations = 500;
};

// EM maximum-likelihood fit on window rows (x_{t-N+1},...,x_t,x_{t+1}).
// k-means++-style initialization from the seed; log-likelihood is
// non-decreasing across iterations. Degenerate components (covariance
// eigenvalue < 1e-9) are regularized with 1e-6 diagonal jitter and reported
// through jitter_applied. Throws if rows < 10 * n * (N+1).
GmmMarkovModel fit_em(const Eigen::MatrixXd& windows, int n_components, int lags,
                      std::uint64_t seed, const EmOptions& options = {});

struct ConditionalComponent {
  double weight;
  double mean;    // raw space (quarter profile added back)
  double stddev;
};

// Gaussian conditioning of each component on the observed lags; weights are
// rescaled by the component's marginal likelihood of the history. The
// history is given in raw space, oldest first, with its newest entry at
// quarter next_quarter - 1.
std::vector<ConditionalComponent> conditionalize(const GmmMarkovModel& model,
                                                 const std::vector<double>& history,
                                                 int next_quarter = 1);

// Piecewise component selection against w1 ~ U(0,1), outcome
// mu_i + w2 * sigma_i with w2 ~ N(0,1), clamped to [clamp_lo, clamp_hi].
double sample_next(const GmmMarkovModel& model, const std::vector<double>& history,
                   int next_quarter, double w1, double w2);

enum class CorpusKind { load, wind, irradiance };

// Synthetic stand-in corpora at 15-minute resolution, deterministic per
// seed. Load: double-peaked daily withdrawal (negative values); wind:
// positive AR process in m/s; irradiance: clear-sky bell scaled by AR
// cloudiness, zero at night.
std::vector<double> make_synthetic_corpus(CorpusKind kind, int days, std::uint64_t seed);

struct FitProcessOptions {
  bool detrend = true;
  double hard_lo = -1e30;  // clamp bounds never extend past these
  double hard_hi = 1e30;
  EmOptions em;
};

// Full fitting pipeline for one process: per-quarter detrend profile,
// window dataset, EM fit, clamp bounds from data min/max extended by 10%.
GmmMarkovModel fit_process_model(const std::vector<double>& series, int lags,
                                 int n_components, std::uint64_t seed,
                                 const FitProcessOptions& options = {});

}  // namespace anm
