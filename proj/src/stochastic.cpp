#include "anm/stochastic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "anm/rng.hpp"

namespace anm {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

// Regularize until the smallest eigenvalue clears the floor.
bool regularize(Eigen::MatrixXd& cov) {
  bool jittered = false;
  for (int attempt = 0; attempt < 64; ++attempt) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.eigenvalues().minCoeff() >= 1e-9) return jittered;
    cov += 1e-6 * Eigen::MatrixXd::Identity(cov.rows(), cov.cols());
    jittered = true;
  }
  return jittered;
}

double log_gauss(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                 const Eigen::LLT<Eigen::MatrixXd>& llt) {
  const Eigen::VectorXd d = x - mean;
  const Eigen::VectorXd z = llt.matrixL().solve(d);
  double logdet = 0.0;
  for (int i = 0; i < llt.matrixL().rows(); ++i)
    logdet += std::log(llt.matrixL()(i, i));
  return -0.5 * (x.size() * kLog2Pi + z.squaredNorm()) - logdet;
}

}  // namespace

GmmMarkovModel fit_em(const Eigen::MatrixXd& windows, int n_components, int lags,
                      std::uint64_t seed, const EmOptions& opt) {
  const int rows = static_cast<int>(windows.rows());
  const int dim = static_cast<int>(windows.cols());
  if (n_components < 1 || lags < 1) throw std::invalid_argument("n and N must be >= 1");
  if (dim != lags + 1) throw std::invalid_argument("window width must be N+1");
  if (rows < 10 * n_components * dim)
    throw std::invalid_argument("insufficient data for EM fit");

  GmmMarkovModel model;
  model.lags = lags;
  model.n_components = n_components;

  // k-means++-style seeding of component means.
  Rng rng(seed);
  std::vector<int> centers;
  centers.push_back(rng.uniform_int(0, rows - 1));
  Eigen::VectorXd d2 = Eigen::VectorXd::Constant(rows, std::numeric_limits<double>::max());
  while (static_cast<int>(centers.size()) < n_components) {
    for (int i = 0; i < rows; ++i) {
      const double d = (windows.row(i) - windows.row(centers.back())).squaredNorm();
      d2[i] = std::min(d2[i], d);
    }
    double total = d2.sum();
    int pick = rows - 1;
    if (total > 0.0) {
      double u = rng.uniform01() * total;
      for (int i = 0; i < rows; ++i) {
        u -= d2[i];
        if (u <= 0.0) { pick = i; break; }
      }
    } else {
      pick = rng.uniform_int(0, rows - 1);
    }
    centers.push_back(pick);
  }

  const Eigen::VectorXd global_mean = windows.colwise().mean();
  Eigen::MatrixXd global_cov = Eigen::MatrixXd::Zero(dim, dim);
  for (int i = 0; i < rows; ++i) {
    const Eigen::VectorXd d = windows.row(i).transpose() - global_mean;
    global_cov += d * d.transpose();
  }
  global_cov /= rows;
  model.jitter_applied = regularize(global_cov) || model.jitter_applied;

  model.components.resize(n_components);
  for (int c = 0; c < n_components; ++c) {
    model.components[c].weight = 1.0 / n_components;
    model.components[c].mean = windows.row(centers[c]).transpose();
    model.components[c].cov = global_cov;
  }

  Eigen::MatrixXd resp(rows, n_components);
  double prev_ll = -std::numeric_limits<double>::max();
  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    // E step with log-sum-exp.
    std::vector<Eigen::LLT<Eigen::MatrixXd>> llts(n_components);
    for (int c = 0; c < n_components; ++c)
      llts[c].compute(model.components[c].cov);
    double ll = 0.0;
    for (int i = 0; i < rows; ++i) {
      Eigen::VectorXd lp(n_components);
      for (int c = 0; c < n_components; ++c)
        lp[c] = std::log(model.components[c].weight) +
                log_gauss(windows.row(i).transpose(), model.components[c].mean, llts[c]);
      const double mx = lp.maxCoeff();
      const double lse = mx + std::log((lp.array() - mx).exp().sum());
      ll += lse;
      for (int c = 0; c < n_components; ++c)
        resp(i, c) = std::exp(lp[c] - lse);
    }
    model.loglik_trace.push_back(ll);
    if (iter > 0 && ll - prev_ll < opt.rel_tolerance * (std::abs(prev_ll) + 1.0)) break;
    prev_ll = ll;

    // M step.
    for (int c = 0; c < n_components; ++c) {
      const double nk = resp.col(c).sum();
      if (nk < 1e-12) {
        // Empty component: re-seed on the point worst explained overall.
        int worst = 0;
        resp.rowwise().sum().minCoeff(&worst);
        model.components[c].mean = windows.row(worst).transpose();
        model.components[c].cov = global_cov;
        model.components[c].weight = 1.0 / rows;
        continue;
      }
      model.components[c].weight = nk / rows;
      Eigen::VectorXd mu = (resp.col(c).transpose() * windows).transpose() / nk;
      Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
      for (int i = 0; i < rows; ++i) {
        const Eigen::VectorXd d = windows.row(i).transpose() - mu;
        cov += resp(i, c) * d * d.transpose();
      }
      cov /= nk;
      model.jitter_applied = regularize(cov) || model.jitter_applied;
      model.components[c].mean = std::move(mu);
      model.components[c].cov = std::move(cov);
    }
    double wsum = 0.0;
    for (auto& c : model.components) wsum += c.weight;
    for (auto& c : model.components) c.weight /= wsum;
  }

  double lo = windows.minCoeff(), hi = windows.maxCoeff();
  const double ext = 0.1 * (hi - lo);
  model.clamp_lo = lo - ext;
  model.clamp_hi = hi + ext;
  return model;
}

std::vector<ConditionalComponent> conditionalize(const GmmMarkovModel& model,
                                                 const std::vector<double>& history,
                                                 int next_quarter) {
  const int n_lags = model.lags;
  if (static_cast<int>(history.size()) != n_lags)
    throw std::invalid_argument("history length must equal the model's lag count");
  Eigen::VectorXd h(n_lags);
  for (int j = 0; j < n_lags; ++j) {
    if (!std::isfinite(history[j]))
      throw std::invalid_argument("non-finite value in history");
    // history[j] was observed at quarter next_quarter - (N - j).
    int q = next_quarter - (n_lags - j);
    q = ((q - 1) % 96 + 96) % 96 + 1;
    h[j] = history[j] - model.profile_at(q);
  }
  const double trend = model.profile_at(((next_quarter - 1) % 96 + 96) % 96 + 1);

  std::vector<ConditionalComponent> out;
  out.reserve(model.components.size());
  std::vector<double> logw(model.components.size());
  double mx = -std::numeric_limits<double>::max();
  for (std::size_t c = 0; c < model.components.size(); ++c) {
    const GmmComponent& g = model.components[c];
    const Eigen::VectorXd mu_h = g.mean.head(n_lags);
    const double mu_y = g.mean[n_lags];
    const Eigen::MatrixXd s_hh = g.cov.topLeftCorner(n_lags, n_lags);
    const Eigen::VectorXd s_hy = g.cov.topRightCorner(n_lags, 1);
    const double s_yy = g.cov(n_lags, n_lags);
    Eigen::LLT<Eigen::MatrixXd> llt(s_hh);
    const Eigen::VectorXd sol = llt.solve(h - mu_h);
    const double mean = mu_y + s_hy.dot(sol);
    const double var = std::max(s_yy - s_hy.dot(llt.solve(s_hy)), 0.0);
    logw[c] = std::log(g.weight) + log_gauss(h, mu_h, llt);
    mx = std::max(mx, logw[c]);
    out.push_back({0.0, mean + trend, std::sqrt(var)});
  }
  double total = 0.0;
  for (std::size_t c = 0; c < out.size(); ++c) {
    out[c].weight = std::exp(logw[c] - mx);
    total += out[c].weight;
  }
  for (auto& c : out) c.weight /= total;
  return out;
}

double sample_next(const GmmMarkovModel& model, const std::vector<double>& history,
                   int next_quarter, double w1, double w2) {
  const auto comps = conditionalize(model, history, next_quarter);
  double cum = 0.0;
  std::size_t pick = comps.size() - 1;
  for (std::size_t c = 0; c < comps.size(); ++c) {
    cum += comps[c].weight;
    if (w1 < cum) { pick = c; break; }
  }
  const double x = comps[pick].mean + w2 * comps[pick].stddev;
  return std::clamp(x, model.clamp_lo, model.clamp_hi);
}

std::vector<double> make_synthetic_corpus(CorpusKind kind, int days, std::uint64_t seed) {
  if (days < 1) throw std::invalid_argument("days must be >= 1");
  const int n = days * 96;
  std::vector<double> out(n);
  Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(kind) + 101);
  double z = 0.0;  // AR noise state
  for (int t = 0; t < n; ++t) {
    const int q = t % 96;
    const double hour = q / 4.0;
    switch (kind) {
      case CorpusKind::load: {
        const double morning = 0.35 * std::exp(-std::pow((hour - 7.5) / 1.6, 2));
        const double evening = 0.50 * std::exp(-std::pow((hour - 19.0) / 2.1, 2));
        const double base = 0.45 + morning + evening;
        z = 0.85 * z + 0.15 * rng.gauss();
        out[t] = -base * std::max(1.0 + 0.35 * z, 0.15);
        break;
      }
      case CorpusKind::wind: {
        z = 0.97 * z + 0.22 * rng.gauss();
        out[t] = std::max(7.0 + 9.0 * z, 0.0);
        break;
      }
      case CorpusKind::irradiance: {
        z = 0.92 * z + 0.25 * rng.gauss();
        const double clear =
            (hour >= 6.0 && hour <= 19.0)
                ? 900.0 * std::max(std::sin(M_PI * (hour - 6.0) / 13.0), 0.0)
                : 0.0;
        const double cloud = std::clamp(0.75 + 0.5 * z, 0.10, 1.0);
        out[t] = clear * cloud;
        break;
      }
    }
  }
  return out;
}

GmmMarkovModel fit_process_model(const std::vector<double>& series, int lags,
                                 int n_components, std::uint64_t seed,
                                 const FitProcessOptions& opt) {
  const int n = static_cast<int>(series.size());
  Eigen::VectorXd profile = Eigen::VectorXd::Zero(96);
  if (opt.detrend) {
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(96);
    for (int t = 0; t < n; ++t) {
      profile[t % 96] += series[t];
      counts[t % 96] += 1.0;
    }
    for (int q = 0; q < 96; ++q)
      if (counts[q] > 0) profile[q] /= counts[q];
  }
  const int dim = lags + 1;
  const int rows = n - lags;
  if (rows < 1) throw std::invalid_argument("series shorter than lag window");
  Eigen::MatrixXd windows(rows, dim);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < dim; ++j)
      windows(i, j) = series[i + j] - (opt.detrend ? profile[(i + j) % 96] : 0.0);

  GmmMarkovModel model = fit_em(windows, n_components, lags, seed, opt.em);
  if (opt.detrend) model.quarter_profile = profile;
  // Clamp bounds live in raw space: data min/max extended by 10%.
  double lo = series[0], hi = series[0];
  for (double x : series) { lo = std::min(lo, x); hi = std::max(hi, x); }
  const double ext = 0.1 * (hi - lo);
  model.clamp_lo = std::max(lo - ext, opt.hard_lo);
  model.clamp_hi = std::min(hi + ext, opt.hard_hi);
  return model;
}

}  // namespace anm
