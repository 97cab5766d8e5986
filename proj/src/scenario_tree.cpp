#include "anm/scenario_tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace anm {

namespace {

std::vector<double> potentials_for(const AnmSystem& sys, double irradiance,
                                   double wind_speed) {
  std::vector<double> p(sys.n_generators());
  for (int g = 0; g < sys.n_generators(); ++g)
    p[g] = sys.generator_potential(sys.devices[sys.generators[g]], irradiance, wind_speed);
  return p;
}

}  // namespace

std::vector<Trajectory> sample_trajectories(const AnmSystem& sys,
                                            const SystemState& state, int horizon,
                                            int count, Rng& rng) {
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  std::vector<Trajectory> out(count);
  for (int k = 0; k < count; ++k) {
    Rng stream = rng.split(k);
    SystemState s = state;
    Trajectory& tr = out[k];
    tr.exo.reserve(horizon);
    for (int t = 0; t < horizon; ++t) {
      const ExogenousValues v = sample_exogenous(sys, s, draw_exogenous(sys, stream));
      apply_exogenous(sys, s, v);
      tr.gen_potential.push_back(potentials_for(sys, v.irradiance, v.wind_speed));
      tr.exo.push_back(v);
    }
  }
  return out;
}

Eigen::MatrixXd flatten_trajectories(const std::vector<Trajectory>& trajectories) {
  const int n = static_cast<int>(trajectories.size());
  const int horizon = trajectories.empty() ? 0 : trajectories[0].horizon();
  const int n_loads = horizon > 0 ? static_cast<int>(trajectories[0].exo[0].load_p.size()) : 0;
  const int stride = n_loads + 2;
  Eigen::MatrixXd pts(n, horizon * stride);
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < horizon; ++t) {
      const ExogenousValues& v = trajectories[i].exo[t];
      for (int j = 0; j < n_loads; ++j) pts(i, t * stride + j) = v.load_p[j];
      pts(i, t * stride + n_loads) = v.wind_speed;
      pts(i, t * stride + n_loads + 1) = v.irradiance;
    }
  }
  return pts;
}

WardResult ward_cluster(const Eigen::MatrixXd& points, int n_clusters, bool standardize) {
  const int n = static_cast<int>(points.rows());
  if (n_clusters < 1) throw std::invalid_argument("cluster count must be >= 1");
  if (n_clusters > n) throw std::invalid_argument("more clusters than points");

  Eigen::MatrixXd z = points;
  if (standardize) {
    for (int c = 0; c < z.cols(); ++c) {
      const double mean = z.col(c).mean();
      const double sd = std::sqrt((z.col(c).array() - mean).square().sum() / z.rows());
      z.col(c).array() -= mean;
      if (sd > 1e-12) z.col(c) /= sd;
    }
  }

  struct Cluster {
    std::vector<int> members;
    Eigen::VectorXd centroid;  // standardized space
    bool alive = true;
  };
  std::vector<Cluster> cl(n);
  for (int i = 0; i < n; ++i) {
    cl[i].members = {i};
    cl[i].centroid = z.row(i).transpose();
  }

  int alive = n;
  while (alive > n_clusters) {
    double best = std::numeric_limits<double>::max();
    int bi = -1, bj = -1;
    for (int i = 0; i < static_cast<int>(cl.size()); ++i) {
      if (!cl[i].alive) continue;
      for (int j = i + 1; j < static_cast<int>(cl.size()); ++j) {
        if (!cl[j].alive) continue;
        const double ni = cl[i].members.size(), nj = cl[j].members.size();
        const double d = ni * nj / (ni + nj) *
                         (cl[i].centroid - cl[j].centroid).squaredNorm();
        if (d < best) {
          best = d;
          bi = i;
          bj = j;
        }
      }
    }
    const double ni = cl[bi].members.size(), nj = cl[bj].members.size();
    cl[bi].centroid = (ni * cl[bi].centroid + nj * cl[bj].centroid) / (ni + nj);
    cl[bi].members.insert(cl[bi].members.end(), cl[bj].members.begin(),
                          cl[bj].members.end());
    cl[bj].alive = false;
    --alive;
  }

  WardResult res;
  res.centroids.resize(n_clusters, points.cols());
  int row = 0;
  for (const Cluster& c : cl) {
    if (!c.alive) continue;
    std::vector<int> m = c.members;
    std::sort(m.begin(), m.end());
    Eigen::VectorXd cen = Eigen::VectorXd::Zero(points.cols());
    for (int idx : m) cen += points.row(idx).transpose();
    res.centroids.row(row) = cen.transpose() / static_cast<double>(m.size());
    res.members.push_back(std::move(m));
    ++row;
  }
  return res;
}

ScenarioTree build_tree(const AnmSystem& sys, const WardResult& clusters,
                        int total_count, int horizon, double branch_tolerance) {
  if (clusters.members.empty()) throw std::invalid_argument("no clusters given");
  const int w = static_cast<int>(clusters.members.size());
  const int n_loads = sys.n_loads();
  const int stride = n_loads + 2;

  ScenarioTree tree;
  tree.scenarios.resize(w);
  for (int k = 0; k < w; ++k) {
    Scenario& sc = tree.scenarios[k];
    sc.member_count = static_cast<int>(clusters.members[k].size());
    sc.probability = static_cast<double>(sc.member_count) / total_count;
    sc.traj.exo.resize(horizon);
    sc.traj.gen_potential.resize(horizon);
    for (int t = 0; t < horizon; ++t) {
      ExogenousValues& v = sc.traj.exo[t];
      v.load_p.resize(n_loads);
      for (int j = 0; j < n_loads; ++j) v.load_p[j] = clusters.centroids(k, t * stride + j);
      v.wind_speed = clusters.centroids(k, t * stride + n_loads);
      v.irradiance = clusters.centroids(k, t * stride + n_loads + 1);
      sc.traj.gen_potential[t] = potentials_for(sys, v.irradiance, v.wind_speed);
    }
  }

  // Shared-history partition per stage: prefix agreement of centroids.
  // Stage 0 is always the single root group; the partition is refined
  // stage by stage so nestedness holds by construction.
  tree.stage_groups.resize(horizon);
  std::vector<std::vector<int>> groups = {std::vector<int>(w)};
  for (int k = 0; k < w; ++k) groups[0][k] = k;
  for (int stage = 0; stage < horizon; ++stage) {
    if (stage > 0) {
      // Refine by agreement at stage-1 (the newest observed outcome).
      std::vector<std::vector<int>> refined;
      for (const auto& g : groups) {
        std::vector<bool> used(g.size(), false);
        for (std::size_t a = 0; a < g.size(); ++a) {
          if (used[a]) continue;
          std::vector<int> ng = {g[a]};
          used[a] = true;
          for (std::size_t b = a + 1; b < g.size(); ++b) {
            if (used[b]) continue;
            const auto diff = clusters.centroids.row(g[a]).segment(0, stage * stride) -
                              clusters.centroids.row(g[b]).segment(0, stage * stride);
            if (diff.cwiseAbs().maxCoeff() <= branch_tolerance) {
              ng.push_back(g[b]);
              used[b] = true;
            }
          }
          refined.push_back(std::move(ng));
        }
      }
      groups = std::move(refined);
    }
    tree.stage_groups[stage] = groups;
  }
  return tree;
}

ScenarioTree reduce_to_tree(const AnmSystem& sys, const SystemState& state,
                            int horizon, int sample_count, int n_scenarios, Rng& rng,
                            double branch_tolerance) {
  const auto trajs = sample_trajectories(sys, state, horizon, sample_count, rng);
  const auto clusters = ward_cluster(flatten_trajectories(trajs), n_scenarios);
  return build_tree(sys, clusters, sample_count, horizon, branch_tolerance);
}

ScenarioTree tree_from_path(const AnmSystem& sys,
                            const std::vector<ExogenousValues>& path, int horizon) {
  if (static_cast<int>(path.size()) < horizon)
    throw std::invalid_argument("path shorter than requested horizon");
  ScenarioTree tree;
  Scenario sc;
  sc.probability = 1.0;
  sc.member_count = 1;
  sc.traj.exo.assign(path.begin(), path.begin() + horizon);
  sc.traj.gen_potential.resize(horizon);
  for (int t = 0; t < horizon; ++t)
    sc.traj.gen_potential[t] =
        potentials_for(sys, sc.traj.exo[t].irradiance, sc.traj.exo[t].wind_speed);
  tree.scenarios.push_back(std::move(sc));
  tree.stage_groups.assign(horizon, {{0}});
  return tree;
}

}  // namespace anm
