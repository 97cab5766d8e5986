#pragma once

#include <Eigen/Dense>
#include <vector>

#include "anm/mdp.hpp"

namespace anm {

// One exogenous rollout over the lookahead horizon, with the induced
// generator potentials.
struct Trajectory {
  std::vector<ExogenousValues> exo;                 // per stage 0..T-1
  std::vector<std::vector<double>> gen_potential;   // [stage][generator], MW

  int horizon() const { return static_cast<int>(exo.size()); }
};

struct Scenario {
  double probability = 1.0;
  int member_count = 0;
  Trajectory traj;
};

struct ScenarioTree {
  std::vector<Scenario> scenarios;
  // stage_groups[sigma]: partition of scenario indices whose actions at
  // stage sigma are shared (identical observed history before stage sigma).
  // stage_groups[0] is always the single root group. Partitions are nested:
  // each stage refines the previous one.
  std::vector<std::vector<std::vector<int>>> stage_groups;

  int n_scenarios() const { return static_cast<int>(scenarios.size()); }
  int horizon() const { return scenarios.empty() ? 0 : scenarios[0].traj.horizon(); }
};

std::vector<Trajectory> sample_trajectories(const AnmSystem& sys,
                                            const SystemState& state, int horizon,
                                            int count, Rng& rng);

struct WardResult {
  std::vector<std::vector<int>> members;  // per cluster, point indices
  Eigen::MatrixXd centroids;              // per cluster, mean of members (raw space)
};

// Agglomerative clustering with Ward's minimum-variance linkage. Distances
// are computed on per-feature standardized points; centroids are returned
// in the original space. Deterministic merge order (lowest pair wins ties).
WardResult ward_cluster(const Eigen::MatrixXd& points, int n_clusters,
                        bool standardize = true);

// Rows are trajectories flattened as [stage0 loads..., wind, ir, stage1 ...].
Eigen::MatrixXd flatten_trajectories(const std::vector<Trajectory>& trajectories);

// P_k = |cluster_k| / total_count; shared-history groups by prefix agreement
// of centroids within branch_tolerance. Generator potentials of the scenario
// trajectories are recomputed from the centroid drivers.
ScenarioTree build_tree(const AnmSystem& sys, const WardResult& clusters,
                        int total_count, int horizon, double branch_tolerance = 0.0);

// sample -> cluster -> tree, the full reduction pipeline.
ScenarioTree reduce_to_tree(const AnmSystem& sys, const SystemState& state,
                            int horizon, int sample_count, int n_scenarios, Rng& rng,
                            double branch_tolerance = 0.0);

// Tree with the single supplied trajectory at probability 1 (perfect
// information mode).
ScenarioTree tree_from_path(const AnmSystem& sys,
                            const std::vector<ExogenousValues>& path, int horizon);

}  // namespace anm
