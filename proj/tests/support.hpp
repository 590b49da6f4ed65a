#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "grlhf/dendrogram.hpp"
#include "grlhf/envs.hpp"
#include "grlhf/random.hpp"
#include "grlhf/reward_ensemble.hpp"
#include "grlhf/session.hpp"

namespace grlhf::fixtures {

/// Behavior with random states/actions of the given widths.
inline Behavior random_behavior(BehaviorId id, std::size_t len, std::size_t obs_dim, std::size_t action_dim, Rng& rng,
                                double true_return = 0.0) {
  std::normal_distribution<double> n(0.0, 1.0);
  Behavior b;
  b.id = id;
  b.states.resize(static_cast<Eigen::Index>(len), static_cast<Eigen::Index>(obs_dim));
  b.actions.resize(static_cast<Eigen::Index>(len), static_cast<Eigen::Index>(action_dim));
  for (Eigen::Index i = 0; i < b.states.size(); ++i) b.states.data()[i] = n(rng);
  for (Eigen::Index i = 0; i < b.actions.size(); ++i) b.actions.data()[i] = n(rng);
  b.true_return = true_return;
  return b;
}

inline std::vector<Behavior> random_behaviors(std::size_t count, std::size_t len, std::size_t obs_dim,
                                              std::size_t action_dim, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> r(-5.0, 5.0);
  std::vector<Behavior> out;
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(random_behavior(static_cast<BehaviorId>(i), len, obs_dim, action_dim, rng, r(rng)));
  return out;
}

inline RewardNetConfig small_reward_config(std::size_t input_dim, std::uint64_t seed) {
  RewardNetConfig c;
  c.input_dim = input_dim;
  c.hidden_layers = {6, 5};
  c.ensemble_size = 3;
  c.seed = seed;
  return c;
}

/// Dendrogram from a random symmetric distance matrix.
inline Dendrogram random_dendrogram(std::size_t n, std::uint64_t seed, std::vector<BehaviorId> ids = {}) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.1, 10.0);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    for (Eigen::Index j = i + 1; j < d.cols(); ++j) d(i, j) = d(j, i) = u(rng);
  return agglomerative_cluster(DistanceMatrix(d), ids);
}

/// Session small enough for unit tests: tiny nets, few steps, short rounds.
inline SessionConfig tiny_session_config(EnvSpec env = EnvSpec::grid_world(), std::uint64_t seed = 0) {
  SessionConfig c;
  c.env = std::move(env);
  c.behaviors_per_round = 24;
  c.rounds = 2;
  c.reward.hidden_layers = {8};
  c.reward.epochs_per_round = 5;
  c.policy.hidden_layers = {8};
  c.policy.steps_per_round = 256;
  c.policy.minibatch_size = 64;
  c.policy.update_epochs = 1;
  c.eval_episodes = 2;
  c.seed = seed;
  return c;
}

/// Six leaves (ids 10..15) in three clear pairs; the layout golden file uses it.
inline Dendrogram golden_tree() {
  Eigen::MatrixXd d(6, 6);
  d << 0, 1, 6, 7, 9, 9.5,  //
      1, 0, 6.5, 7.5, 9, 9, //
      6, 6.5, 0, 2, 8, 8.5, //
      7, 7.5, 2, 0, 8, 8,   //
      9, 9, 8, 8, 0, 3,     //
      9.5, 9, 8.5, 8, 3, 0;
  const std::vector<BehaviorId> ids{10, 11, 12, 13, 14, 15};
  return agglomerative_cluster(DistanceMatrix(d), ids);
}

/// Queries over ids 0..behaviors-1 cycling through the three outcomes.
inline std::vector<PreferenceQuery> random_queries(std::size_t count, std::size_t behaviors, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<BehaviorId> pick(0, static_cast<BehaviorId>(behaviors) - 1);
  std::vector<PreferenceQuery> qs;
  while (qs.size() < count) {
    const BehaviorId a = pick(rng), b = pick(rng);
    if (a == b) continue;
    qs.push_back({a, b, static_cast<Outcome>(qs.size() % 3), "c"});
  }
  return qs;
}

}  // namespace grlhf::fixtures
