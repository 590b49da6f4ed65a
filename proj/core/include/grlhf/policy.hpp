#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "grlhf/checkpoint.hpp"
#include "grlhf/envs.hpp"
#include "grlhf/mlp.hpp"

namespace grlhf {

struct PolicyConfig {
  std::vector<std::size_t> hidden_layers{64, 64};
  double gamma = 0.99;
  double gae_lambda = 0.95;
  std::size_t steps_per_round = 20000;
  double clip_ratio = 0.2;
  double value_coeff = 0.5;
  double entropy_coeff = 0.01;
  double learning_rate = 3e-4;
  std::size_t update_epochs = 10;
  std::size_t minibatch_size = 256;
  double max_grad_norm = 0.5;
  bool normalize_rewards = true;
  std::uint64_t seed = 0;

  void validate(const EnvSpec& spec) const;
};

nlohmann::json to_json(const PolicyConfig& c);
PolicyConfig policy_config_from_json(const nlohmann::json& j);

inline constexpr double kMinLogStd = -5.0;
inline constexpr double kMaxLogStd = 2.0;

/// Running mean and variance (Welford) used to standardize predicted rewards.
struct RunningStat {
  double count = 0.0;
  double mean = 0.0;
  double m2 = 0.0;

  void update(const Eigen::VectorXd& x);
  double stddev() const;
  friend bool operator==(const RunningStat&, const RunningStat&) = default;
};

struct Policy {
  EnvSpec spec;
  Mlp actor;                // obs -> logits (discrete) or mean (continuous)
  Eigen::VectorXd log_std;  // continuous only
  Mlp critic;               // obs -> value
  Adam optimizer;           // over [actor, log_std, critic]
  RunningStat reward_stat;
  std::uint64_t updates = 0;
  std::uint64_t seed = 0;

  std::size_t parameter_count() const;
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& flat);

  /// Action probabilities (discrete) for one observation.
  Eigen::VectorXd probabilities(std::span<const double> observation) const;
  Action sample(std::span<const double> observation, Rng& rng) const;
  Action greedy(std::span<const double> observation) const;
  double value(std::span<const double> observation) const;

  friend bool operator==(const Policy& a, const Policy& b);
};

Policy init_policy(const EnvSpec& spec, const PolicyConfig& config, std::uint64_t seed);

/// Reward signal for training: one value per row of concat(observation, action encoding).
using StepRewardFn = std::function<Eigen::VectorXd(const Eigen::MatrixXd& inputs)>;

struct PolicyTrainStats {
  std::size_t steps = 0;
  std::size_t episodes = 0;
  double mean_predicted_reward = 0.0;
  double mean_entropy = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
};

using PolicyProgressFn = std::function<void(double fraction)>;

/// One round of clipped-surrogate updates on `steps_per_round` fresh environment
/// steps. Rewards come only from `reward_fn`. Throws TrainingError on NaN.
PolicyTrainStats train_policy(Policy& policy, const StepRewardFn& reward_fn, const PolicyConfig& config,
                              const PolicyProgressFn& progress = {});

struct EvalResult {
  double mean = 0.0;
  double stddev = 0.0;  // population std over episodes
  std::vector<double> returns;
};

enum class EvalMode {
  Sampled,  // actions drawn from the policy distribution
  Greedy,   // most likely action / distribution mean
};

/// True-reward evaluation; deterministic given the seed.
EvalResult evaluate_policy(const Policy& policy, std::size_t episodes, std::uint64_t seed,
                           EvalMode mode = EvalMode::Sampled);

/// Stochastic behavior policy used to collect trajectories for feedback.
RolloutPolicy as_rollout_policy(const Policy& policy);

Checkpoint to_checkpoint(const Policy& policy);
Policy policy_from_checkpoint(const EnvSpec& spec, const Checkpoint& checkpoint);

}  // namespace grlhf
