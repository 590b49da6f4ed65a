#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "grlhf/checkpoint.hpp"
#include "grlhf/envs.hpp"
#include "grlhf/mlp.hpp"
#include "grlhf/preference_query.hpp"

namespace grlhf {

/// How suggestion disagreement is measured across ensemble members.
enum class DisagreementMode {
  BtProbability,     // variance of P(a > b)
  ReturnDifference,  // variance of R(a) - R(b)
};

struct RewardNetConfig {
  std::vector<std::size_t> hidden_layers{64, 64};
  std::size_t ensemble_size = 3;
  std::size_t input_dim = 0;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  std::size_t epochs_per_round = 50;
  std::size_t batch_size = 16;
  double holdout_fraction = 0.1;
  std::size_t min_queries_for_holdout = 10;
  std::size_t patience = 10;  // epochs without holdout improvement before stopping
  std::uint64_t seed = 0;
  DisagreementMode disagreement = DisagreementMode::BtProbability;

  void validate() const;
};

nlohmann::json to_json(const RewardNetConfig& c);
RewardNetConfig reward_config_from_json(const nlohmann::json& j);

/// Per-step reward network; a behavior's predicted return is the sum of the
/// network over its steps.
struct RewardNet {
  Mlp net;
  std::uint64_t member_seed = 0;

  std::size_t input_dim() const { return net.input_dim(); }
  /// One reward per row of `inputs` (rows are concat(state, action)).
  Eigen::VectorXd step_rewards(const Eigen::MatrixXd& inputs) const;
  double step_reward(std::span<const double> input) const;

  friend bool operator==(const RewardNet&, const RewardNet&) = default;
};

struct Ensemble {
  std::vector<RewardNet> members;

  std::size_t size() const { return members.size(); }
  friend bool operator==(const Ensemble&, const Ensemble&) = default;
};

/// Resolves behavior ids referenced by queries. Holds pointers; the indexed
/// behaviors must outlive it.
class BehaviorIndex {
 public:
  BehaviorIndex() = default;
  explicit BehaviorIndex(std::span<const Behavior> behaviors) { add(behaviors); }
  void add(std::span<const Behavior> behaviors);
  const Behavior& at(BehaviorId id) const;
  bool contains(BehaviorId id) const { return map_.contains(id); }
  std::size_t size() const { return map_.size(); }

 private:
  std::unordered_map<BehaviorId, const Behavior*> map_;
};

Ensemble init_ensemble(const RewardNetConfig& config);

double predict_return(const RewardNet& member, const Behavior& behavior);
/// P(a preferred over b) = exp(Ra) / (exp(Ra) + exp(Rb)), always in (0,1).
double bt_probability(const RewardNet& member, const Behavior& a, const Behavior& b);
/// Logistic function of a return difference, clamped into the open interval.
double bt_probability_from_difference(double return_difference);

/// Mean cross-entropy against targets 1 / 0 / 0.5.
double bt_loss(const RewardNet& member, std::span<const PreferenceQuery> queries, const BehaviorIndex& behaviors);

struct LossAndGradient {
  double loss = 0.0;
  Eigen::VectorXd gradient;  // flat parameter layout of Mlp
};
LossAndGradient bt_loss_gradient(const RewardNet& member, std::span<const PreferenceQuery> queries,
                                 const BehaviorIndex& behaviors);

struct TrainReport {
  std::vector<std::vector<double>> train_loss;    // per member, per epoch
  std::vector<std::vector<double>> holdout_loss;  // empty when no holdout
  std::vector<std::size_t> best_epoch;
};

using ProgressFn = std::function<void(double fraction)>;

/// Mini-batch gradient descent with momentum, independently per member, with
/// early stopping on a holdout split. Restores each member's best holdout
/// parameters. Throws TrainingError on a non-finite loss.
TrainReport train(Ensemble& ensemble, std::span<const PreferenceQuery> queries, const BehaviorIndex& behaviors,
                  const RewardNetConfig& config, const ProgressFn& progress = {});

/// Population variance across members of the pair's disagreement statistic.
double pair_disagreement(const Ensemble& ensemble, const Behavior& a, const Behavior& b,
                         DisagreementMode mode = DisagreementMode::BtProbability);

/// Mean over members of the per-step network output.
double mean_step_reward(const Ensemble& ensemble, std::span<const double> state, std::span<const double> action);
Eigen::VectorXd mean_step_rewards(const Ensemble& ensemble, const Eigen::MatrixXd& inputs);

/// Predicted returns of one round's behaviors cached for suggestion search.
class DisagreementTable {
 public:
  DisagreementTable(const Ensemble& ensemble, std::span<const Behavior> behaviors,
                    DisagreementMode mode = DisagreementMode::BtProbability);

  std::size_t size() const { return ids_.size(); }
  BehaviorId id(std::size_t i) const { return ids_[i]; }
  std::size_t index_of(BehaviorId id) const;
  bool contains(BehaviorId id) const { return index_.contains(id); }
  /// pair_disagreement of behaviors i and j.
  double operator()(std::size_t i, std::size_t j) const {
    return values_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  double by_id(BehaviorId a, BehaviorId b) const { return (*this)(index_of(a), index_of(b)); }
  const Eigen::MatrixXd& returns() const { return returns_; }  // behaviors x members

 private:
  std::vector<BehaviorId> ids_;
  std::unordered_map<BehaviorId, std::size_t> index_;
  Eigen::MatrixXd returns_;
  Eigen::MatrixXd values_;
};

Checkpoint to_checkpoint(const Ensemble& ensemble);
Ensemble ensemble_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace grlhf
