#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "grlhf/dendrogram.hpp"
#include "grlhf/envs.hpp"
#include "grlhf/layout.hpp"
#include "grlhf/policy.hpp"
#include "grlhf/preferences.hpp"
#include "grlhf/reward_ensemble.hpp"

namespace grlhf {

struct SessionConfig {
  EnvSpec env = EnvSpec::grid_world();
  std::size_t behaviors_per_round = 150;
  std::size_t segment_len = 0;  // 0 selects the environment default
  std::size_t rounds = 7;
  RewardNetConfig reward;  // input_dim 0 is filled from the environment
  PolicyConfig policy;
  std::size_t eval_episodes = 10;
  std::size_t min_trajectories = 0;   // 0 selects behaviors_per_round / 5 (at least 10)
  std::size_t max_trajectories = 2000;
  std::optional<std::size_t> preference_budget;
  LabelMode label_mode = LabelMode::MaxPairs;
  GroupSuggestOptions suggest;
  std::optional<std::size_t> dtw_band;
  std::size_t threads = 1;
  std::uint64_t seed = 0;

  std::size_t effective_segment_len() const { return segment_len == 0 ? env.default_segment_len : segment_len; }
  /// Fills derived defaults and throws UsageError on invalid values.
  SessionConfig resolved() const;
};

nlohmann::json to_json(const SessionConfig& c);
SessionConfig session_config_from_json(const nlohmann::json& j);

enum class Phase { CollectingFeedback, Training, Idle, Finished };
std::string_view to_string(Phase p);
Phase phase_from_string(std::string_view s);

struct RoundMetrics {
  std::size_t round_index = 0;
  double eval_mean = 0.0;
  double eval_std = 0.0;
  std::size_t comparisons = 0;        // recorded during this round, skips included
  std::size_t total_comparisons = 0;
  std::size_t total_queries = 0;
  bool reward_retrained = false;
  bool policy_trained = false;
  std::size_t trajectories = 0;       // collected for the next round's behaviors

  friend bool operator==(const RoundMetrics&, const RoundMetrics&) = default;
};

nlohmann::json to_json(const RoundMetrics& m);
RoundMetrics round_metrics_from_json(const nlohmann::json& j);

/// Stage label and overall fraction in [0, 1].
using SessionProgressFn = std::function<void(std::string_view stage, double fraction)>;

/// Round-based feedback session. Copyable so callers can train on a copy and
/// publish it when done.
class Session {
 public:
  static Session start(const SessionConfig& config);

  const SessionConfig& config() const { return config_; }
  Phase phase() const { return phase_; }
  std::size_t round_index() const { return round_; }
  const std::vector<Behavior>& behaviors() const { return rounds_.back(); }
  const std::vector<std::vector<Behavior>>& all_behaviors() const { return rounds_; }
  const Behavior* find_behavior(BehaviorId id) const;
  bool in_current_round(BehaviorId id) const;
  const Dendrogram& dendrogram() const { return dendrograms_.back(); }
  const std::vector<Dendrogram>& all_dendrograms() const { return dendrograms_; }
  const Ensemble& ensemble() const { return ensemble_; }
  bool ensemble_trained() const { return ensemble_trained_; }
  const Policy& policy() const { return policy_; }
  const PreferenceStore& store() const { return store_; }
  const std::vector<RoundMetrics>& metrics() const { return metrics_; }
  const DisagreementTable& disagreement() const { return *table_; }

  /// Validates ids against the current round and records the comparison.
  /// Returns the generated queries.
  std::vector<PreferenceQuery> submit_comparison(GroupComparison comparison);

  BehaviorPair suggest_pair() const;
  GroupSuggestion suggest_groups() const;

  /// Retrains on all queries, trains the policy, evaluates, then samples and
  /// clusters the next round (or finishes). On failure the session is unchanged.
  void advance_round(const SessionProgressFn& progress = {});

  /// History edges for the current round's comparisons.
  std::vector<HistoryEdge> history_edges() const;
  LayoutScene scene(std::span<const std::pair<BehaviorId, BehaviorId>> suggestions, const LayoutParams& params = {}) const;

  void snapshot(const std::filesystem::path& dir) const;
  static Session resume(const std::filesystem::path& dir);

 private:
  Session() = default;
  void sample_round(const Policy& behavior_policy, std::size_t round, std::size_t* trajectories);
  void refresh_table();

  SessionConfig config_;
  Phase phase_ = Phase::CollectingFeedback;
  std::size_t round_ = 0;
  std::vector<std::vector<Behavior>> rounds_;
  std::vector<Dendrogram> dendrograms_;
  Ensemble ensemble_;
  bool ensemble_trained_ = false;
  std::size_t trained_queries_ = 0;  // query count the ensemble was last fitted on
  Policy policy_;
  PreferenceStore store_;
  std::vector<RoundMetrics> metrics_;
  std::optional<DisagreementTable> table_;
};

}  // namespace grlhf
