#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "grlhf/dendrogram.hpp"
#include "grlhf/envs.hpp"
#include "grlhf/preferences.hpp"
#include "grlhf/random.hpp"
#include "grlhf/session.hpp"

namespace grlhf {

enum class DmKind { Pairwise, Groupwise, Interactive };
std::string_view to_string(DmKind k);
DmKind dm_kind_from_string(std::string_view s);

struct DmConfig {
  DmKind kind = DmKind::Pairwise;
  std::optional<double> noise_std;  // absolute sigma; unset uses noise_fraction of the round's return range
  double noise_fraction = 0.1;
  std::optional<double> tie_band;   // unset uses sigma / 10
  double overlap_factor = 0.5;      // kappa
  std::size_t comparison_budget = 400;
  std::size_t rounds = 8;           // the budget is spread evenly over these rounds
  std::size_t strata = 5;
  std::size_t min_group_size = 2;   // interactive candidates
  double suggestion_mix = 0.0;      // interactive: share of selections taken from group suggestions
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const DmConfig& c);
DmConfig dm_config_from_json(const nlohmann::json& j);

enum class DmOutcome { First, Second, Tie, Skip };
std::string_view to_string(DmOutcome o);

struct DmVerdict {
  DmOutcome outcome = DmOutcome::Skip;
  double perceived_1 = 0.0;  // perceived return (pairs) or perceived group mean
  double perceived_2 = 0.0;
};

/// true_return + eps, eps ~ Normal(0, sigma^2).
double perceive(double true_return, double sigma, Rng& rng);

DmVerdict decide_pair(double return_a, double return_b, double sigma, double tie_band, Rng& rng);
DmVerdict decide_pair(const Behavior& a, const Behavior& b, double sigma, double tie_band, Rng& rng);

/// Larger perceived mean wins; skips when the gap is below kappa times the
/// pooled within-group standard deviation of the perceived values.
DmVerdict decide_groups(std::span<const double> returns_1, std::span<const double> returns_2, double sigma,
                        double overlap_factor, Rng& rng);

/// True when a non-skip, non-tie decision prefers the side with the strictly
/// lower true (mean) return.
bool is_decision_error(DmOutcome outcome, double true_1, double true_2);

Verdict to_verdict(DmOutcome o);

/// Noise level for one round: the configured sigma, or noise_fraction of the
/// range of the round's true returns.
double round_noise_std(const DmConfig& config, std::span<const Behavior> behaviors);

struct InteractiveState {
  std::size_t cursor = 0;  // anchor stratum counter, carried across rounds
  BehaviorId round_key = -1;                  // first behavior id of the round the counts belong to
  std::unordered_map<NodeId, std::size_t> uses;  // selections per node this round
};

struct NodePair {
  NodeId node_1 = -1;
  NodeId node_2 = -1;
  std::vector<BehaviorId> leaves_1;
  std::vector<BehaviorId> leaves_2;
  std::size_t anchor_stratum = 0;
};

/// Candidate nodes ranked by mean true return and split into quantile strata.
/// Each call anchors the next stratum in turn and pairs it with an adjacent
/// stratum (even cycles) or the opposite end of the range (odd cycles). Within a
/// stratum the nodes selected least often this round come first.
NodePair interactive_select(std::span<const Behavior> behaviors, const Dendrogram& dendrogram,
                            const std::set<GroupPairKey>& compared, InteractiveState& state, const DmConfig& config,
                            Rng& rng);

struct DmRunResult {
  DmKind kind = DmKind::Pairwise;
  std::vector<RoundMetrics> rounds;
  double final_return = 0.0;
  std::size_t comparisons = 0;  // attempted, skips included
  std::size_t skips = 0;
  std::size_t preferences = 0;
  std::size_t decisions = 0;  // non-skip
  std::size_t decision_errors = 0;
  std::vector<double> noise_std;  // per round
};

nlohmann::json to_json(const DmRunResult& r);

using DmProgressFn = std::function<void(std::size_t round, std::string_view stage, double fraction)>;

/// Full feedback loop with a simulated decision-maker as the only feedback source.
DmRunResult run_dm_session(const SessionConfig& session_config, const DmConfig& dm_config,
                           const DmProgressFn& progress = {});

struct ErrorRateStudy {
  std::size_t trials = 10000;
  std::size_t group_size = 4;
  double sigma = 1.0;
  double separation = 1.0;  // difference of the two groups' true means
  double spread = 0.5;      // std of true returns within a group
  double overlap_factor = 0.5;
  double tie_band = 0.0;
  std::uint64_t seed = 0;
};

struct ErrorRateEstimate {
  double pair_error_rate = 0.0;
  double pair_standard_error = 0.0;
  std::size_t pair_decisions = 0;
  double group_error_rate = 0.0;
  double group_standard_error = 0.0;
  std::size_t group_decisions = 0;
  double group_skip_rate = 0.0;
};

/// Monte-Carlo error rates of pair decisions (one member of each group) and
/// group decisions on the same draws.
ErrorRateEstimate estimate_error_rates(const ErrorRateStudy& study);

}  // namespace grlhf
