#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "grlhf/dendrogram.hpp"
#include "grlhf/envs.hpp"
#include "grlhf/preference_query.hpp"
#include "grlhf/reward_ensemble.hpp"

namespace grlhf {

enum class Verdict { G1Preferred, G2Preferred, Tie, Skip };
enum class Origin { Human, SuggestionAccepted, Dm };

std::string_view to_string(Verdict v);
Verdict verdict_from_string(std::string_view s);
std::string_view to_string(Origin o);
Origin origin_from_string(std::string_view s);

struct GroupComparison {
  std::string id;
  std::vector<BehaviorId> group_1;
  std::vector<BehaviorId> group_2;
  Verdict verdict = Verdict::Skip;
  Origin origin = Origin::Human;
  std::size_t round_index = 0;
  std::int64_t ts = 0;  // unix milliseconds; informational only

  friend bool operator==(const GroupComparison&, const GroupComparison&) = default;
};

nlohmann::json to_json(const GroupComparison& c);
GroupComparison group_comparison_from_json(const nlohmann::json& j);

/// Throws UsageError unless both groups are nonempty, duplicate-free and disjoint.
void validate_groups(std::span<const BehaviorId> g1, std::span<const BehaviorId> g2);

enum class LabelMode {
  MaxPairs,   // max(m, n) pairs covering both groups
  Cartesian,  // all m * n pairs
};

/// Expands a group verdict into pairwise queries. tau_i always comes from group_1.
std::vector<PreferenceQuery> generate_labels(const GroupComparison& comparison, std::uint64_t seed,
                                             LabelMode mode = LabelMode::MaxPairs);

/// Unordered pair of behavior ids, smaller first.
using BehaviorPair = std::pair<BehaviorId, BehaviorId>;
BehaviorPair make_pair_key(BehaviorId a, BehaviorId b);

/// Unordered pair of sorted leaf sets.
using GroupPairKey = std::pair<std::vector<BehaviorId>, std::vector<BehaviorId>>;
GroupPairKey make_group_key(std::span<const BehaviorId> g1, std::span<const BehaviorId> g2);

struct StoreOptions {
  LabelMode label_mode = LabelMode::MaxPairs;
  std::optional<std::size_t> preference_budget;  // truncate label generation beyond this many queries
  std::uint64_t seed = 0;
};

/// Append-only comparison history and the queries derived from it.
class PreferenceStore {
 public:
  explicit PreferenceStore(StoreOptions options = {}) : options_(options) {}

  /// Records the comparison (assigning an id if empty) and returns the queries it produced.
  std::vector<PreferenceQuery> record(GroupComparison comparison);

  std::vector<GroupComparison> history(std::optional<std::size_t> round = std::nullopt) const;
  const std::vector<GroupComparison>& comparisons() const { return comparisons_; }
  const std::vector<PreferenceQuery>& queries() const { return queries_; }
  const StoreOptions& options() const { return options_; }
  bool contains(std::string_view id) const;
  bool budget_exhausted() const;

  bool compared_pair(BehaviorId a, BehaviorId b) const { return compared_pairs_.contains(make_pair_key(a, b)); }
  bool compared_groups(std::span<const BehaviorId> g1, std::span<const BehaviorId> g2) const {
    return compared_groups_.contains(make_group_key(g1, g2));
  }
  const std::set<BehaviorPair>& compared_pairs() const { return compared_pairs_; }
  const std::set<GroupPairKey>& compared_group_keys() const { return compared_groups_; }

  /// Line-delimited JSON log, one comparison per line.
  std::string to_jsonl() const;
  /// Replays a log; queries are regenerated deterministically.
  static PreferenceStore from_jsonl(std::string_view text, StoreOptions options);
  /// CSV with header tau_i,tau_j,outcome,source_comparison.
  std::string queries_csv() const;

 private:
  StoreOptions options_;
  std::vector<GroupComparison> comparisons_;
  std::vector<PreferenceQuery> queries_;
  std::set<std::string, std::less<>> ids_;
  std::set<BehaviorPair> compared_pairs_;
  std::set<GroupPairKey> compared_groups_;
};

/// Highest-disagreement pair not yet compared; ties go to the lowest id pair.
/// Throws ExhaustedError when every pair has been compared.
BehaviorPair suggest_pair(const DisagreementTable& table, const std::set<BehaviorPair>& compared);
BehaviorPair suggest_pair(const Ensemble& ensemble, std::span<const Behavior> behaviors,
                          const std::set<BehaviorPair>& compared);

enum class IntraMode {
  MeanOfGroups,  // average of the two groups' mean within-group disagreement
  Pooled,        // mean over all within-group pairs of both groups
};

inline constexpr double kGroupScoreEpsilon = 1e-8;

struct GroupScoreParts {
  double v_inter = 0.0;
  double v_intra = 0.0;
  double ratio = 1.0;
  double score = 0.0;
};

GroupScoreParts group_score_parts(const DisagreementTable& table, std::span<const BehaviorId> g1,
                                  std::span<const BehaviorId> g2, IntraMode mode = IntraMode::MeanOfGroups);
double group_score(const DisagreementTable& table, std::span<const BehaviorId> g1, std::span<const BehaviorId> g2,
                   IntraMode mode = IntraMode::MeanOfGroups);
double group_score(const Ensemble& ensemble, std::span<const Behavior> g1, std::span<const Behavior> g2,
                   IntraMode mode = IntraMode::MeanOfGroups, DisagreementMode disagreement = DisagreementMode::BtProbability);

struct GroupSuggestOptions {
  std::size_t max_group_size = 8;
  /// Pairs of two single behaviors have zero within-group disagreement, so their
  /// score is v_inter / epsilon and would crowd out every real group. They are
  /// only offered when no other disjoint pair is left.
  bool singleton_pairs_last = true;
  std::size_t max_candidate_pairs = 20000;
  IntraMode intra_mode = IntraMode::MeanOfGroups;
  std::uint64_t seed = 0;
};

struct GroupSuggestion {
  NodeId node_1 = -1;
  NodeId node_2 = -1;
  double score = 0.0;
  std::vector<BehaviorId> leaves_1;
  std::vector<BehaviorId> leaves_2;
};

/// Argmax of the group score over disjoint, previously uncompared pairs of
/// dendrogram nodes within the size cap. Ties go to the lowest (node_1, node_2).
GroupSuggestion suggest_groups(const DisagreementTable& table, const Dendrogram& dendrogram,
                               const std::set<GroupPairKey>& compared, const GroupSuggestOptions& options = {});

/// Nodes with 1..max_size leaves, in node id order.
std::vector<NodeId> candidate_nodes(const Dendrogram& dendrogram, std::size_t max_size, std::size_t min_size = 1);

}  // namespace grlhf
