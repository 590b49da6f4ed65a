#include "grlhf/preferences.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "grlhf/error.hpp"
#include "grlhf/random.hpp"

namespace grlhf {
namespace {

constexpr std::uint64_t kLabelTag = 0x1abe1;
constexpr std::uint64_t kTruncateTag = 0x7a7c;
constexpr std::uint64_t kPruneTag = 0x9a1e;

std::vector<std::size_t> to_indices(const DisagreementTable& table, std::span<const BehaviorId> ids) {
  std::vector<std::size_t> out;
  out.reserve(ids.size());
  for (auto id : ids) out.push_back(table.index_of(id));
  return out;
}

// Sum and count of within-group pair disagreement.
std::pair<double, std::size_t> intra_sum(const DisagreementTable& table, std::span<const std::size_t> g) {
  double s = 0.0;
  for (std::size_t a = 0; a < g.size(); ++a)
    for (std::size_t b = a + 1; b < g.size(); ++b) s += table(g[a], g[b]);
  return {s, g.size() * (g.size() - 1) / 2};
}

double inter_mean(const DisagreementTable& table, std::span<const std::size_t> g1, std::span<const std::size_t> g2) {
  double s = 0.0;
  for (auto a : g1)
    for (auto b : g2) s += table(a, b);
  return s / static_cast<double>(g1.size() * g2.size());
}

double combine(double v_inter, double v_intra, std::size_t m, std::size_t n, GroupScoreParts* parts) {
  const double r = static_cast<double>(std::max(m, n)) / static_cast<double>(std::min(m, n));
  const double s = v_inter / (r * v_intra + kGroupScoreEpsilon);
  if (parts) *parts = {v_inter, v_intra, r, s};
  return s;
}

double intra_of(std::pair<double, std::size_t> a, std::pair<double, std::size_t> b, IntraMode mode) {
  if (mode == IntraMode::Pooled) {
    const std::size_t n = a.second + b.second;
    return n == 0 ? 0.0 : (a.first + b.first) / static_cast<double>(n);
  }
  const double ia = a.second == 0 ? 0.0 : a.first / static_cast<double>(a.second);
  const double ib = b.second == 0 ? 0.0 : b.first / static_cast<double>(b.second);
  return 0.5 * (ia + ib);
}

}  // namespace

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::G1Preferred: return "g1_preferred";
    case Verdict::G2Preferred: return "g2_preferred";
    case Verdict::Tie: return "tie";
    case Verdict::Skip: return "skip";
  }
  return "skip";
}

Verdict verdict_from_string(std::string_view s) {
  if (s == "g1_preferred") return Verdict::G1Preferred;
  if (s == "g2_preferred") return Verdict::G2Preferred;
  if (s == "tie") return Verdict::Tie;
  if (s == "skip") return Verdict::Skip;
  throw UsageError("unknown verdict: " + std::string(s));
}

std::string_view to_string(Origin o) {
  switch (o) {
    case Origin::Human: return "human";
    case Origin::SuggestionAccepted: return "suggestion_accepted";
    case Origin::Dm: return "dm";
  }
  return "human";
}

Origin origin_from_string(std::string_view s) {
  if (s == "human") return Origin::Human;
  if (s == "suggestion_accepted") return Origin::SuggestionAccepted;
  if (s == "dm") return Origin::Dm;
  throw UsageError("unknown origin: " + std::string(s));
}

nlohmann::json to_json(const GroupComparison& c) {
  return {{"id", c.id},
          {"round", c.round_index},
          {"g1", c.group_1},
          {"g2", c.group_2},
          {"verdict", to_string(c.verdict)},
          {"origin", to_string(c.origin)},
          {"ts", c.ts}};
}

GroupComparison group_comparison_from_json(const nlohmann::json& j) {
  GroupComparison c;
  c.id = j.value("id", std::string());
  c.round_index = j.value("round", std::size_t{0});
  c.group_1 = j.at("g1").get<std::vector<BehaviorId>>();
  c.group_2 = j.at("g2").get<std::vector<BehaviorId>>();
  c.verdict = verdict_from_string(j.at("verdict").get<std::string>());
  c.origin = origin_from_string(j.value("origin", std::string("human")));
  c.ts = j.value("ts", std::int64_t{0});
  return c;
}

void validate_groups(std::span<const BehaviorId> g1, std::span<const BehaviorId> g2) {
  if (g1.empty() || g2.empty()) throw UsageError("groups must be nonempty");
  std::unordered_set<BehaviorId> seen;
  for (auto id : g1) {
    if (!seen.insert(id).second) throw UsageError("duplicate behavior " + std::to_string(id) + " in group 1");
  }
  std::unordered_set<BehaviorId> second;
  for (auto id : g2) {
    if (seen.contains(id)) throw UsageError("groups overlap on behavior " + std::to_string(id));
    if (!second.insert(id).second) throw UsageError("duplicate behavior " + std::to_string(id) + " in group 2");
  }
}

std::vector<PreferenceQuery> generate_labels(const GroupComparison& c, std::uint64_t seed, LabelMode mode) {
  validate_groups(c.group_1, c.group_2);
  if (c.verdict == Verdict::Skip) return {};
  const Outcome outcome = c.verdict == Verdict::G1Preferred   ? Outcome::IPreferred
                          : c.verdict == Verdict::G2Preferred ? Outcome::JPreferred
                                                              : Outcome::Tie;
  std::vector<PreferenceQuery> out;
  if (mode == LabelMode::Cartesian) {
    for (auto a : c.group_1)
      for (auto b : c.group_2) out.push_back({a, b, outcome, c.id});
    return out;
  }
  const bool first_larger = c.group_1.size() >= c.group_2.size();
  std::vector<BehaviorId> larger = first_larger ? c.group_1 : c.group_2;
  const auto& smaller = first_larger ? c.group_2 : c.group_1;
  Rng rng(seed);
  std::shuffle(larger.begin(), larger.end(), rng);
  for (std::size_t t = 0; t < larger.size(); ++t) {
    const BehaviorId x = larger[t];
    const BehaviorId y = smaller[t % smaller.size()];
    out.push_back(first_larger ? PreferenceQuery{x, y, outcome, c.id} : PreferenceQuery{y, x, outcome, c.id});
  }
  return out;
}

BehaviorPair make_pair_key(BehaviorId a, BehaviorId b) { return a < b ? BehaviorPair{a, b} : BehaviorPair{b, a}; }

GroupPairKey make_group_key(std::span<const BehaviorId> g1, std::span<const BehaviorId> g2) {
  std::vector<BehaviorId> a(g1.begin(), g1.end()), b(g2.begin(), g2.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (b < a) std::swap(a, b);
  return {std::move(a), std::move(b)};
}

std::vector<PreferenceQuery> PreferenceStore::record(GroupComparison c) {
  validate_groups(c.group_1, c.group_2);
  const std::size_t index = comparisons_.size();
  if (c.id.empty()) c.id = "c" + std::to_string(index);
  if (ids_.contains(c.id)) throw UsageError("duplicate comparison id " + c.id);

  std::vector<PreferenceQuery> fresh = generate_labels(c, derive_seed(options_.seed, {kLabelTag, index}), options_.label_mode);
  if (options_.preference_budget) {
    const std::size_t left = *options_.preference_budget - std::min(*options_.preference_budget, queries_.size());
    if (fresh.size() > left) {
      Rng rng(derive_seed(options_.seed, {kTruncateTag, index}));
      std::shuffle(fresh.begin(), fresh.end(), rng);
      fresh.resize(left);
    }
  }
  ids_.insert(c.id);
  compared_groups_.insert(make_group_key(c.group_1, c.group_2));
  if (c.group_1.size() == 1 && c.group_2.size() == 1) compared_pairs_.insert(make_pair_key(c.group_1[0], c.group_2[0]));
  queries_.insert(queries_.end(), fresh.begin(), fresh.end());
  comparisons_.push_back(std::move(c));
  return fresh;
}

std::vector<GroupComparison> PreferenceStore::history(std::optional<std::size_t> round) const {
  if (!round) return comparisons_;
  std::vector<GroupComparison> out;
  std::copy_if(comparisons_.begin(), comparisons_.end(), std::back_inserter(out),
               [&](const GroupComparison& c) { return c.round_index == *round; });
  return out;
}

bool PreferenceStore::contains(std::string_view id) const { return ids_.find(id) != ids_.end(); }

bool PreferenceStore::budget_exhausted() const {
  return options_.preference_budget && queries_.size() >= *options_.preference_budget;
}

std::string PreferenceStore::to_jsonl() const {
  std::string out;
  for (const auto& c : comparisons_) {
    out += to_json(c).dump();
    out += '\n';
  }
  return out;
}

PreferenceStore PreferenceStore::from_jsonl(std::string_view text, StoreOptions options) {
  PreferenceStore store(options);
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      store.record(group_comparison_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw CorruptDataError("comparison log line " + std::to_string(line_no) + ": " + e.what());
    } catch (const UsageError& e) {
      throw CorruptDataError("comparison log line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return store;
}

std::string PreferenceStore::queries_csv() const {
  std::string out = "tau_i,tau_j,outcome,source_comparison\n";
  for (const auto& q : queries_) {
    out += std::to_string(q.tau_i) + ',' + std::to_string(q.tau_j) + ',' + std::string(to_string(q.outcome)) + ',' +
           q.source_comparison + '\n';
  }
  return out;
}

BehaviorPair suggest_pair(const DisagreementTable& table, const std::set<BehaviorPair>& compared) {
  if (table.size() < 2) throw UsageError("suggest_pair needs at least two behaviors");
  // Scan in ascending id order so strict '>' leaves ties at the lowest pair.
  std::vector<std::size_t> order(table.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return table.id(a) < table.id(b); });
  std::optional<BehaviorPair> best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t x = 0; x < order.size(); ++x) {
    for (std::size_t y = x + 1; y < order.size(); ++y) {
      const BehaviorPair key{table.id(order[x]), table.id(order[y])};
      if (compared.contains(key)) continue;
      const double s = table(order[x], order[y]);
      if (s > best_score) {
        best_score = s;
        best = key;
      }
    }
  }
  if (!best) throw ExhaustedError("every pair of behaviors has been compared");
  return *best;
}

BehaviorPair suggest_pair(const Ensemble& ensemble, std::span<const Behavior> behaviors,
                          const std::set<BehaviorPair>& compared) {
  return suggest_pair(DisagreementTable(ensemble, behaviors), compared);
}

GroupScoreParts group_score_parts(const DisagreementTable& table, std::span<const BehaviorId> g1,
                                  std::span<const BehaviorId> g2, IntraMode mode) {
  validate_groups(g1, g2);
  const auto a = to_indices(table, g1);
  const auto b = to_indices(table, g2);
  GroupScoreParts parts;
  combine(inter_mean(table, a, b), intra_of(intra_sum(table, a), intra_sum(table, b), mode), a.size(), b.size(), &parts);
  return parts;
}

double group_score(const DisagreementTable& table, std::span<const BehaviorId> g1, std::span<const BehaviorId> g2,
                   IntraMode mode) {
  return group_score_parts(table, g1, g2, mode).score;
}

double group_score(const Ensemble& ensemble, std::span<const Behavior> g1, std::span<const Behavior> g2, IntraMode mode,
                   DisagreementMode disagreement) {
  std::vector<Behavior> all(g1.begin(), g1.end());
  all.insert(all.end(), g2.begin(), g2.end());
  const DisagreementTable table(ensemble, all, disagreement);
  std::vector<BehaviorId> a, b;
  for (const auto& x : g1) a.push_back(x.id);
  for (const auto& x : g2) b.push_back(x.id);
  return group_score(table, a, b, mode);
}

std::vector<NodeId> candidate_nodes(const Dendrogram& dendrogram, std::size_t max_size, std::size_t min_size) {
  std::vector<NodeId> out;
  for (const auto& n : dendrogram.nodes()) {
    if (n.leaf_count >= min_size && n.leaf_count <= max_size) out.push_back(n.id);
  }
  return out;
}

GroupSuggestion suggest_groups(const DisagreementTable& table, const Dendrogram& dendrogram,
                               const std::set<GroupPairKey>& compared, const GroupSuggestOptions& options) {
  const auto candidates = candidate_nodes(dendrogram, options.max_group_size);
  struct Info {
    std::vector<BehaviorId> leaves;
    std::vector<std::size_t> idx;
    std::pair<double, std::size_t> intra;
  };
  std::vector<Info> info;
  for (auto id : candidates) {
    Info i;
    i.leaves = dendrogram.leaves_of(id);
    i.idx = to_indices(table, i.leaves);
    i.intra = intra_sum(table, i.idx);
    info.push_back(std::move(i));
  }
  auto disjoint = [&](std::size_t x, std::size_t y) {
    const auto& a = dendrogram.node(candidates[x]);
    const auto& b = dendrogram.node(candidates[y]);
    return a.span_end <= b.span_begin || b.span_end <= a.span_begin;
  };

  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs, singles;
  for (std::size_t x = 0; x < candidates.size(); ++x) {
    for (std::size_t y = x + 1; y < candidates.size(); ++y) {
      if (!disjoint(x, y) || compared.contains(make_group_key(info[x].leaves, info[y].leaves))) continue;
      const bool both_single = info[x].leaves.size() == 1 && info[y].leaves.size() == 1;
      (options.singleton_pairs_last && both_single ? singles : pairs)
          .emplace_back(static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y));
    }
  }
  if (pairs.empty()) pairs = std::move(singles);
  if (pairs.empty()) throw ExhaustedError("no uncompared disjoint pair of groups is left");
  if (pairs.size() > options.max_candidate_pairs) {
    Rng rng(derive_seed(options.seed, {kPruneTag, pairs.size()}));
    for (std::size_t i = 0; i < options.max_candidate_pairs; ++i) {
      std::uniform_int_distribution<std::size_t> u(i, pairs.size() - 1);
      std::swap(pairs[i], pairs[u(rng)]);
    }
    pairs.resize(options.max_candidate_pairs);
    std::sort(pairs.begin(), pairs.end());
  }

  GroupSuggestion best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (auto [x, y] : pairs) {
    const double s = combine(inter_mean(table, info[x].idx, info[y].idx),
                             intra_of(info[x].intra, info[y].intra, options.intra_mode), info[x].idx.size(),
                             info[y].idx.size(), nullptr);
    if (s > best_score) {  // pairs are in ascending (node_1, node_2) order
      best_score = s;
      best.node_1 = candidates[x];
      best.node_2 = candidates[y];
    }
  }
  best.score = best_score;
  best.leaves_1 = dendrogram.leaves_of(best.node_1);
  best.leaves_2 = dendrogram.leaves_of(best.node_2);
  return best;
}

}  // namespace grlhf
