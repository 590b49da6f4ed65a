#include <map>
#include <set>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "grlhf/error.hpp"
#include "grlhf/preferences.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace grlhf;

namespace {

std::vector<BehaviorId> iota_ids(BehaviorId from, std::size_t n) {
  std::vector<BehaviorId> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = from + static_cast<BehaviorId>(i);
  return v;
}

// Dendrogram over DTW distances of the behaviors, ids preserved.
Dendrogram tree_of(const std::vector<Behavior>& bs) {
  std::vector<BehaviorId> ids;
  for (const auto& b : bs) ids.push_back(b.id);
  return agglomerative_cluster(distance_matrix(bs), ids);
}

}  // namespace

TEST(Preferences, LabelLawOverAllSmallShapes) {
  for (std::size_t m = 1; m <= 8; ++m) {
    for (std::size_t n = 1; n <= 8; ++n) {
      for (std::uint64_t seed = 0; seed < 100; ++seed) {
        GroupComparison c;
        c.id = "x";
        c.group_1 = iota_ids(0, m);
        c.group_2 = iota_ids(100, n);
        c.verdict = static_cast<Verdict>(seed % 3);
        const auto qs = generate_labels(c, seed);
        ASSERT_EQ(qs.size(), std::max(m, n));
        std::set<BehaviorId> seen1, seen2;
        for (const auto& q : qs) {
          ASSERT_LT(q.tau_i, 100);
          ASSERT_GE(q.tau_j, 100);
          seen1.insert(q.tau_i);
          seen2.insert(q.tau_j);
          EXPECT_EQ(q.source_comparison, "x");
          EXPECT_EQ(q.outcome, c.verdict == Verdict::G1Preferred   ? Outcome::IPreferred
                               : c.verdict == Verdict::G2Preferred ? Outcome::JPreferred
                                                                   : Outcome::Tie);
        }
        ASSERT_EQ(seen1.size(), m);
        ASSERT_EQ(seen2.size(), n);
      }
    }
  }
}

TEST(Preferences, SkipAndCartesianLabels) {
  GroupComparison c{"k", {1, 2, 3}, {4, 5}, Verdict::Skip, Origin::Human, 0, 0};
  EXPECT_TRUE(generate_labels(c, 1).empty());
  c.verdict = Verdict::G2Preferred;
  EXPECT_EQ(generate_labels(c, 1, LabelMode::Cartesian).size(), 6u);
  EXPECT_EQ(generate_labels(c, 9), generate_labels(c, 9));
  c.group_2 = {3, 4};
  EXPECT_THROW(generate_labels(c, 1), UsageError);
  c.group_2 = {};
  EXPECT_THROW(generate_labels(c, 1), UsageError);
  c.group_2 = {4, 4};
  EXPECT_THROW(generate_labels(c, 1), UsageError);
}

TEST(Preferences, GroupScoreMatchesBruteForce) {
  Rng rng(5);
  for (std::uint64_t f = 0; f < 40; ++f) {
    const auto e = init_ensemble(fixtures::small_reward_config(4, f));
    const auto bs = fixtures::random_behaviors(12, 5, 3, 1, f + 1000);
    std::vector<std::size_t> perm(bs.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const std::size_t m = 1 + f % 5, n = 1 + (f / 5) % 6;
    std::vector<const Behavior*> g1, g2;
    std::vector<BehaviorId> i1, i2;
    for (std::size_t k = 0; k < m; ++k) {
      g1.push_back(&bs[perm[k]]);
      i1.push_back(bs[perm[k]].id);
    }
    for (std::size_t k = 0; k < n; ++k) {
      g2.push_back(&bs[perm[m + k]]);
      i2.push_back(bs[perm[m + k]].id);
    }
    const DisagreementTable table(e, bs);
    const double want = oracle::group_score(e, g1, g2);
    EXPECT_LE(std::abs(group_score(table, i1, i2) - want), 1e-12 * std::abs(want));
  }
}

TEST(Preferences, GroupScorePartsFollowDefinition) {
  const auto e = init_ensemble(fixtures::small_reward_config(4, 3));
  const auto bs = fixtures::random_behaviors(8, 5, 3, 1, 3);
  const DisagreementTable t(e, bs);
  const std::vector<BehaviorId> g1{0, 1, 2, 3}, g2{4, 5};
  const auto p = group_score_parts(t, g1, g2);
  EXPECT_DOUBLE_EQ(p.ratio, 2.0);
  EXPECT_DOUBLE_EQ(p.score, p.v_inter / (p.ratio * p.v_intra + 1e-8));
  const std::vector<BehaviorId> s1{0}, s2{1};
  const auto single = group_score_parts(t, s1, s2);
  EXPECT_EQ(single.v_intra, 0.0);
  EXPECT_DOUBLE_EQ(single.score, t(0, 1) / 1e-8);
  // Pooled and per-group averaging agree when both groups have one pair.
  const std::vector<BehaviorId> a{0, 1}, b{2, 3};
  EXPECT_NEAR(group_score_parts(t, a, b, IntraMode::Pooled).v_intra, group_score_parts(t, a, b).v_intra, 1e-15);
  EXPECT_THROW(group_score(t, a, a), UsageError);
}

TEST(Preferences, SuggestPairExhaustive) {
  const auto e = init_ensemble(fixtures::small_reward_config(4, 21));
  const auto bs = fixtures::random_behaviors(9, 5, 3, 1, 21);
  const DisagreementTable t(e, bs);
  std::set<BehaviorPair> compared;
  for (std::size_t step = 0; step < 36; ++step) {
    BehaviorPair want{-1, -1};
    double best = -1;
    for (BehaviorId a = 0; a < 9; ++a)
      for (BehaviorId b = a + 1; b < 9; ++b) {
        if (compared.contains({a, b})) continue;
        const double d = oracle::disagreement(e, bs[static_cast<std::size_t>(a)], bs[static_cast<std::size_t>(b)]);
        if (d > best + 1e-15) {
          best = d;
          want = {a, b};
        }
      }
    const auto got = suggest_pair(t, compared);
    EXPECT_EQ(got, want);
    compared.insert(got);
  }
  EXPECT_THROW(suggest_pair(t, compared), ExhaustedError);
}

TEST(Preferences, SuggestPairTiesGoToLowestIds) {
  auto e = init_ensemble(fixtures::small_reward_config(4, 1));
  for (auto& m : e.members) m.net.set_parameters(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.net.parameter_count())));
  const auto bs = fixtures::random_behaviors(5, 3, 3, 1, 1);
  EXPECT_EQ(suggest_pair(e, bs, {}), (BehaviorPair{0, 1}));
  EXPECT_EQ(suggest_pair(e, bs, {{0, 1}}), (BehaviorPair{0, 2}));
}

TEST(Preferences, SuggestGroupsExhaustive) {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const auto e = init_ensemble(fixtures::small_reward_config(4, seed));
    const auto bs = fixtures::random_behaviors(14, 5, 3, 1, seed + 77);
    const auto tree = tree_of(bs);
    const DisagreementTable t(e, bs);
    std::set<GroupPairKey> compared;
    for (int step = 0; step < 6; ++step) {
      GroupSuggestOptions opt;
      opt.max_group_size = 4;
      // Oracle: every node pair with leaf sets disjoint by set intersection.
      struct Cand {
        NodeId a, b;
        double s;
        bool singles;
      };
      std::vector<Cand> all;
      for (const auto& x : tree.nodes()) {
        for (const auto& y : tree.nodes()) {
          if (x.id >= y.id || x.leaf_count > 4 || y.leaf_count > 4) continue;
          const auto lx = tree.leaves_of(x.id), ly = tree.leaves_of(y.id);
          std::set<BehaviorId> sx(lx.begin(), lx.end());
          bool overlap = false;
          for (auto v : ly) overlap |= sx.contains(v);
          if (overlap || compared.contains(make_group_key(lx, ly))) continue;
          std::vector<const Behavior*> gx, gy;
          for (auto v : lx) gx.push_back(&bs[static_cast<std::size_t>(v)]);
          for (auto v : ly) gy.push_back(&bs[static_cast<std::size_t>(v)]);
          all.push_back({x.id, y.id, oracle::group_score(e, gx, gy), lx.size() == 1 && ly.size() == 1});
        }
      }
      const bool only_singles = std::all_of(all.begin(), all.end(), [](const Cand& c) { return c.singles; });
      const Cand* best = nullptr;
      for (const auto& c : all) {
        if (c.singles && !only_singles) continue;
        if (!best || c.s > best->s * (1 + 1e-12)) best = &c;
      }
      ASSERT_NE(best, nullptr);
      const auto got = suggest_groups(t, tree, compared, opt);
      EXPECT_EQ(got.node_1, best->a) << "seed " << seed << " step " << step;
      EXPECT_EQ(got.node_2, best->b);
      EXPECT_NEAR(got.score, best->s, 1e-9 * std::abs(best->s));
      compared.insert(make_group_key(got.leaves_1, got.leaves_2));
    }
  }
}

TEST(Preferences, SuggestGroupsFallsBackToSingletonsThenExhausts) {
  const auto e = init_ensemble(fixtures::small_reward_config(4, 2));
  const auto bs = fixtures::random_behaviors(3, 5, 3, 1, 2);
  const auto tree = tree_of(bs);
  const DisagreementTable t(e, bs);
  std::set<GroupPairKey> compared;
  std::size_t offered = 0, singles = 0;
  while (true) {
    GroupSuggestion g;
    try {
      g = suggest_groups(t, tree, compared);
    } catch (const ExhaustedError&) {
      break;
    }
    ++offered;
    if (g.leaves_1.size() == 1 && g.leaves_2.size() == 1) ++singles;
    else EXPECT_EQ(singles, 0u) << "a singleton pair came before a real group";
    compared.insert(make_group_key(g.leaves_1, g.leaves_2));
  }
  // 3 leaves: one 2-leaf node against the remaining leaf, plus 3 leaf pairs.
  EXPECT_EQ(offered, 4u);
  EXPECT_EQ(singles, 3u);
}

TEST(Preferences, StoreRecordsBudgetAndHistory) {
  StoreOptions o;
  o.preference_budget = 7;
  o.seed = 3;
  PreferenceStore s(o);
  EXPECT_EQ(s.record({"", {1, 2, 3}, {4, 5}, Verdict::G1Preferred, Origin::Human, 0, 0}).size(), 3u);
  EXPECT_EQ(s.record({"", {6}, {7}, Verdict::Skip, Origin::Human, 0, 0}).size(), 0u);
  EXPECT_EQ(s.record({"", {1, 2, 3, 8, 9}, {10}, Verdict::Tie, Origin::Dm, 1, 0}).size(), 4u);
  EXPECT_TRUE(s.budget_exhausted());
  EXPECT_EQ(s.record({"", {1}, {2}, Verdict::G2Preferred, Origin::Dm, 1, 0}).size(), 0u);
  EXPECT_EQ(s.queries().size(), 7u);
  EXPECT_EQ(s.comparisons()[0].id, "c0");
  EXPECT_TRUE(s.contains("c3"));
  EXPECT_THROW(s.record({"c1", {1}, {3}, Verdict::Tie, Origin::Dm, 1, 0}), UsageError);
  EXPECT_EQ(s.history(1).size(), 2u);
  EXPECT_EQ(s.history().size(), 4u);
  EXPECT_TRUE(s.compared_pair(2, 1));
  EXPECT_TRUE(s.compared_pair(6, 7));
  const std::vector<BehaviorId> a{5, 4}, b{3, 1, 2};
  EXPECT_TRUE(s.compared_groups(a, b));
  EXPECT_EQ(s.queries_csv().substr(0, s.queries_csv().find('\n')), "tau_i,tau_j,outcome,source_comparison");
}

TEST(Preferences, StoreReplayIsDeterministic) {
  StoreOptions o;
  o.seed = 11;
  PreferenceStore s(o);
  Rng rng(1);
  for (int i = 0; i < 30; ++i) {
    std::vector<BehaviorId> g1, g2;
    const int m = 1 + i % 4, n = 1 + i % 3;
    for (int k = 0; k < m; ++k) g1.push_back(10 * i + k);
    for (int k = 0; k < n; ++k) g2.push_back(10 * i + 5 + k);
    s.record({"", g1, g2, static_cast<Verdict>(i % 4), Origin::Human, static_cast<std::size_t>(i / 10), 1000 + i});
  }
  const auto back = PreferenceStore::from_jsonl(s.to_jsonl(), o);
  EXPECT_EQ(back.comparisons(), s.comparisons());
  EXPECT_EQ(back.queries(), s.queries());
  EXPECT_THROW(PreferenceStore::from_jsonl("{\"g1\":[1]}\n", o), CorruptDataError);
  EXPECT_THROW(PreferenceStore::from_jsonl("{\"g1\":[1],\"g2\":[1],\"verdict\":\"tie\"}\n", o), CorruptDataError);
}

TEST(Preferences, CandidateNodesRespectSizes) {
  const auto t = fixtures::random_dendrogram(20, 4);
  for (auto id : candidate_nodes(t, 5, 2)) {
    EXPECT_GE(t.node(id).leaf_count, 2u);
    EXPECT_LE(t.node(id).leaf_count, 5u);
  }
  EXPECT_EQ(candidate_nodes(t, 1).size(), 20u);
}
