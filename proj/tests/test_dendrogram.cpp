#include <algorithm>
#include <set>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "grlhf/dendrogram.hpp"
#include "grlhf/error.hpp"
#include "support.hpp"

using namespace grlhf;

namespace {

struct OracleMerge {
  std::set<std::size_t> members;
  double height;
};

// Textbook average linkage: cluster distance is the mean over all leaf pairs,
// recomputed from scratch at every step.
std::vector<OracleMerge> naive_average_linkage(const Eigen::MatrixXd& d) {
  const auto n = static_cast<std::size_t>(d.rows());
  std::vector<std::set<std::size_t>> clusters;
  for (std::size_t i = 0; i < n; ++i) clusters.push_back({i});
  std::vector<OracleMerge> merges;
  while (clusters.size() > 1) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
      for (std::size_t j = i + 1; j < clusters.size(); ++j) {
        double s = 0.0;
        for (auto p : clusters[i])
          for (auto q : clusters[j]) s += d(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q));
        const double v = s / static_cast<double>(clusters[i].size() * clusters[j].size());
        if (v < best) {
          best = v;
          bi = i;
          bj = j;
        }
      }
    }
    clusters[bi].insert(clusters[bj].begin(), clusters[bj].end());
    merges.push_back({clusters[bi], best});
    clusters.erase(clusters.begin() + static_cast<long>(bj));
    std::sort(clusters.begin(), clusters.end(), [](const auto& a, const auto& b) { return *a.begin() < *b.begin(); });
  }
  return merges;
}

Eigen::MatrixXd random_distances(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.1, 10.0);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    for (Eigen::Index j = i + 1; j < d.cols(); ++j) d(i, j) = d(j, i) = u(rng);
  return d;
}

std::set<std::size_t> leaf_set(const Dendrogram& t, NodeId id) {
  std::set<std::size_t> out;
  for (auto b : t.leaves_of(id)) out.insert(static_cast<std::size_t>(b));
  return out;
}

}  // namespace

TEST(Dendrogram, MatchesNaiveAverageLinkage) {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const std::size_t n = 2 + seed % 14;
    const auto d = random_distances(n, seed);
    const auto tree = agglomerative_cluster(DistanceMatrix(d));
    const auto oracle = naive_average_linkage(d);
    ASSERT_EQ(tree.nodes().size(), 2 * n - 1);
    for (std::size_t k = 0; k + 1 < n; ++k) {
      const auto& node = tree.node(static_cast<NodeId>(n + k));
      EXPECT_EQ(leaf_set(tree, node.id), oracle[k].members) << "seed " << seed << " merge " << k;
      EXPECT_NEAR(node.merge_height, oracle[k].height, 1e-9);
    }
  }
}

TEST(Dendrogram, StructuralInvariants) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const std::size_t n = 1 + seed % 20;
    const auto t = fixtures::random_dendrogram(n, seed);
    EXPECT_EQ(t.leaf_count(), n);
    EXPECT_EQ(t.root().leaf_count, n);
    EXPECT_EQ(t.root().span_begin, 0u);
    EXPECT_EQ(t.root().span_end, n);
    EXPECT_EQ(t.parents()[static_cast<std::size_t>(t.root_id())], -1);
    const auto all = t.leaves_of(t.root_id());
    std::multiset<BehaviorId> leaves(all.begin(), all.end());
    EXPECT_EQ(leaves.size(), n);
    EXPECT_EQ(std::set<BehaviorId>(leaves.begin(), leaves.end()).size(), n);
    for (const auto& node : t.nodes()) {
      if (node.is_leaf()) {
        EXPECT_EQ(node.height, 0u);
        EXPECT_EQ(node.span_end - node.span_begin, 1u);
        continue;
      }
      ASSERT_EQ(node.children.size(), 2u);
      const auto& a = t.node(node.children[0]);
      const auto& b = t.node(node.children[1]);
      EXPECT_EQ(node.leaf_count, a.leaf_count + b.leaf_count);
      EXPECT_EQ(node.span_end - node.span_begin, node.leaf_count);
      EXPECT_EQ(node.height, 1 + std::max(a.height, b.height));
      EXPECT_GE(node.merge_height, a.merge_height);
      EXPECT_GE(node.merge_height, b.merge_height);
      EXPECT_LT(a.id, node.id);
      EXPECT_EQ(t.parents()[static_cast<std::size_t>(a.id)], node.id);
    }
  }
}

TEST(Dendrogram, LowestCommonAncestorByBruteForce) {
  const auto t = fixtures::random_dendrogram(13, 9);
  auto ancestors = [&](NodeId x) {
    std::vector<NodeId> out;
    for (; x != -1; x = t.parents()[static_cast<std::size_t>(x)]) out.push_back(x);
    return out;
  };
  for (NodeId a = 0; a < static_cast<NodeId>(t.nodes().size()); ++a) {
    for (NodeId b = 0; b < static_cast<NodeId>(t.nodes().size()); ++b) {
      const auto ua = ancestors(a), ub = ancestors(b);
      NodeId want = -1;
      for (NodeId x : ua)
        if (std::find(ub.begin(), ub.end(), x) != ub.end()) {
          want = x;
          break;
        }
      EXPECT_EQ(t.lowest_common_ancestor(a, b), want);
    }
  }
}

TEST(Dendrogram, CustomIdsAndLookup) {
  std::vector<BehaviorId> ids{3'000'000, 3'000'001, 3'000'002, 3'000'003, 3'000'004};
  const auto t = fixtures::random_dendrogram(5, 1, ids);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto leaf = t.leaf_node_of(ids[i]);
    ASSERT_TRUE(leaf);
    EXPECT_EQ(*leaf, static_cast<NodeId>(i));
    EXPECT_EQ(t.node(*leaf).leaf_behavior, ids[i]);
  }
  EXPECT_FALSE(t.leaf_node_of(17));
  EXPECT_THROW(agglomerative_cluster(DistanceMatrix(random_distances(4, 0)), std::vector<BehaviorId>{1, 2}),
               DimensionError);
}

TEST(Dendrogram, JsonRoundTrip) {
  const auto t = fixtures::random_dendrogram(17, 3);
  const auto back = Dendrogram::from_json(nlohmann::json::parse(t.to_json().dump()));
  EXPECT_TRUE(back == t);
  EXPECT_EQ(back.leaf_order(), t.leaf_order());
}

TEST(Dendrogram, CutMatchesOracleClusters) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t n = 3 + seed % 10;
    const auto d = random_distances(n, seed + 100);
    const auto tree = agglomerative_cluster(DistanceMatrix(d));
    const auto oracle = naive_average_linkage(d);
    for (std::size_t k = 1; k <= n; ++k) {
      // Replay the first n-k oracle merges.
      std::vector<std::set<std::size_t>> want;
      for (std::size_t i = 0; i < n; ++i) want.push_back({i});
      for (std::size_t m = 0; m < n - k; ++m) {
        std::erase_if(want, [&](const auto& c) { return std::includes(oracle[m].members.begin(), oracle[m].members.end(), c.begin(), c.end()); });
        want.push_back(oracle[m].members);
      }
      const auto parts = cut_to_k(tree, k);
      ASSERT_EQ(parts.size(), k);
      std::set<std::set<std::size_t>> got;
      for (const auto& p : parts) {
        std::set<std::size_t> s;
        for (auto b : p) s.insert(static_cast<std::size_t>(b));
        got.insert(s);
      }
      EXPECT_EQ(got, std::set<std::set<std::size_t>>(want.begin(), want.end()));
    }
    EXPECT_THROW(cut_to_k(tree, 0), UsageError);
    EXPECT_THROW(cut_to_k(tree, n + 1), UsageError);
  }
}
