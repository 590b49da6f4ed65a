#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "grlhf/dtw.hpp"
#include "grlhf/envs.hpp"

namespace grlhf {

using NodeId = int;

struct DendrogramNode {
  NodeId id = 0;
  std::vector<NodeId> children;             // empty for leaves
  std::optional<BehaviorId> leaf_behavior;  // leaves only
  double merge_height = 0.0;
  std::size_t leaf_count = 1;
  std::size_t span_begin = 0;  // [span_begin, span_end) in the ordered leaf sequence
  std::size_t span_end = 1;
  std::size_t height = 0;  // edges to the deepest leaf below; leaves are 0

  bool is_leaf() const { return children.empty(); }
};

/// Binary merge tree. Leaves are nodes 0..n-1 (matrix order); merge k creates
/// node n+k, so node ids grow with merge order.
class Dendrogram {
 public:
  Dendrogram() = default;
  Dendrogram(std::vector<DendrogramNode> nodes, NodeId root);

  const DendrogramNode& root() const { return node(root_); }
  NodeId root_id() const { return root_; }
  const DendrogramNode& node(NodeId id) const;
  const std::vector<DendrogramNode>& nodes() const { return nodes_; }
  std::size_t leaf_count() const { return leaf_order_.size(); }

  /// Leaf node ids in display order.
  const std::vector<NodeId>& leaf_order() const { return leaf_order_; }
  /// Behavior ids under `id`, in display order.
  std::vector<BehaviorId> leaves_of(NodeId id) const;
  std::optional<NodeId> leaf_node_of(BehaviorId behavior) const;
  /// Parent of every node; the root maps to -1.
  const std::vector<NodeId>& parents() const { return parents_; }
  NodeId lowest_common_ancestor(NodeId a, NodeId b) const;

  nlohmann::json to_json() const;
  static Dendrogram from_json(const nlohmann::json& j);

  friend bool operator==(const Dendrogram& a, const Dendrogram& b);

 private:
  void index();

  std::vector<DendrogramNode> nodes_;
  NodeId root_ = 0;
  std::vector<NodeId> leaf_order_;
  std::vector<NodeId> parents_;
  std::vector<std::size_t> depth_;  // edges from the root
};

/// Average-linkage agglomerative clustering. Ties merge the lowest (i, j)
/// cluster-slot pair first. `ids` labels the leaves (defaults to 0..n-1).
Dendrogram agglomerative_cluster(const DistanceMatrix& matrix, std::span<const BehaviorId> ids = {});

using Partition = std::vector<std::vector<BehaviorId>>;

/// Removes the k-1 highest merges, leaving k clusters in leaf order.
Partition cut_to_k(const Dendrogram& dendrogram, std::size_t k);

}  // namespace grlhf
