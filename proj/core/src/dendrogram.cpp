#include "grlhf/dendrogram.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "grlhf/error.hpp"

namespace grlhf {

using nlohmann::json;

Dendrogram::Dendrogram(std::vector<DendrogramNode> nodes, NodeId root) : nodes_(std::move(nodes)), root_(root) {
  index();
}

const DendrogramNode& Dendrogram::node(NodeId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    throw UsageError("unknown dendrogram node " + std::to_string(id));
  }
  return nodes_[static_cast<std::size_t>(id)];
}

void Dendrogram::index() {
  if (nodes_.empty()) throw UsageError("empty dendrogram");
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].id != static_cast<NodeId>(i)) throw CorruptDataError("dendrogram node ids must be dense");
  }
  parents_.assign(nodes_.size(), -1);
  depth_.assign(nodes_.size(), 0);
  leaf_order_.clear();

  // Iterative post-order: assigns spans, leaf counts and heights bottom-up.
  struct Frame {
    NodeId id;
    std::size_t next_child;
  };
  std::vector<Frame> stack{{root_, 0}};
  std::vector<char> seen(nodes_.size(), 0);
  seen[static_cast<std::size_t>(root_)] = 1;
  while (!stack.empty()) {
    auto& f = stack.back();
    auto& n = nodes_[static_cast<std::size_t>(f.id)];
    if (n.children.empty()) {
      if (!n.leaf_behavior) throw CorruptDataError("leaf without behavior id");
      n.leaf_count = 1;
      n.span_begin = leaf_order_.size();
      n.span_end = n.span_begin + 1;
      n.height = 0;
      n.merge_height = 0.0;
      leaf_order_.push_back(n.id);
      stack.pop_back();
      continue;
    }
    if (f.next_child < n.children.size()) {
      const NodeId c = n.children[f.next_child++];
      if (c < 0 || static_cast<std::size_t>(c) >= nodes_.size() || seen[static_cast<std::size_t>(c)]) {
        throw CorruptDataError("dendrogram is not a tree");
      }
      seen[static_cast<std::size_t>(c)] = 1;
      parents_[static_cast<std::size_t>(c)] = n.id;
      depth_[static_cast<std::size_t>(c)] = depth_[static_cast<std::size_t>(n.id)] + 1;
      stack.push_back({c, 0});
      continue;
    }
    n.leaf_count = 0;
    n.height = 0;
    n.span_begin = std::numeric_limits<std::size_t>::max();
    n.span_end = 0;
    for (NodeId c : n.children) {
      const auto& child = nodes_[static_cast<std::size_t>(c)];
      n.leaf_count += child.leaf_count;
      n.height = std::max(n.height, child.height + 1);
      n.span_begin = std::min(n.span_begin, child.span_begin);
      n.span_end = std::max(n.span_end, child.span_end);
    }
    stack.pop_back();
  }
  if (std::count(seen.begin(), seen.end(), 1) != static_cast<long>(nodes_.size())) {
    throw CorruptDataError("dendrogram has unreachable nodes");
  }
}

std::vector<BehaviorId> Dendrogram::leaves_of(NodeId id) const {
  const auto& n = node(id);
  std::vector<BehaviorId> out;
  out.reserve(n.leaf_count);
  for (std::size_t i = n.span_begin; i < n.span_end; ++i) out.push_back(*node(leaf_order_[i]).leaf_behavior);
  return out;
}

std::optional<NodeId> Dendrogram::leaf_node_of(BehaviorId behavior) const {
  for (NodeId leaf : leaf_order_) {
    if (*node(leaf).leaf_behavior == behavior) return leaf;
  }
  return std::nullopt;
}

NodeId Dendrogram::lowest_common_ancestor(NodeId a, NodeId b) const {
  node(a);
  node(b);
  while (depth_[static_cast<std::size_t>(a)] > depth_[static_cast<std::size_t>(b)]) a = parents_[static_cast<std::size_t>(a)];
  while (depth_[static_cast<std::size_t>(b)] > depth_[static_cast<std::size_t>(a)]) b = parents_[static_cast<std::size_t>(b)];
  while (a != b) {
    a = parents_[static_cast<std::size_t>(a)];
    b = parents_[static_cast<std::size_t>(b)];
  }
  return a;
}

json Dendrogram::to_json() const {
  json nodes = json::object();
  for (const auto& n : nodes_) {
    json j{{"children", n.children},
           {"merge_height", n.merge_height},
           {"leaf_count", n.leaf_count},
           {"leaf_span", {n.span_begin, n.span_end}}};
    if (n.leaf_behavior) j["behavior"] = *n.leaf_behavior;
    nodes[std::to_string(n.id)] = std::move(j);
  }
  return {{"root", root_}, {"leaf_order", leaf_order_}, {"nodes", std::move(nodes)}};
}

Dendrogram Dendrogram::from_json(const json& j) {
  try {
    const auto& nodes = j.at("nodes");
    std::vector<DendrogramNode> out(nodes.size());
    for (auto it = nodes.begin(); it != nodes.end(); ++it) {
      const auto id = std::stoi(it.key());
      if (id < 0 || static_cast<std::size_t>(id) >= out.size()) throw CorruptDataError("node id out of range");
      auto& n = out[static_cast<std::size_t>(id)];
      n.id = id;
      n.children = it.value().at("children").get<std::vector<NodeId>>();
      n.merge_height = it.value().at("merge_height").get<double>();
      if (it.value().contains("behavior")) n.leaf_behavior = it.value().at("behavior").get<BehaviorId>();
    }
    return Dendrogram(std::move(out), j.at("root").get<NodeId>());
  } catch (const json::exception& e) {
    throw CorruptDataError(std::string("bad dendrogram JSON: ") + e.what());
  }
}

bool operator==(const Dendrogram& a, const Dendrogram& b) {
  if (a.root_ != b.root_ || a.nodes_.size() != b.nodes_.size() || a.leaf_order_ != b.leaf_order_) return false;
  for (std::size_t i = 0; i < a.nodes_.size(); ++i) {
    const auto& x = a.nodes_[i];
    const auto& y = b.nodes_[i];
    if (x.children != y.children || x.leaf_behavior != y.leaf_behavior || x.merge_height != y.merge_height) {
      return false;
    }
  }
  return true;
}

Dendrogram agglomerative_cluster(const DistanceMatrix& matrix, std::span<const BehaviorId> ids) {
  const std::size_t n = matrix.size();
  if (n == 0) throw UsageError("cannot cluster an empty matrix");
  if (!ids.empty() && ids.size() != n) throw DimensionError("leaf id count does not match matrix size");

  std::vector<DendrogramNode> nodes;
  nodes.reserve(2 * n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    DendrogramNode leaf;
    leaf.id = static_cast<NodeId>(i);
    leaf.leaf_behavior = ids.empty() ? static_cast<BehaviorId>(i) : ids[i];
    nodes.push_back(std::move(leaf));
  }
  if (n == 1) return Dendrogram(std::move(nodes), 0);

  // Working copy of inter-cluster distances; slot i holds the cluster whose
  // lowest original index is i. Average linkage via Lance-Williams.
  Eigen::MatrixXd d = matrix.values();
  std::vector<std::size_t> size(n, 1);
  std::vector<NodeId> slot_node(n);
  std::iota(slot_node.begin(), slot_node.end(), 0);
  std::vector<char> active(n, 1);

  for (std::size_t merge = 0; merge + 1 < n; ++merge) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!active[j]) continue;
        const double v = d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        if (v < best) {
          best = v;
          bi = i;
          bj = j;
        }
      }
    }

    DendrogramNode parent;
    parent.id = static_cast<NodeId>(n + merge);
    parent.children = {slot_node[bi], slot_node[bj]};
    // Rounding in the weighted average can undershoot a child by an ulp.
    parent.merge_height = std::max({best, nodes[static_cast<std::size_t>(slot_node[bi])].merge_height,
                                    nodes[static_cast<std::size_t>(slot_node[bj])].merge_height});
    nodes.push_back(std::move(parent));

    const double si = static_cast<double>(size[bi]);
    const double sj = static_cast<double>(size[bj]);
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == bi || k == bj) continue;
      const auto ki = static_cast<Eigen::Index>(k);
      const double v = (si * d(ki, static_cast<Eigen::Index>(bi)) + sj * d(ki, static_cast<Eigen::Index>(bj))) / (si + sj);
      d(ki, static_cast<Eigen::Index>(bi)) = v;
      d(static_cast<Eigen::Index>(bi), ki) = v;
    }
    size[bi] += size[bj];
    active[bj] = 0;
    slot_node[bi] = static_cast<NodeId>(n + merge);
  }

  return Dendrogram(std::move(nodes), static_cast<NodeId>(2 * n - 2));
}

Partition cut_to_k(const Dendrogram& dendrogram, std::size_t k) {
  const std::size_t n = dendrogram.leaf_count();
  if (k < 1 || k > n) throw UsageError("cut_to_k: k must be in [1, " + std::to_string(n) + "]");

  // Highest merges: internal nodes ordered by (merge_height, id) descending.
  // Parents have larger ids than their children, so on a monotone tree the
  // removed set is closed upward and exactly k subtrees remain.
  std::vector<NodeId> internal;
  for (const auto& node : dendrogram.nodes()) {
    if (!node.is_leaf()) internal.push_back(node.id);
  }
  std::sort(internal.begin(), internal.end(), [&](NodeId a, NodeId b) {
    const double ha = dendrogram.node(a).merge_height;
    const double hb = dendrogram.node(b).merge_height;
    return ha != hb ? ha > hb : a > b;
  });
  std::unordered_set<NodeId> removed(internal.begin(), internal.begin() + static_cast<long>(k - 1));

  std::vector<NodeId> roots;
  std::vector<NodeId> stack{dendrogram.root_id()};
  while (!stack.empty()) {
    const NodeId id = stack.back();
    stack.pop_back();
    if (removed.contains(id)) {
      const auto& ch = dendrogram.node(id).children;
      for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
    } else {
      roots.push_back(id);
    }
  }
  if (roots.size() != k) {
    throw UsageError("cut_to_k: dendrogram merge heights are not monotone");
  }
  std::sort(roots.begin(), roots.end(),
            [&](NodeId a, NodeId b) { return dendrogram.node(a).span_begin < dendrogram.node(b).span_begin; });
  Partition out;
  out.reserve(k);
  for (NodeId r : roots) out.push_back(dendrogram.leaves_of(r));
  return out;
}

}  // namespace grlhf
