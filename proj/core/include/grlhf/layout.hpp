#pragma once

// Radial icicle layout with the leaves on the innermost ring and the root on
// the outermost one. The disk inside the leaf ring (radius `hub_radius`) is
// reserved for bundled edges. Angles are measured clockwise from 12 o'clock in
// [0, 2pi); radii are normalized so the outer edge of the root ring is 1.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "grlhf/dendrogram.hpp"

namespace grlhf {

struct LayoutParams {
  double hub_radius = 0.55;
  double beta = 0.85;  // bundling strength; 0 = straight chord, 1 = tree path
};

struct Arc {
  NodeId node_id = 0;
  std::optional<BehaviorId> behavior;  // leaves only
  std::size_t ring = 0;
  double start_angle = 0.0;
  double end_angle = 0.0;
  double inner_radius = 0.0;
  double outer_radius = 0.0;
  bool selectable = true;
};

struct PolarPoint {
  double radius = 0.0;
  double angle = 0.0;
};

enum class EdgeKind { Suggestion, History };
enum class HistoryVerdict { FirstPreferred, SecondPreferred, Skip };

struct EdgeColor {
  std::string from;  // at endpoints.first
  std::string to;    // at endpoints.second
};

struct BundledEdge {
  std::pair<BehaviorId, BehaviorId> endpoints;
  EdgeKind kind = EdgeKind::Suggestion;
  std::vector<PolarPoint> control_points;
  std::optional<EdgeColor> color;  // history edges only
};

struct HistoryEdge {
  BehaviorId a = 0;
  BehaviorId b = 0;
  HistoryVerdict verdict = HistoryVerdict::Skip;
};

struct LayoutScene {
  std::vector<Arc> arcs;
  std::vector<BundledEdge> edges;
  std::unordered_map<BehaviorId, double> leaf_angle;
  LayoutParams params;
};

namespace colors {
inline constexpr const char* kPreferred = "#2ca02c";
inline constexpr const char* kUnpreferred = "#d62728";
inline constexpr const char* kSkip = "#7f93b2";
inline constexpr const char* kSuggestion = "#9a9a9a";
}  // namespace colors

/// One arc per dendrogram node. A node's angular span is proportional to its
/// leaf count and ordered by its leaf span; ring = height above the leaves.
std::vector<Arc> radial_layout(const Dendrogram& dendrogram, const LayoutParams& params = {});

/// Position of a node inside the hub: leaves sit on the hub boundary, higher
/// nodes move toward the center; angle is the midpoint of the node's span.
PolarPoint hub_position(const Dendrogram& dendrogram, NodeId node, const LayoutParams& params = {});

/// Control polygon leaf(a) -> LCA -> leaf(b), straightened toward the chord by
/// (1 - beta). Endpoints are behavior ids of leaves.
std::vector<PolarPoint> bundle_edge(const Dendrogram& dendrogram, BehaviorId a, BehaviorId b, double beta,
                                    const LayoutParams& params = {});

/// Uniform cubic B-spline through the control polygon (endpoints clamped by
/// repetition), sampled `samples_per_segment` times per span.
std::vector<PolarPoint> tessellate_bspline(std::span<const PolarPoint> control_points,
                                           std::size_t samples_per_segment = 8);

LayoutScene build_scene(const Dendrogram& dendrogram, std::span<const std::pair<BehaviorId, BehaviorId>> suggestions,
                        std::span<const HistoryEdge> history, const LayoutParams& params = {});

nlohmann::json to_json(const LayoutScene& scene);

}  // namespace grlhf
