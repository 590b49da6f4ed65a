#include "grlhf/layout.hpp"

#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "grlhf/error.hpp"

namespace grlhf {
namespace {

using nlohmann::json;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Cartesian {
  double x, y;
};

// Clockwise from 12 o'clock: angle 0 points to +y, pi/2 to +x.
Cartesian to_cartesian(const PolarPoint& p) { return {p.radius * std::sin(p.angle), p.radius * std::cos(p.angle)}; }

PolarPoint to_polar(const Cartesian& c) {
  const double r = std::hypot(c.x, c.y);
  if (r == 0.0) return {0.0, 0.0};
  double a = std::atan2(c.x, c.y);
  if (a < 0) a += kTwoPi;
  if (a >= kTwoPi) a -= kTwoPi;
  return {r, a};
}

double ring_thickness(const Dendrogram& d, const LayoutParams& params) {
  return (1.0 - params.hub_radius) / static_cast<double>(d.root().height + 1);
}

NodeId leaf_for(const Dendrogram& d, BehaviorId behavior) {
  const auto leaf = d.leaf_node_of(behavior);
  if (!leaf) throw UsageError("behavior " + std::to_string(behavior) + " is not a leaf of the dendrogram");
  return *leaf;
}

}  // namespace

std::vector<Arc> radial_layout(const Dendrogram& dendrogram, const LayoutParams& params) {
  if (!(params.hub_radius > 0.0 && params.hub_radius < 1.0)) throw UsageError("hub radius must be in (0,1)");
  const double n = static_cast<double>(dendrogram.leaf_count());
  const double thickness = ring_thickness(dendrogram, params);
  std::vector<Arc> arcs;
  arcs.reserve(dendrogram.nodes().size());
  for (const auto& node : dendrogram.nodes()) {
    Arc arc;
    arc.node_id = node.id;
    arc.behavior = node.leaf_behavior;
    arc.ring = node.height;
    arc.start_angle = kTwoPi * static_cast<double>(node.span_begin) / n;
    arc.end_angle = kTwoPi * static_cast<double>(node.span_end) / n;
    arc.inner_radius = params.hub_radius + static_cast<double>(node.height) * thickness;
    arc.outer_radius = arc.inner_radius + thickness;
    arcs.push_back(arc);
  }
  return arcs;
}

PolarPoint hub_position(const Dendrogram& dendrogram, NodeId id, const LayoutParams& params) {
  const auto& node = dendrogram.node(id);
  const double n = static_cast<double>(dendrogram.leaf_count());
  const double levels = static_cast<double>(dendrogram.root().height + 1);
  const double radius = params.hub_radius * (1.0 - static_cast<double>(node.height) / levels);
  const double angle = std::numbers::pi * static_cast<double>(node.span_begin + node.span_end) / n;
  return {radius, angle};
}

std::vector<PolarPoint> bundle_edge(const Dendrogram& dendrogram, BehaviorId a, BehaviorId b, double beta,
                                    const LayoutParams& params) {
  if (a == b) throw UsageError("bundle_edge: identical leaves");
  if (!(beta >= 0.0 && beta <= 1.0)) throw UsageError("bundle_edge: beta must be in [0,1]");
  const NodeId la = leaf_for(dendrogram, a);
  const NodeId lb = leaf_for(dendrogram, b);
  const NodeId lca = dendrogram.lowest_common_ancestor(la, lb);
  const auto& parents = dendrogram.parents();

  std::vector<NodeId> path;
  for (NodeId x = la; x != lca; x = parents[static_cast<std::size_t>(x)]) path.push_back(x);
  path.push_back(lca);
  std::vector<NodeId> down;
  for (NodeId x = lb; x != lca; x = parents[static_cast<std::size_t>(x)]) down.push_back(x);
  path.insert(path.end(), down.rbegin(), down.rend());

  std::vector<PolarPoint> polar;
  polar.reserve(path.size());
  for (NodeId id : path) polar.push_back(hub_position(dendrogram, id, params));
  if (beta == 1.0) return polar;

  const Cartesian p0 = to_cartesian(polar.front());
  const Cartesian pn = to_cartesian(polar.back());
  const double last = static_cast<double>(polar.size() - 1);
  std::vector<PolarPoint> out;
  out.reserve(polar.size());
  for (std::size_t i = 0; i < polar.size(); ++i) {
    if (i == 0 || i + 1 == polar.size()) {
      out.push_back(polar[i]);
      continue;
    }
    const Cartesian p = to_cartesian(polar[i]);
    const double t = static_cast<double>(i) / last;
    const Cartesian chord{p0.x + t * (pn.x - p0.x), p0.y + t * (pn.y - p0.y)};
    out.push_back(to_polar({beta * p.x + (1.0 - beta) * chord.x, beta * p.y + (1.0 - beta) * chord.y}));
  }
  return out;
}

std::vector<PolarPoint> tessellate_bspline(std::span<const PolarPoint> control_points, std::size_t samples_per_segment) {
  if (control_points.empty()) return {};
  std::vector<Cartesian> cp;
  cp.push_back(to_cartesian(control_points.front()));
  cp.push_back(cp.back());
  for (const auto& p : control_points) cp.push_back(to_cartesian(p));
  cp.push_back(cp.back());
  cp.push_back(cp.back());

  std::vector<PolarPoint> out;
  const std::size_t segments = cp.size() - 3;
  for (std::size_t s = 0; s < segments; ++s) {
    for (std::size_t k = 0; k < samples_per_segment; ++k) {
      const double t = static_cast<double>(k) / static_cast<double>(samples_per_segment);
      const double t2 = t * t, t3 = t2 * t;
      const double b0 = (1 - t) * (1 - t) * (1 - t) / 6.0;
      const double b1 = (3 * t3 - 6 * t2 + 4) / 6.0;
      const double b2 = (-3 * t3 + 3 * t2 + 3 * t + 1) / 6.0;
      const double b3 = t3 / 6.0;
      out.push_back(to_polar({b0 * cp[s].x + b1 * cp[s + 1].x + b2 * cp[s + 2].x + b3 * cp[s + 3].x,
                              b0 * cp[s].y + b1 * cp[s + 1].y + b2 * cp[s + 2].y + b3 * cp[s + 3].y}));
    }
  }
  out.push_back(control_points.back());
  return out;
}

LayoutScene build_scene(const Dendrogram& dendrogram, std::span<const std::pair<BehaviorId, BehaviorId>> suggestions,
                        std::span<const HistoryEdge> history, const LayoutParams& params) {
  LayoutScene scene;
  scene.params = params;
  scene.arcs = radial_layout(dendrogram, params);
  for (const auto& arc : scene.arcs) {
    if (arc.behavior) scene.leaf_angle[*arc.behavior] = 0.5 * (arc.start_angle + arc.end_angle);
  }
  for (const auto& [a, b] : suggestions) {
    BundledEdge e;
    e.endpoints = {a, b};
    e.kind = EdgeKind::Suggestion;
    e.control_points = bundle_edge(dendrogram, a, b, params.beta, params);
    scene.edges.push_back(std::move(e));
  }
  for (const auto& h : history) {
    BundledEdge e;
    e.endpoints = {h.a, h.b};
    e.kind = EdgeKind::History;
    e.control_points = bundle_edge(dendrogram, h.a, h.b, params.beta, params);
    switch (h.verdict) {
      case HistoryVerdict::FirstPreferred: e.color = EdgeColor{colors::kPreferred, colors::kUnpreferred}; break;
      case HistoryVerdict::SecondPreferred: e.color = EdgeColor{colors::kUnpreferred, colors::kPreferred}; break;
      case HistoryVerdict::Skip: e.color = EdgeColor{colors::kSkip, colors::kSkip}; break;
    }
    scene.edges.push_back(std::move(e));
  }
  return scene;
}

json to_json(const LayoutScene& scene) {
  json arcs = json::array();
  for (const auto& a : scene.arcs) {
    json j{{"node", a.node_id},       {"ring", a.ring},
           {"start", a.start_angle},  {"end", a.end_angle},
           {"inner", a.inner_radius}, {"outer", a.outer_radius},
           {"selectable", a.selectable}};
    if (a.behavior) j["behavior"] = *a.behavior;
    arcs.push_back(std::move(j));
  }
  json edges = json::array();
  for (const auto& e : scene.edges) {
    json pts = json::array();
    for (const auto& p : e.control_points) pts.push_back({p.radius, p.angle});
    json j{{"a", e.endpoints.first},
           {"b", e.endpoints.second},
           {"kind", e.kind == EdgeKind::Suggestion ? "suggestion" : "history"},
           {"control_points", std::move(pts)}};
    if (e.color) {
      j["color"] = {{"from", e.color->from}, {"to", e.color->to}};
    } else {
      j["stroke"] = colors::kSuggestion;
    }
    edges.push_back(std::move(j));
  }
  // Leaf angles in arc order so the document is stable.
  json leaf_angle = json::array();
  for (const auto& a : scene.arcs) {
    if (a.behavior) leaf_angle.push_back({{"behavior", *a.behavior}, {"angle", scene.leaf_angle.at(*a.behavior)}});
  }
  return {{"arcs", std::move(arcs)},
          {"edges", std::move(edges)},
          {"leaf_angle", std::move(leaf_angle)},
          {"params", {{"hub_radius", scene.params.hub_radius}, {"beta", scene.params.beta}}}};
}

}  // namespace grlhf
