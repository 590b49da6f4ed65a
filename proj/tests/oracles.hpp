#pragma once
// Reference implementations used only as test oracles. Deliberately naive:
// scalar loops, no Eigen expressions, recomputed from scratch every call.

#include <algorithm>
#include <cmath>
#include <vector>

#include "grlhf/reward_ensemble.hpp"

namespace grlhf::oracle {

inline double forward(const Mlp& net, const std::vector<double>& input) {
  std::vector<double> x = input;
  const auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& w = layers[l].weight;
    std::vector<double> y(static_cast<std::size_t>(w.rows()));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      double s = layers[l].bias(r);
      for (Eigen::Index c = 0; c < w.cols(); ++c) s += w(r, c) * x[static_cast<std::size_t>(c)];
      y[static_cast<std::size_t>(r)] = l + 1 < layers.size() ? std::tanh(s) : s;
    }
    x = std::move(y);
  }
  return x[0];
}

inline double segment_return(const RewardNet& member, const Behavior& b) {
  double total = 0.0;
  for (Eigen::Index t = 0; t < b.states.rows(); ++t) {
    std::vector<double> row;
    for (Eigen::Index c = 0; c < b.states.cols(); ++c) row.push_back(b.states(t, c));
    for (Eigen::Index c = 0; c < b.actions.cols(); ++c) row.push_back(b.actions(t, c));
    total += forward(member.net, row);
  }
  return total;
}

inline double bt(double ra, double rb) { return 1.0 / (1.0 + std::exp(rb - ra)); }

inline double disagreement(const Ensemble& e, const Behavior& a, const Behavior& b) {
  std::vector<double> p;
  for (const auto& m : e.members) p.push_back(bt(segment_return(m, a), segment_return(m, b)));
  double mean = 0.0;
  for (double x : p) mean += x;
  mean /= static_cast<double>(p.size());
  double var = 0.0;
  for (double x : p) var += (x - mean) * (x - mean);
  return var / static_cast<double>(p.size());
}

/// Group score written straight from its definition.
inline double group_score(const Ensemble& e, const std::vector<const Behavior*>& g1,
                          const std::vector<const Behavior*>& g2) {
  double inter = 0.0;
  for (auto* a : g1)
    for (auto* b : g2) inter += disagreement(e, *a, *b);
  inter /= static_cast<double>(g1.size() * g2.size());
  auto intra_of = [&](const std::vector<const Behavior*>& g) {
    if (g.size() < 2) return 0.0;
    double s = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < g.size(); ++i)
      for (std::size_t j = i + 1; j < g.size(); ++j) {
        s += disagreement(e, *g[i], *g[j]);
        ++count;
      }
    return s / count;
  };
  const double intra = 0.5 * (intra_of(g1) + intra_of(g2));
  const double r = static_cast<double>(std::max(g1.size(), g2.size())) / static_cast<double>(std::min(g1.size(), g2.size()));
  return inter / (r * intra + 1e-8);
}

inline double bt_loss(const RewardNet& m, std::span<const PreferenceQuery> qs, const BehaviorIndex& idx) {
  double s = 0.0;
  for (const auto& q : qs) {
    const double p = bt(segment_return(m, idx.at(q.tau_i)), segment_return(m, idx.at(q.tau_j)));
    const double y = target_of(q.outcome);
    s -= y * std::log(p) + (1 - y) * std::log(1 - p);
  }
  return s / static_cast<double>(qs.size());
}

}  // namespace grlhf::oracle
