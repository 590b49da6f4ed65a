#include "grlhf/clustering_study.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "grlhf/dtw.hpp"
#include "grlhf/error.hpp"
#include "grlhf/random.hpp"

namespace grlhf {

double intra_cluster_variance(const Partition& partition, const std::unordered_map<BehaviorId, double>& true_returns) {
  if (partition.empty()) throw UsageError("intra_cluster_variance: empty partition");
  double total = 0.0;
  std::size_t counted = 0;
  std::vector<double> values;
  for (const auto& cluster : partition) {
    if (cluster.size() < 2) continue;
    values.clear();
    for (BehaviorId id : cluster) {
      const auto it = true_returns.find(id);
      if (it == true_returns.end()) throw UsageError("no true return for behavior " + std::to_string(id));
      values.push_back(it->second);
    }
    total += stats::population_variance(values);
    ++counted;
  }
  return counted == 0 ? 0.0 : total / static_cast<double>(counted);
}

Eigen::MatrixXd resample_and_flatten(std::span<const Eigen::MatrixXd> series, std::size_t steps) {
  if (series.empty()) return {};
  if (steps < 1) throw UsageError("resample needs at least one step");
  const Eigen::Index dims = series.front().cols();
  const auto S = static_cast<Eigen::Index>(steps);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(series.size()), S * dims);
  for (std::size_t r = 0; r < series.size(); ++r) {
    const auto& s = series[r];
    if (s.cols() != dims || s.rows() == 0) throw DimensionError("resample: inconsistent series");
    const Eigen::Index L = s.rows();
    for (Eigen::Index t = 0; t < S; ++t) {
      const double pos = S == 1 ? 0.0 : static_cast<double>(t) * static_cast<double>(L - 1) / static_cast<double>(S - 1);
      const auto lo = static_cast<Eigen::Index>(std::floor(pos));
      const Eigen::Index hi = std::min(lo + 1, L - 1);
      const double w = pos - static_cast<double>(lo);
      out.row(static_cast<Eigen::Index>(r)).segment(t * dims, dims) = (1.0 - w) * s.row(lo) + w * s.row(hi);
    }
  }
  return out;
}

Eigen::MatrixXd pca_project(const Eigen::MatrixXd& features, std::size_t components) {
  const Eigen::Index n = features.rows();
  const Eigen::Index d = features.cols();
  const auto c = static_cast<Eigen::Index>(components);
  if (c > d) throw UsageError("more components than features");
  const Eigen::MatrixXd centered = features.rowwise() - features.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / std::max<double>(1.0, static_cast<double>(n - 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  // Eigenvalues ascend; take the last c columns, largest first.
  Eigen::MatrixXd axes(d, c);
  for (Eigen::Index k = 0; k < c; ++k) {
    Eigen::VectorXd v = eig.eigenvectors().col(d - 1 - k);
    // Fix the sign so the projection is reproducible.
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    axes.col(k) = v;
  }
  return centered * axes;
}

KMeansResult kmeans(const Eigen::MatrixXd& points, std::size_t k, std::uint64_t seed, std::size_t restarts,
                    std::size_t max_iterations) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (k < 1 || k > n) throw UsageError("kmeans: k must be in [1, n]");
  const auto K = static_cast<Eigen::Index>(k);

  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (std::size_t restart = 0; restart < std::max<std::size_t>(1, restarts); ++restart) {
    Rng rng(derive_seed(seed, {0x6b6d, restart}));
    Eigen::MatrixXd centroids(K, points.cols());
    // k-means++ seeding.
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    centroids.row(0) = points.row(static_cast<Eigen::Index>(first));
    for (Eigen::Index c = 1; c < K; ++c) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        d2[i] = std::min(d2[i], (points.row(static_cast<Eigen::Index>(i)) - centroids.row(c - 1)).squaredNorm());
        total += d2[i];
      }
      std::size_t pick = 0;
      if (total > 0) {
        double r = std::uniform_real_distribution<double>(0.0, total)(rng);
        for (pick = 0; pick + 1 < n; ++pick) {
          r -= d2[pick];
          if (r <= 0) break;
        }
      } else {
        pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
      }
      centroids.row(c) = points.row(static_cast<Eigen::Index>(pick));
    }

    std::vector<std::size_t> labels(n, 0);
    double inertia = 0.0;
    for (std::size_t iter = 0; iter < max_iterations; ++iter) {
      bool changed = iter == 0;
      inertia = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        Eigen::Index arg = 0;
        const double dist = (centroids.rowwise() - points.row(static_cast<Eigen::Index>(i))).rowwise().squaredNorm().minCoeff(&arg);
        inertia += dist;
        if (labels[i] != static_cast<std::size_t>(arg)) {
          labels[i] = static_cast<std::size_t>(arg);
          changed = true;
        }
      }
      if (!changed) break;
      Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(K, points.cols());
      std::vector<std::size_t> counts(k, 0);
      for (std::size_t i = 0; i < n; ++i) {
        sums.row(static_cast<Eigen::Index>(labels[i])) += points.row(static_cast<Eigen::Index>(i));
        ++counts[labels[i]];
      }
      for (Eigen::Index c = 0; c < K; ++c) {
        // Empty clusters keep their previous centroid.
        if (counts[static_cast<std::size_t>(c)] > 0) centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      }
    }
    if (inertia < best.inertia) {
      best.labels = std::move(labels);
      best.centroids = std::move(centroids);
      best.inertia = inertia;
    }
  }
  return best;
}

Partition hierarchical_partition(std::span<const Behavior> behaviors, std::size_t k) {
  std::vector<BehaviorId> ids;
  for (const auto& b : behaviors) ids.push_back(b.id);
  const auto dendrogram = agglomerative_cluster(distance_matrix(behaviors), ids);
  return cut_to_k(dendrogram, k);
}

Partition pca_kmeans_partition(std::span<const Behavior> behaviors, std::size_t k, std::uint64_t seed) {
  const auto series = znormalize_states(behaviors);
  const auto projected = pca_project(resample_and_flatten(series, 25), 2);
  const auto result = kmeans(projected, k, seed);
  Partition out(k);
  for (std::size_t i = 0; i < behaviors.size(); ++i) out[result.labels[i]].push_back(behaviors[i].id);
  std::erase_if(out, [](const auto& c) { return c.empty(); });
  return out;
}

StudyReport clustering_quality_study(std::span<const std::vector<Behavior>> rounds, std::size_t k, std::uint64_t seed) {
  if (rounds.size() < 2) throw UsageError("clustering_quality_study needs at least 2 rounds");
  StudyReport report;
  std::vector<double> diffs;
  for (std::size_t r = 0; r < rounds.size(); ++r) {
    const auto& behaviors = rounds[r];
    std::unordered_map<BehaviorId, double> returns;
    for (const auto& b : behaviors) returns[b.id] = b.true_return;
    const double hc = intra_cluster_variance(hierarchical_partition(behaviors, k), returns);
    const double pca = intra_cluster_variance(pca_kmeans_partition(behaviors, k, derive_seed(seed, {r})), returns);
    report.hierarchical_variance.push_back(hc);
    report.pca_variance.push_back(pca);
    if (hc < pca) ++report.hierarchical_wins;
    diffs.push_back(pca - hc);
  }
  report.paired = stats::paired_t(diffs);
  report.t_defined = !report.paired.degenerate;
  return report;
}

}  // namespace grlhf
