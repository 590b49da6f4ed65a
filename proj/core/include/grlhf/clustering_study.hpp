#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "grlhf/dendrogram.hpp"
#include "grlhf/envs.hpp"
#include "grlhf/stats.hpp"

namespace grlhf {

/// Mean, over clusters with at least two members, of the population variance
/// of member true returns. Singletons are left out; all-singleton partitions
/// score 0.
double intra_cluster_variance(const Partition& partition, const std::unordered_map<BehaviorId, double>& true_returns);

/// Resamples every behavior's (z-normalized) states to `steps` rows by linear
/// interpolation and flattens them row-major into one feature row each.
Eigen::MatrixXd resample_and_flatten(std::span<const Eigen::MatrixXd> series, std::size_t steps);

/// Projection onto the top `components` principal axes (rows are samples).
Eigen::MatrixXd pca_project(const Eigen::MatrixXd& features, std::size_t components);

struct KMeansResult {
  std::vector<std::size_t> labels;
  Eigen::MatrixXd centroids;
  double inertia = 0.0;
};

/// Lloyd's algorithm with k-means++ seeding, best of `restarts` by inertia.
KMeansResult kmeans(const Eigen::MatrixXd& points, std::size_t k, std::uint64_t seed, std::size_t restarts = 10,
                    std::size_t max_iterations = 300);

/// DTW + average-linkage dendrogram cut into k clusters.
Partition hierarchical_partition(std::span<const Behavior> behaviors, std::size_t k);
/// Resample to 25 steps, flatten, PCA to 2-D, k-means with the same k.
Partition pca_kmeans_partition(std::span<const Behavior> behaviors, std::size_t k, std::uint64_t seed);

struct StudyReport {
  std::vector<double> hierarchical_variance;
  std::vector<double> pca_variance;
  /// Paired test on (pca - hierarchical); positive t means lower variance
  /// inside hierarchical clusters.
  stats::TTest paired;
  bool t_defined = true;
  std::size_t hierarchical_wins = 0;
};

StudyReport clustering_quality_study(std::span<const std::vector<Behavior>> rounds, std::size_t k,
                                     std::uint64_t seed = 0);

}  // namespace grlhf
