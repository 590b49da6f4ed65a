#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "grlhf/envs.hpp"

namespace grlhf {

struct DtwOptions {
  /// Sakoe-Chiba band half-width in steps; unset means unconstrained.
  std::optional<std::size_t> band;
};

/// Classic DTW between two multivariate series (rows are time steps) with a
/// Euclidean local cost. The result is the minimal summed cost over monotone
/// warping paths from (0,0) to (n-1,m-1).
double dtw_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const DtwOptions& options = {});

/// DTW over the raw state sequences of two behaviors.
double dtw_distance(const Behavior& a, const Behavior& b, const DtwOptions& options = {});

/// Per-dimension z-normalization of states pooled over every step of every
/// behavior in the round. Constant dimensions map to 0.
std::vector<Eigen::MatrixXd> znormalize_states(std::span<const Behavior> behaviors);

class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  explicit DistanceMatrix(Eigen::MatrixXd values);

  std::size_t size() const { return static_cast<std::size_t>(values_.rows()); }
  double operator()(std::size_t i, std::size_t j) const {
    return values_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  const Eigen::MatrixXd& values() const { return values_; }

 private:
  Eigen::MatrixXd values_;
};

/// All pairwise DTW distances over the round's z-normalized states.
/// `threads` > 1 splits the pair list across worker threads.
DistanceMatrix distance_matrix(std::span<const Behavior> behaviors, const DtwOptions& options = {},
                               std::size_t threads = 1);

/// Same, over already prepared series.
DistanceMatrix distance_matrix(std::span<const Eigen::MatrixXd> series, const DtwOptions& options = {},
                               std::size_t threads = 1);

}  // namespace grlhf
