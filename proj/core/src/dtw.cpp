#include "grlhf/dtw.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "grlhf/error.hpp"

namespace grlhf {

double dtw_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const DtwOptions& options) {
  if (a.cols() != b.cols()) throw DimensionError("dtw: series have different dimensionality");
  const Eigen::Index n = a.rows();
  const Eigen::Index m = b.rows();
  if (n == 0 || m == 0) throw UsageError("dtw: empty series");

  constexpr double inf = std::numeric_limits<double>::infinity();
  Eigen::Index band = std::max(n, m);
  if (options.band) band = std::max<Eigen::Index>(static_cast<Eigen::Index>(*options.band), std::abs(n - m));

  // Two rolling rows of the accumulated-cost table.
  std::vector<double> prev(static_cast<std::size_t>(m), inf), cur(static_cast<std::size_t>(m), inf);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::fill(cur.begin(), cur.end(), inf);
    const Eigen::Index lo = std::max<Eigen::Index>(0, i - band);
    const Eigen::Index hi = std::min<Eigen::Index>(m - 1, i + band);
    for (Eigen::Index j = lo; j <= hi; ++j) {
      const double cost = (a.row(i) - b.row(j)).norm();
      double best;
      if (i == 0 && j == 0) {
        best = 0.0;
      } else {
        best = inf;
        if (i > 0) best = std::min(best, prev[static_cast<std::size_t>(j)]);
        if (j > 0) best = std::min(best, cur[static_cast<std::size_t>(j - 1)]);
        if (i > 0 && j > 0) best = std::min(best, prev[static_cast<std::size_t>(j - 1)]);
      }
      cur[static_cast<std::size_t>(j)] = best + cost;
    }
    std::swap(prev, cur);
  }
  return prev[static_cast<std::size_t>(m - 1)];
}

double dtw_distance(const Behavior& a, const Behavior& b, const DtwOptions& options) {
  return dtw_distance(a.states, b.states, options);
}

std::vector<Eigen::MatrixXd> znormalize_states(std::span<const Behavior> behaviors) {
  if (behaviors.empty()) return {};
  const Eigen::Index dims = behaviors.front().states.cols();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dims);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(dims);
  double count = 0.0;
  for (const auto& b : behaviors) {
    if (b.states.cols() != dims) throw DimensionError("behaviors in a round must share state width");
    sum += b.states.colwise().sum().transpose();
    count += static_cast<double>(b.states.rows());
  }
  const Eigen::VectorXd mean = sum / count;
  for (const auto& b : behaviors) {
    sq += (b.states.rowwise() - mean.transpose()).array().square().matrix().colwise().sum().transpose();
  }
  Eigen::VectorXd inv_std(dims);
  for (Eigen::Index d = 0; d < dims; ++d) {
    const double sd = std::sqrt(sq(d) / count);
    inv_std(d) = sd > 1e-12 ? 1.0 / sd : 0.0;
  }
  std::vector<Eigen::MatrixXd> out;
  out.reserve(behaviors.size());
  for (const auto& b : behaviors) {
    out.push_back(((b.states.rowwise() - mean.transpose()).array().rowwise() * inv_std.transpose().array()).matrix());
  }
  return out;
}

DistanceMatrix::DistanceMatrix(Eigen::MatrixXd values) : values_(std::move(values)) {
  if (values_.rows() != values_.cols()) throw UsageError("distance matrix must be square");
}

DistanceMatrix distance_matrix(std::span<const Eigen::MatrixXd> series, const DtwOptions& options,
                               std::size_t threads) {
  const auto n = static_cast<Eigen::Index>(series.size());
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  if (n < 2) return DistanceMatrix(std::move(d));

  std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
  pairs.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) pairs.emplace_back(i, j);

  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t k = begin; k < pairs.size(); k += stride) {
      const auto [i, j] = pairs[k];
      const double v = dtw_distance(series[static_cast<std::size_t>(i)], series[static_cast<std::size_t>(j)], options);
      d(i, j) = v;
      d(j, i) = v;
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, pairs.size()));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
  }
  return DistanceMatrix(std::move(d));
}

DistanceMatrix distance_matrix(std::span<const Behavior> behaviors, const DtwOptions& options, std::size_t threads) {
  if (behaviors.empty()) throw UsageError("distance_matrix: no behaviors");
  const auto series = znormalize_states(behaviors);
  return distance_matrix(std::span<const Eigen::MatrixXd>(series), options, threads);
}

}  // namespace grlhf
