#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "grlhf/random.hpp"

namespace grlhf {

/// Fully connected network with tanh hidden layers and a linear output.
/// Batches are column-major: each column of the input is one sample.
class Mlp {
 public:
  struct Layer {
    Eigen::MatrixXd weight;  // out x in
    Eigen::VectorXd bias;
  };

  /// Per-layer activations recorded by the forward pass for backprop.
  struct Cache {
    std::vector<Eigen::MatrixXd> activations;  // [input, hidden..., output]
  };

  Mlp() = default;
  /// Glorot-uniform weights, zero biases; the output layer is scaled by `output_gain`.
  Mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t output_dim, Rng& rng,
      double output_gain = 1.0);

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::vector<std::size_t> layer_sizes() const;  // [input, hidden..., output]
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& input) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& input, Cache& cache) const;

  /// Adds dL/dparams (flat layout) for the batch in `cache` given dL/doutput.
  void backward(const Cache& cache, const Eigen::MatrixXd& grad_output, Eigen::Ref<Eigen::VectorXd> grad) const;

  std::size_t parameter_count() const;
  /// Flat layout: per layer, weight row-major then bias.
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& flat);
  void add_to_parameters(const Eigen::VectorXd& delta);
  bool all_finite() const;

  friend bool operator==(const Mlp& a, const Mlp& b);

 private:
  std::vector<Layer> layers_;
};

/// Classic momentum: v <- mu v - lr g; theta <- theta + v.
class MomentumSgd {
 public:
  MomentumSgd(std::size_t parameters, double learning_rate, double momentum);
  Eigen::VectorXd step(const Eigen::VectorXd& grad);

 private:
  double learning_rate_;
  double momentum_;
  Eigen::VectorXd velocity_;
};

class Adam {
 public:
  Adam() = default;
  Adam(std::size_t parameters, double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  Eigen::VectorXd step(const Eigen::VectorXd& grad);

  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::uint64_t t = 0;
};

}  // namespace grlhf
