#include "grlhf/mlp.hpp"

#include <cmath>

#include "grlhf/error.hpp"

namespace grlhf {

Mlp::Mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t output_dim, Rng& rng,
         double output_gain) {
  if (input_dim == 0 || output_dim == 0) throw UsageError("network dimensions must be positive");
  std::vector<std::size_t> sizes{input_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(output_dim);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(sizes[l]);
    const auto out = static_cast<Eigen::Index>(sizes[l + 1]);
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    const double gain = l + 2 == sizes.size() ? output_gain : 1.0;
    std::uniform_real_distribution<double> u(-limit, limit);
    Layer layer;
    layer.weight.resize(out, in);
    // Filled row by row so the draw order matches the flat layout.
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = gain * u(rng);
    layer.bias = Eigen::VectorXd::Zero(out);
    layers_.push_back(std::move(layer));
  }
}

std::size_t Mlp::input_dim() const { return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weight.cols()); }
std::size_t Mlp::output_dim() const { return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.back().weight.rows()); }

std::vector<std::size_t> Mlp::layer_sizes() const {
  std::vector<std::size_t> s;
  if (layers_.empty()) return s;
  s.push_back(input_dim());
  for (const auto& l : layers_) s.push_back(static_cast<std::size_t>(l.weight.rows()));
  return s;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& input) const {
  if (static_cast<std::size_t>(input.rows()) != input_dim()) throw DimensionError("network input width mismatch");
  Eigen::MatrixXd a = input;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = layers_[l].weight * a;
    z.colwise() += layers_[l].bias;
    a = l + 1 < layers_.size() ? Eigen::MatrixXd(z.array().tanh()) : std::move(z);
  }
  return a;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& input, Cache& cache) const {
  if (static_cast<std::size_t>(input.rows()) != input_dim()) throw DimensionError("network input width mismatch");
  cache.activations.resize(layers_.size() + 1);
  cache.activations[0] = input;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = layers_[l].weight * cache.activations[l];
    z.colwise() += layers_[l].bias;
    cache.activations[l + 1] = l + 1 < layers_.size() ? Eigen::MatrixXd(z.array().tanh()) : std::move(z);
  }
  return cache.activations.back();
}

void Mlp::backward(const Cache& cache, const Eigen::MatrixXd& grad_output, Eigen::Ref<Eigen::VectorXd> grad) const {
  if (static_cast<std::size_t>(grad.size()) != parameter_count()) throw DimensionError("gradient buffer size mismatch");
  // Offsets of each layer's block in the flat layout.
  std::vector<Eigen::Index> offset(layers_.size());
  Eigen::Index pos = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    offset[l] = pos;
    pos += layers_[l].weight.size() + layers_[l].bias.size();
  }
  Eigen::MatrixXd delta = grad_output;  // dL/dz for the current layer
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& layer = layers_[li];
    const Eigen::MatrixXd gw = delta * cache.activations[li].transpose();
    const Eigen::Index rows = layer.weight.rows();
    const Eigen::Index cols = layer.weight.cols();
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gw_flat(
        grad.data() + offset[li], rows, cols);
    gw_flat += gw;
    grad.segment(offset[li] + rows * cols, rows) += delta.rowwise().sum();
    if (li == 0) break;
    const auto& a = cache.activations[li];  // tanh output of the previous layer
    delta = ((layer.weight.transpose() * delta).array() * (1.0 - a.array().square())).matrix();
  }
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

Eigen::VectorXd Mlp::parameters() const {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index pos = 0;
  for (const auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) flat(pos++) = l.weight(r, c);
    flat.segment(pos, l.bias.size()) = l.bias;
    pos += l.bias.size();
  }
  return flat;
}

void Mlp::set_parameters(const Eigen::VectorXd& flat) {
  if (static_cast<std::size_t>(flat.size()) != parameter_count()) throw DimensionError("parameter vector size mismatch");
  Eigen::Index pos = 0;
  for (auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = flat(pos++);
    l.bias = flat.segment(pos, l.bias.size());
    pos += l.bias.size();
  }
}

void Mlp::add_to_parameters(const Eigen::VectorXd& delta) { set_parameters(parameters() + delta); }

bool Mlp::all_finite() const {
  for (const auto& l : layers_) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

bool operator==(const Mlp& a, const Mlp& b) {
  if (a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t i = 0; i < a.layers_.size(); ++i) {
    const auto& x = a.layers_[i];
    const auto& y = b.layers_[i];
    if (x.weight.rows() != y.weight.rows() || x.weight.cols() != y.weight.cols()) return false;
    if (x.weight != y.weight || x.bias != y.bias) return false;
  }
  return true;
}

MomentumSgd::MomentumSgd(std::size_t parameters, double learning_rate, double momentum)
    : learning_rate_(learning_rate), momentum_(momentum), velocity_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(parameters))) {}

Eigen::VectorXd MomentumSgd::step(const Eigen::VectorXd& grad) {
  velocity_ = momentum_ * velocity_ - learning_rate_ * grad;
  return velocity_;
}

Adam::Adam(std::size_t parameters, double lr, double b1, double b2, double e)
    : learning_rate(lr), beta1(b1), beta2(b2), eps(e),
      m(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(parameters))),
      v(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(parameters))) {}

Eigen::VectorXd Adam::step(const Eigen::VectorXd& grad) {
  ++t;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  return (-learning_rate * (m / c1).array() / ((v / c2).array().sqrt() + eps)).matrix();
}

}  // namespace grlhf
