#include <cmath>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "grlhf/error.hpp"
#include "grlhf/policy.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace grlhf;

namespace {

PolicyConfig quick_config() {
  PolicyConfig c;
  c.hidden_layers = {16, 16};
  c.steps_per_round = 1024;
  c.minibatch_size = 128;
  c.update_epochs = 3;
  return c;
}

}  // namespace

TEST(Mlp, ForwardMatchesScalarOracle) {
  Rng rng(1);
  const Mlp net(5, {7, 3}, 1, rng);
  EXPECT_EQ(net.layer_sizes(), (std::vector<std::size_t>{5, 7, 3, 1}));
  EXPECT_EQ(net.parameter_count(), 5u * 7 + 7 + 7 * 3 + 3 + 3 + 1);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 9);
  const Eigen::MatrixXd y = net.forward(x);
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    std::vector<double> col(x.col(c).data(), x.col(c).data() + 5);
    EXPECT_NEAR(y(0, c), oracle::forward(net, col), 1e-12);
  }
}

TEST(Mlp, BackwardMatchesFiniteDifferences) {
  Rng rng(2);
  Mlp net(3, {4, 4}, 2, rng);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 6);
  const Eigen::MatrixXd w = Eigen::MatrixXd::Random(2, 6);
  auto loss = [&](const Mlp& m) { return (m.forward(x).array() * w.array()).sum(); };
  Mlp::Cache cache;
  net.forward(x, cache);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.parameter_count()));
  net.backward(cache, w, g);
  const Eigen::VectorXd theta = net.parameters();
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    Eigen::VectorXd t = theta;
    t(k) += 1e-6;
    net.set_parameters(t);
    const double up = loss(net);
    t(k) -= 2e-6;
    net.set_parameters(t);
    const double fd = (up - loss(net)) / 2e-6;
    EXPECT_NEAR(g(k), fd, 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

TEST(Mlp, OptimizerSteps) {
  MomentumSgd sgd(2, 0.1, 0.9);
  const Eigen::Vector2d g(1.0, -2.0);
  const Eigen::VectorXd d1 = sgd.step(g);
  EXPECT_TRUE(d1.isApprox(Eigen::Vector2d(-0.1, 0.2)));
  const Eigen::VectorXd d2 = sgd.step(g);
  EXPECT_TRUE(d2.isApprox(Eigen::Vector2d(-0.19, 0.38)));
  Adam adam(2, 0.01);
  const Eigen::VectorXd a1 = adam.step(g);
  EXPECT_NEAR(a1(0), -0.01, 1e-9);
  EXPECT_NEAR(a1(1), 0.01, 1e-9);
}

TEST(Policy, InitDeterministicAndNearUniform) {
  const auto spec = EnvSpec::grid_world();
  const PolicyConfig c;
  const auto a = init_policy(spec, c, 5), b = init_policy(spec, c, 5);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == init_policy(spec, c, 6));
  Rng rng(0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const std::vector<double> obs{u(rng), u(rng), 1.0, 1.0, u(rng)};
    const auto p = a.probabilities(obs);
    ASSERT_EQ(p.size(), 4);
    EXPECT_NEAR(p.sum(), 1.0, 1e-12);
    EXPECT_LT(p.maxCoeff(), 0.4);
  }
}

TEST(Policy, ContinuousHeadBounds) {
  const auto p = init_policy(EnvSpec::mountain_car(), PolicyConfig{}, 1);
  ASSERT_EQ(p.log_std.size(), 1);
  EXPECT_GE(p.log_std(0), kMinLogStd);
  EXPECT_LE(p.log_std(0), kMaxLogStd);
  Rng rng(1);
  const std::vector<double> obs{-0.5, 0.0};
  const auto a = p.sample(obs, rng);
  EXPECT_TRUE(std::isfinite(a.value));
}

TEST(Policy, ConfigValidation) {
  PolicyConfig c;
  c.gamma = 0.0;
  EXPECT_THROW(c.validate(EnvSpec::grid_world()), UsageError);
  c = PolicyConfig{};
  c.steps_per_round = 10;
  EXPECT_THROW(c.validate(EnvSpec::grid_world()), UsageError);
  const auto back = policy_config_from_json(nlohmann::json::parse(to_json(PolicyConfig{}).dump()));
  EXPECT_EQ(back.steps_per_round, PolicyConfig{}.steps_per_round);
  EXPECT_EQ(back.hidden_layers, PolicyConfig{}.hidden_layers);
}

TEST(Policy, TrainingIsReproducible) {
  const auto spec = EnvSpec::grid_world();
  auto c = quick_config();
  auto reward = [&](const Eigen::MatrixXd& x) { return true_step_rewards(spec, x); };
  auto a = init_policy(spec, c, 3), b = init_policy(spec, c, 3);
  const auto sa = train_policy(a, reward, c);
  const auto sb = train_policy(b, reward, c);
  EXPECT_TRUE(a == b);
  EXPECT_EQ(sa.steps, c.steps_per_round);
  EXPECT_EQ(sa.policy_loss, sb.policy_loss);
  EXPECT_FALSE(a == init_policy(spec, c, 3));
}

TEST(Policy, RewardFunctionSeesModelInputs) {
  const auto spec = EnvSpec::mountain_car();
  auto c = quick_config();
  std::size_t rows = 0;
  auto p = init_policy(spec, c, 1);
  train_policy(p, [&](const Eigen::MatrixXd& x) {
    EXPECT_EQ(static_cast<std::size_t>(x.cols()), spec.reward_input_dim());
    rows += static_cast<std::size_t>(x.rows());
    return Eigen::VectorXd::Zero(x.rows()).eval();
  }, c);
  EXPECT_EQ(rows, c.steps_per_round);
}

TEST(Policy, NanRewardAborts) {
  const auto spec = EnvSpec::grid_world();
  auto c = quick_config();
  auto p = init_policy(spec, c, 1);
  EXPECT_THROW(train_policy(p, [](const Eigen::MatrixXd& x) {
    return Eigen::VectorXd::Constant(x.rows(), std::numeric_limits<double>::quiet_NaN()).eval();
  }, c), TrainingError);
}

TEST(Policy, ZeroRewardLeavesReturnStatisticallyUnchanged) {
  const auto spec = EnvSpec::grid_world();
  auto c = quick_config();
  c.steps_per_round = 4096;
  std::vector<double> before, after;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto p = init_policy(spec, c, seed);
    before.push_back(evaluate_policy(p, 40, 100 + seed).mean);
    train_policy(p, [](const Eigen::MatrixXd& x) { return Eigen::VectorXd::Zero(x.rows()).eval(); }, c);
    after.push_back(evaluate_policy(p, 40, 100 + seed).mean);
  }
  auto mean_std = [](const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::pair{m, std::sqrt(s / static_cast<double>(v.size()))};
  };
  const auto [mb, sb] = mean_std(before);
  const auto [ma, sa] = mean_std(after);
  EXPECT_LE(std::abs(ma - mb), sa + sb + 1e-9);
}

TEST(Policy, EvaluationArithmetic) {
  const auto spec = EnvSpec::grid_world();
  const auto p = init_policy(spec, PolicyConfig{}, 2);
  const auto one = evaluate_policy(p, 1, 4);
  ASSERT_EQ(one.returns.size(), 1u);
  EXPECT_EQ(one.mean, one.returns[0]);
  EXPECT_EQ(one.stddev, 0.0);
  const auto many = evaluate_policy(p, 25, 4);
  double s = 0;
  for (double r : many.returns) s += r;
  EXPECT_NEAR(many.mean, s / 25, 1e-12);
  EXPECT_EQ(many.returns, evaluate_policy(p, 25, 4).returns);
  EXPECT_EQ(many.returns[0], one.returns[0]);
  EXPECT_EQ(evaluate_policy(p, 5, 4, EvalMode::Greedy).returns, evaluate_policy(p, 5, 4, EvalMode::Greedy).returns);
  EXPECT_THROW(evaluate_policy(p, 0, 4), UsageError);
}

TEST(Policy, CheckpointRoundTrip) {
  for (auto spec : {EnvSpec::grid_world(), EnvSpec::mountain_car()}) {
    auto c = quick_config();
    auto p = init_policy(spec, c, 8);
    train_policy(p, [&](const Eigen::MatrixXd& x) { return true_step_rewards(spec, x); }, c);
    const auto back = policy_from_checkpoint(spec, decode_checkpoint(encode_checkpoint(to_checkpoint(p))));
    EXPECT_TRUE(back == p);
  }
}
