#include "grlhf/policy.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <numeric>

#include <nlohmann/json.hpp>

#include "grlhf/error.hpp"
#include "grlhf/random.hpp"

namespace grlhf {
namespace {

constexpr std::uint64_t kActorTag = 0xac7;
constexpr std::uint64_t kCriticTag = 0xc217;
constexpr std::uint64_t kEpisodeTag = 0xe915;
constexpr std::uint64_t kSampleTag = 0x5a3;
constexpr std::uint64_t kBatchTag = 0xba7c;

Eigen::VectorXd as_vector(std::span<const double> x) {
  return Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
}

// Column-wise softmax.
Eigen::MatrixXd softmax(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p = (logits.rowwise() - logits.colwise().maxCoeff()).array().exp().matrix();
  p.array().rowwise() /= p.colwise().sum().array();
  return p;
}

Eigen::VectorXd clamped(const Eigen::VectorXd& log_std) { return log_std.cwiseMax(kMinLogStd).cwiseMin(kMaxLogStd); }

double gaussian_log_prob(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std) {
  double lp = 0.0;
  for (Eigen::Index d = 0; d < x.size(); ++d) {
    const double z = (x(d) - mean(d)) / std::exp(log_std(d));
    lp += -0.5 * z * z - log_std(d) - 0.5 * std::log(2.0 * std::numbers::pi);
  }
  return lp;
}

Action continuous_action(const Eigen::VectorXd& raw) {
  Action a;
  a.value = raw(0);
  return a;
}

}  // namespace

void PolicyConfig::validate(const EnvSpec& spec) const {
  if (!(gamma > 0 && gamma <= 1)) throw UsageError("gamma must be in (0,1]");
  if (gae_lambda < 0 || gae_lambda > 1) throw UsageError("gae_lambda must be in [0,1]");
  if (steps_per_round < spec.episode_len) throw UsageError("steps_per_round must cover at least one episode");
  if (minibatch_size == 0 || update_epochs == 0) throw UsageError("minibatch_size and update_epochs must be positive");
  if (!(learning_rate > 0)) throw UsageError("learning_rate must be positive");
  if (clip_ratio <= 0) throw UsageError("clip_ratio must be positive");
}

nlohmann::json to_json(const PolicyConfig& c) {
  return {{"hidden_layers", c.hidden_layers}, {"gamma", c.gamma},
          {"gae_lambda", c.gae_lambda},       {"steps_per_round", c.steps_per_round},
          {"clip_ratio", c.clip_ratio},       {"value_coeff", c.value_coeff},
          {"entropy_coeff", c.entropy_coeff}, {"learning_rate", c.learning_rate},
          {"update_epochs", c.update_epochs}, {"minibatch_size", c.minibatch_size},
          {"max_grad_norm", c.max_grad_norm}, {"normalize_rewards", c.normalize_rewards},
          {"seed", c.seed}};
}

PolicyConfig policy_config_from_json(const nlohmann::json& j) {
  PolicyConfig c;
  c.hidden_layers = j.value("hidden_layers", c.hidden_layers);
  c.gamma = j.value("gamma", c.gamma);
  c.gae_lambda = j.value("gae_lambda", c.gae_lambda);
  c.steps_per_round = j.value("steps_per_round", c.steps_per_round);
  c.clip_ratio = j.value("clip_ratio", c.clip_ratio);
  c.value_coeff = j.value("value_coeff", c.value_coeff);
  c.entropy_coeff = j.value("entropy_coeff", c.entropy_coeff);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.update_epochs = j.value("update_epochs", c.update_epochs);
  c.minibatch_size = j.value("minibatch_size", c.minibatch_size);
  c.max_grad_norm = j.value("max_grad_norm", c.max_grad_norm);
  c.normalize_rewards = j.value("normalize_rewards", c.normalize_rewards);
  c.seed = j.value("seed", c.seed);
  return c;
}

void RunningStat::update(const Eigen::VectorXd& x) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    count += 1.0;
    const double d = x(i) - mean;
    mean += d / count;
    m2 += d * (x(i) - mean);
  }
}

double RunningStat::stddev() const { return count < 2 ? 1.0 : std::sqrt(m2 / count); }

std::size_t Policy::parameter_count() const {
  return actor.parameter_count() + static_cast<std::size_t>(log_std.size()) + critic.parameter_count();
}

Eigen::VectorXd Policy::parameters() const {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(parameter_count()));
  const auto na = static_cast<Eigen::Index>(actor.parameter_count());
  flat.head(na) = actor.parameters();
  flat.segment(na, log_std.size()) = log_std;
  flat.tail(static_cast<Eigen::Index>(critic.parameter_count())) = critic.parameters();
  return flat;
}

void Policy::set_parameters(const Eigen::VectorXd& flat) {
  if (static_cast<std::size_t>(flat.size()) != parameter_count()) throw DimensionError("policy parameter size mismatch");
  const auto na = static_cast<Eigen::Index>(actor.parameter_count());
  actor.set_parameters(flat.head(na));
  log_std = clamped(flat.segment(na, log_std.size()));
  critic.set_parameters(flat.tail(static_cast<Eigen::Index>(critic.parameter_count())));
}

Eigen::VectorXd Policy::probabilities(std::span<const double> observation) const {
  if (spec.action_kind != ActionKind::Discrete) throw UsageError("probabilities are defined for discrete actions only");
  return softmax(actor.forward(as_vector(observation)));
}

Action Policy::sample(std::span<const double> observation, Rng& rng) const {
  if (spec.action_kind == ActionKind::Discrete) {
    const Eigen::VectorXd p = probabilities(observation);
    std::discrete_distribution<int> d(p.data(), p.data() + p.size());
    return Action{d(rng), 0.0};
  }
  const Eigen::VectorXd mean = actor.forward(as_vector(observation));
  const Eigen::VectorXd ls = clamped(log_std);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd raw(mean.size());
  for (Eigen::Index d = 0; d < raw.size(); ++d) raw(d) = mean(d) + std::exp(ls(d)) * n(rng);
  return continuous_action(raw);
}

Action Policy::greedy(std::span<const double> observation) const {
  const Eigen::VectorXd out = actor.forward(as_vector(observation));
  if (spec.action_kind == ActionKind::Discrete) {
    Eigen::Index best = 0;
    out.maxCoeff(&best);
    return Action{static_cast<int>(best), 0.0};
  }
  return continuous_action(out);
}

double Policy::value(std::span<const double> observation) const { return critic.forward(as_vector(observation))(0, 0); }

bool operator==(const Policy& a, const Policy& b) {
  auto same = [](const Eigen::VectorXd& x, const Eigen::VectorXd& y) { return x.size() == y.size() && x == y; };
  return a.spec == b.spec && a.actor == b.actor && a.critic == b.critic && same(a.log_std, b.log_std) &&
         same(a.optimizer.m, b.optimizer.m) && same(a.optimizer.v, b.optimizer.v) && a.optimizer.t == b.optimizer.t &&
         a.optimizer.learning_rate == b.optimizer.learning_rate && a.reward_stat == b.reward_stat &&
         a.updates == b.updates && a.seed == b.seed;
}

Policy init_policy(const EnvSpec& spec, const PolicyConfig& config, std::uint64_t seed) {
  config.validate(spec);
  Policy p;
  p.spec = spec;
  p.seed = seed;
  const bool discrete = spec.action_kind == ActionKind::Discrete;
  Rng actor_rng(derive_seed(seed, {kActorTag}));
  // A small output layer keeps the initial action distribution close to uniform.
  p.actor = Mlp(spec.obs_dim, config.hidden_layers, discrete ? spec.action_count : spec.action_dim, actor_rng, 0.01);
  p.log_std = discrete ? Eigen::VectorXd() : Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.action_dim));
  Rng critic_rng(derive_seed(seed, {kCriticTag}));
  p.critic = Mlp(spec.obs_dim, config.hidden_layers, 1, critic_rng);
  p.optimizer = Adam(p.parameter_count(), config.learning_rate);
  return p;
}

PolicyTrainStats train_policy(Policy& policy, const StepRewardFn& reward_fn, const PolicyConfig& config,
                              const PolicyProgressFn& progress) {
  const EnvSpec& spec = policy.spec;
  config.validate(spec);
  if (!reward_fn) throw UsageError("train_policy needs a reward function");
  const bool discrete = spec.action_kind == ActionKind::Discrete;
  const auto N = static_cast<Eigen::Index>(config.steps_per_round);
  const auto obs_dim = static_cast<Eigen::Index>(spec.obs_dim);
  const auto act_dim = static_cast<Eigen::Index>(spec.action_dim);
  const auto out_dim = static_cast<Eigen::Index>(policy.actor.output_dim());

  // Rollout buffers, one column per step.
  Eigen::MatrixXd obs(obs_dim, N);
  Eigen::MatrixXd encoded(act_dim, N);
  Eigen::MatrixXd raw_actions(discrete ? 1 : out_dim, N);
  Eigen::VectorXd logp_old(N), values(N), bootstrap = Eigen::VectorXd::Zero(N);
  std::vector<char> episode_end(static_cast<std::size_t>(N), 0), terminated(static_cast<std::size_t>(N), 0);

  Rng rng(derive_seed(policy.seed, {kSampleTag, policy.updates}));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::size_t episodes = 0;
  EnvState state = reset(spec, derive_seed(policy.seed, {kEpisodeTag, policy.updates, episodes}));
  const Eigen::VectorXd ls = clamped(policy.log_std);
  std::vector<double> enc(spec.action_dim);

  for (Eigen::Index t = 0; t < N; ++t) {
    const Eigen::VectorXd o = as_vector(state.observation);
    obs.col(t) = o;
    const Eigen::VectorXd out = policy.actor.forward(o);
    Action a;
    if (discrete) {
      const Eigen::VectorXd p = softmax(out);
      std::discrete_distribution<int> d(p.data(), p.data() + p.size());
      a.index = d(rng);
      raw_actions(0, t) = a.index;
      logp_old(t) = std::log(std::max(p(a.index), 1e-300));
    } else {
      Eigen::VectorXd raw(out.size());
      for (Eigen::Index d = 0; d < raw.size(); ++d) raw(d) = out(d) + std::exp(ls(d)) * normal(rng);
      raw_actions.col(t) = raw;
      logp_old(t) = gaussian_log_prob(raw, out, ls);
      a = continuous_action(raw);
    }
    values(t) = policy.critic.forward(o)(0, 0);
    encode_action(spec, a, enc);
    encoded.col(t) = as_vector(enc);
    const Transition tr = advance(spec, state, a);
    if (tr.done || t + 1 == N) {
      episode_end[static_cast<std::size_t>(t)] = 1;
      terminated[static_cast<std::size_t>(t)] = tr.terminated;
      if (!tr.terminated) bootstrap(t) = policy.critic.forward(as_vector(tr.state.observation))(0, 0);
    }
    if (tr.done) {
      ++episodes;
      state = reset(spec, derive_seed(policy.seed, {kEpisodeTag, policy.updates, episodes}));
    } else {
      state = tr.state;
    }
    if (progress && (t + 1) % 4096 == 0) progress(0.5 * static_cast<double>(t + 1) / static_cast<double>(N));
  }

  Eigen::MatrixXd inputs(N, obs_dim + act_dim);
  inputs.leftCols(obs_dim) = obs.transpose();
  inputs.rightCols(act_dim) = encoded.transpose();
  Eigen::VectorXd rewards = reward_fn(inputs);
  if (rewards.size() != N) throw DimensionError("reward function returned the wrong number of rewards");
  if (!rewards.allFinite()) throw TrainingError("reward function returned a non-finite value");
  PolicyTrainStats stats;
  stats.steps = static_cast<std::size_t>(N);
  stats.episodes = episodes;
  stats.mean_predicted_reward = rewards.mean();
  if (config.normalize_rewards) {
    policy.reward_stat.update(rewards);
    rewards = (rewards.array() - policy.reward_stat.mean) / (policy.reward_stat.stddev() + 1e-8);
  }

  // Generalized advantage estimation; horizon cut-offs bootstrap from the critic.
  Eigen::VectorXd adv(N);
  double next_adv = 0.0;
  for (Eigen::Index t = N - 1; t >= 0; --t) {
    const bool end = episode_end[static_cast<std::size_t>(t)];
    const double next_value = end ? (terminated[static_cast<std::size_t>(t)] ? 0.0 : bootstrap(t)) : values(t + 1);
    const double delta = rewards(t) + config.gamma * next_value - values(t);
    adv(t) = delta + config.gamma * config.gae_lambda * (end ? 0.0 : next_adv);
    next_adv = adv(t);
  }
  const Eigen::VectorXd returns = adv + values;

  const auto na = static_cast<Eigen::Index>(policy.actor.parameter_count());
  const auto nls = policy.log_std.size();
  const auto nc = static_cast<Eigen::Index>(policy.critic.parameter_count());
  Eigen::VectorXd grad(na + nls + nc);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(N));
  std::iota(order.begin(), order.end(), 0);
  Rng batch_rng(derive_seed(policy.seed, {kBatchTag, policy.updates}));
  const auto mb = static_cast<Eigen::Index>(config.minibatch_size);
  double loss_pi = 0.0, loss_v = 0.0, entropy_sum = 0.0;
  std::size_t batches = 0;

  for (std::size_t epoch = 0; epoch < config.update_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), batch_rng);
    for (Eigen::Index s = 0; s < N; s += mb) {
      const Eigen::Index B = std::min(mb, N - s);
      Eigen::MatrixXd o(obs_dim, B);
      Eigen::VectorXd a_adv(B), ret(B), lp_old(B);
      for (Eigen::Index j = 0; j < B; ++j) {
        const Eigen::Index t = order[static_cast<std::size_t>(s + j)];
        o.col(j) = obs.col(t);
        a_adv(j) = adv(t);
        ret(j) = returns(t);
        lp_old(j) = logp_old(t);
      }
      if (B > 1) {
        const double m = a_adv.mean();
        const double sd = std::sqrt((a_adv.array() - m).square().mean());
        a_adv = (a_adv.array() - m) / (sd + 1e-8);
      }
      grad.setZero();
      const double inv = 1.0 / static_cast<double>(B);

      Mlp::Cache actor_cache;
      const Eigen::MatrixXd out = policy.actor.forward(o, actor_cache);
      Eigen::MatrixXd g_out(out.rows(), B);
      const Eigen::VectorXd cur_ls = clamped(policy.log_std);
      Eigen::VectorXd g_ls = Eigen::VectorXd::Zero(nls);
      const Eigen::MatrixXd probs = discrete ? softmax(out) : Eigen::MatrixXd();
      for (Eigen::Index j = 0; j < B; ++j) {
        const Eigen::Index t = order[static_cast<std::size_t>(s + j)];
        double lp = 0.0, ent = 0.0;
        if (discrete) {
          const int k = static_cast<int>(raw_actions(0, t));
          lp = std::log(std::max(probs(k, j), 1e-300));
          for (Eigen::Index c = 0; c < probs.rows(); ++c) {
            if (probs(c, j) > 0) ent -= probs(c, j) * std::log(probs(c, j));
          }
        } else {
          lp = gaussian_log_prob(raw_actions.col(t), out.col(j), cur_ls);
          ent = cur_ls.sum() + 0.5 * static_cast<double>(nls) * (1.0 + std::log(2.0 * std::numbers::pi));
        }
        const double ratio = std::exp(lp - lp_old(j));
        const double A = a_adv(j);
        const double unclipped = ratio * A;
        const double clipped = std::clamp(ratio, 1.0 - config.clip_ratio, 1.0 + config.clip_ratio) * A;
        loss_pi += -std::min(unclipped, clipped) * inv;
        entropy_sum += ent * inv;
        // d(loss)/d(log prob): zero when the clipped branch is the active minimum.
        const bool active = !((A >= 0 && ratio > 1.0 + config.clip_ratio) || (A < 0 && ratio < 1.0 - config.clip_ratio));
        const double g_lp = active ? -ratio * A * inv : 0.0;
        if (discrete) {
          const int k = static_cast<int>(raw_actions(0, t));
          for (Eigen::Index c = 0; c < probs.rows(); ++c) {
            const double p = probs(c, j);
            const double dlp = (c == k ? 1.0 : 0.0) - p;
            const double dent = p > 0 ? -p * (std::log(p) + ent) : 0.0;
            g_out(c, j) = g_lp * dlp - config.entropy_coeff * inv * dent;
          }
        } else {
          for (Eigen::Index d = 0; d < out.rows(); ++d) {
            const double var = std::exp(2.0 * cur_ls(d));
            const double diff = raw_actions(d, t) - out(d, j);
            g_out(d, j) = g_lp * diff / var;
            g_ls(d) += g_lp * (diff * diff / var - 1.0) - config.entropy_coeff * inv;
          }
        }
      }
      policy.actor.backward(actor_cache, g_out, grad.head(na));
      grad.segment(na, nls) = g_ls;

      Mlp::Cache critic_cache;
      const Eigen::MatrixXd v = policy.critic.forward(o, critic_cache);
      const Eigen::RowVectorXd verr = v.row(0) - ret.transpose();
      loss_v += 0.5 * verr.squaredNorm() * inv;
      policy.critic.backward(critic_cache, config.value_coeff * inv * verr, grad.tail(nc));

      if (!grad.allFinite()) throw TrainingError("policy gradient is non-finite at update " + std::to_string(policy.updates));
      const double norm = grad.norm();
      if (config.max_grad_norm > 0 && norm > config.max_grad_norm) grad *= config.max_grad_norm / norm;
      policy.optimizer.learning_rate = config.learning_rate;
      policy.set_parameters(policy.parameters() + policy.optimizer.step(grad));
      ++batches;
    }
    if (progress) progress(0.5 + 0.5 * static_cast<double>(epoch + 1) / static_cast<double>(config.update_epochs));
  }
  if (!policy.actor.all_finite() || !policy.critic.all_finite() || !policy.log_std.allFinite()) {
    throw TrainingError("policy parameters became non-finite");
  }
  ++policy.updates;
  const double nb = static_cast<double>(std::max<std::size_t>(batches, 1));
  stats.policy_loss = loss_pi / nb;
  stats.value_loss = loss_v / nb;
  stats.mean_entropy = entropy_sum / nb;
  return stats;
}

EvalResult evaluate_policy(const Policy& policy, std::size_t episodes, std::uint64_t seed, EvalMode mode) {
  if (episodes == 0) throw UsageError("evaluation needs at least one episode");
  EvalResult r;
  for (std::size_t e = 0; e < episodes; ++e) {
    EnvState s = reset(policy.spec, derive_seed(seed, {e}));
    Rng rng(derive_seed(seed, {e, 0xac7}));
    double total = 0.0;
    while (!s.done) {
      const Action a = mode == EvalMode::Greedy ? policy.greedy(s.observation) : policy.sample(s.observation, rng);
      const StepResult step_result = step(policy.spec, s, a);
      total += step_result.true_reward;
      s = step_result.state;
    }
    r.returns.push_back(total);
  }
  const double n = static_cast<double>(episodes);
  r.mean = std::accumulate(r.returns.begin(), r.returns.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : r.returns) ss += (x - r.mean) * (x - r.mean);
  r.stddev = std::sqrt(ss / n);
  return r;
}

RolloutPolicy as_rollout_policy(const Policy& policy) {
  auto shared = std::make_shared<const Policy>(policy);
  RolloutPolicy r;
  r.obs_dim = policy.spec.obs_dim;
  r.action_kind = policy.spec.action_kind;
  r.action_count = policy.spec.action_count;
  r.act = [shared](std::span<const double> obs, Rng& rng) { return shared->sample(obs, rng); };
  return r;
}

Checkpoint to_checkpoint(const Policy& policy) {
  Checkpoint c;
  c.kind = CheckpointKind::Policy;
  c.networks.push_back(to_blob(policy.actor, policy.seed));
  c.networks.push_back(to_blob(policy.critic, 0));
  const auto& o = policy.optimizer;
  c.extras.push_back(policy.log_std);
  c.extras.push_back(o.m);
  c.extras.push_back(o.v);
  c.extras.push_back((Eigen::VectorXd(5) << static_cast<double>(o.t), o.learning_rate, o.beta1, o.beta2, o.eps).finished());
  c.extras.push_back((Eigen::VectorXd(4) << policy.reward_stat.count, policy.reward_stat.mean, policy.reward_stat.m2,
                      static_cast<double>(policy.updates))
                         .finished());
  return c;
}

Policy policy_from_checkpoint(const EnvSpec& spec, const Checkpoint& c) {
  if (c.kind != CheckpointKind::Policy || c.networks.size() != 2 || c.extras.size() != 5) {
    throw CorruptDataError("checkpoint does not hold a policy");
  }
  Policy p;
  p.spec = spec;
  p.seed = c.networks[0].seed;
  p.actor = mlp_from_blob(c.networks[0]);
  p.critic = mlp_from_blob(c.networks[1]);
  if (p.actor.input_dim() != spec.obs_dim || p.critic.input_dim() != spec.obs_dim) {
    throw CorruptDataError("policy checkpoint does not match the environment");
  }
  p.log_std = c.extras[0];
  const auto& opt = c.extras[3];
  const auto& stat = c.extras[4];
  if (opt.size() != 5 || stat.size() != 4) throw CorruptDataError("malformed policy checkpoint extras");
  p.optimizer = Adam(p.parameter_count(), opt(1), opt(2), opt(3), opt(4));
  if (c.extras[1].size() != p.optimizer.m.size() || c.extras[2].size() != p.optimizer.v.size()) {
    throw CorruptDataError("optimizer state size mismatch");
  }
  p.optimizer.m = c.extras[1];
  p.optimizer.v = c.extras[2];
  p.optimizer.t = static_cast<std::uint64_t>(opt(0));
  p.reward_stat = {stat(0), stat(1), stat(2)};
  p.updates = static_cast<std::uint64_t>(stat(3));
  return p;
}

}  // namespace grlhf
