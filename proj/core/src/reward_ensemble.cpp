#include "grlhf/reward_ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "grlhf/error.hpp"
#include "grlhf/random.hpp"

namespace grlhf {
namespace {

constexpr std::uint64_t kInitTag = 0x1a17;
constexpr std::uint64_t kShuffleTag = 0x5b0ff;
constexpr std::uint64_t kHoldoutTag = 0x401d;

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Cross-entropy of target y against sigmoid(d), written with softplus so that
// large |d| does not lose precision.
double pair_loss(double d, double y) { return y * softplus(-d) + (1.0 - y) * softplus(d); }

// Query data prepared once per call: transposed reward inputs per behavior and
// query endpoints as indices into that list.
struct Prepared {
  std::vector<Eigen::MatrixXd> inputs;  // input_dim x L
  struct Pair {
    std::size_t a, b;
    double target;
  };
  std::vector<Pair> pairs;
};

Prepared prepare(std::span<const PreferenceQuery> queries, const BehaviorIndex& behaviors, std::size_t input_dim) {
  Prepared p;
  std::unordered_map<BehaviorId, std::size_t> slot;
  auto slot_of = [&](BehaviorId id) {
    auto [it, inserted] = slot.try_emplace(id, p.inputs.size());
    if (inserted) {
      Eigen::MatrixXd x = behaviors.at(id).reward_inputs().transpose();
      if (static_cast<std::size_t>(x.rows()) != input_dim) throw DimensionError("behavior input width does not match the reward net");
      p.inputs.push_back(std::move(x));
    }
    return it->second;
  };
  for (const auto& q : queries) {
    const std::size_t a = slot_of(q.tau_i);
    const std::size_t b = slot_of(q.tau_j);
    if (p.inputs[a].cols() != p.inputs[b].cols()) throw UsageError("query segments must have equal length");
    p.pairs.push_back({a, b, target_of(q.outcome)});
  }
  return p;
}

// Loss (mean over `which`) and, optionally, its gradient accumulated into grad.
double batch_loss(const Mlp& net, const Prepared& data, std::span<const std::size_t> which, Eigen::VectorXd* grad) {
  if (which.empty()) return 0.0;
  Eigen::Index cols = 0;
  for (auto q : which) cols += data.inputs[data.pairs[q].a].cols() + data.inputs[data.pairs[q].b].cols();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(net.input_dim()), cols);
  Eigen::Index pos = 0;
  for (auto q : which) {
    for (auto s : {data.pairs[q].a, data.pairs[q].b}) {
      x.middleCols(pos, data.inputs[s].cols()) = data.inputs[s];
      pos += data.inputs[s].cols();
    }
  }
  Mlp::Cache cache;
  const Eigen::MatrixXd out = grad ? net.forward(x, cache) : net.forward(x);
  Eigen::MatrixXd grad_out;
  if (grad) grad_out.resize(1, cols);
  const double inv = 1.0 / static_cast<double>(which.size());
  double loss = 0.0;
  pos = 0;
  for (auto q : which) {
    const auto la = data.inputs[data.pairs[q].a].cols();
    const auto lb = data.inputs[data.pairs[q].b].cols();
    const double ra = out.middleCols(pos, la).sum();
    const double rb = out.middleCols(pos + la, lb).sum();
    const double d = ra - rb;
    const double y = data.pairs[q].target;
    loss += pair_loss(d, y);
    if (grad) {
      const double g = (sigmoid(d) - y) * inv;
      grad_out.middleCols(pos, la).setConstant(g);
      grad_out.middleCols(pos + la, lb).setConstant(-g);
    }
    pos += la + lb;
  }
  if (grad) net.backward(cache, grad_out, *grad);
  return loss * inv;
}

double full_loss(const Mlp& net, const Prepared& data, std::span<const std::size_t> which) {
  constexpr std::size_t kChunk = 256;
  double total = 0.0;
  for (std::size_t s = 0; s < which.size(); s += kChunk) {
    const auto part = which.subspan(s, std::min(kChunk, which.size() - s));
    total += batch_loss(net, data, part, nullptr) * static_cast<double>(part.size());
  }
  return which.empty() ? 0.0 : total / static_cast<double>(which.size());
}

double population_variance(const std::vector<double>& v) {
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

double disagreement_statistic(double ra, double rb, DisagreementMode mode) {
  return mode == DisagreementMode::BtProbability ? bt_probability_from_difference(ra - rb) : ra - rb;
}

std::string_view to_string(DisagreementMode m) {
  return m == DisagreementMode::BtProbability ? "bt_probability" : "return_difference";
}

DisagreementMode disagreement_from_string(std::string_view s) {
  if (s == "bt_probability") return DisagreementMode::BtProbability;
  if (s == "return_difference") return DisagreementMode::ReturnDifference;
  throw UsageError("unknown disagreement mode: " + std::string(s));
}

}  // namespace

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::IPreferred: return "i";
    case Outcome::JPreferred: return "j";
    case Outcome::Tie: return "tie";
  }
  return "tie";
}

Outcome outcome_from_string(std::string_view s) {
  if (s == "i") return Outcome::IPreferred;
  if (s == "j") return Outcome::JPreferred;
  if (s == "tie") return Outcome::Tie;
  throw CorruptDataError("unknown preference outcome: " + std::string(s));
}

void RewardNetConfig::validate() const {
  if (ensemble_size < 2) throw UsageError("ensemble_size must be at least 2");
  if (input_dim == 0) throw UsageError("reward net input_dim must be positive");
  if (batch_size == 0) throw UsageError("batch_size must be positive");
  if (!(learning_rate > 0)) throw UsageError("learning_rate must be positive");
  if (momentum < 0 || momentum >= 1) throw UsageError("momentum must be in [0,1)");
  if (holdout_fraction < 0 || holdout_fraction >= 1) throw UsageError("holdout_fraction must be in [0,1)");
}

nlohmann::json to_json(const RewardNetConfig& c) {
  return {{"hidden_layers", c.hidden_layers},
          {"ensemble_size", c.ensemble_size},
          {"input_dim", c.input_dim},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"epochs_per_round", c.epochs_per_round},
          {"batch_size", c.batch_size},
          {"holdout_fraction", c.holdout_fraction},
          {"min_queries_for_holdout", c.min_queries_for_holdout},
          {"patience", c.patience},
          {"seed", c.seed},
          {"disagreement", to_string(c.disagreement)}};
}

RewardNetConfig reward_config_from_json(const nlohmann::json& j) {
  RewardNetConfig c;
  c.hidden_layers = j.value("hidden_layers", c.hidden_layers);
  c.ensemble_size = j.value("ensemble_size", c.ensemble_size);
  c.input_dim = j.value("input_dim", c.input_dim);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.momentum = j.value("momentum", c.momentum);
  c.epochs_per_round = j.value("epochs_per_round", c.epochs_per_round);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.holdout_fraction = j.value("holdout_fraction", c.holdout_fraction);
  c.min_queries_for_holdout = j.value("min_queries_for_holdout", c.min_queries_for_holdout);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  if (j.contains("disagreement")) c.disagreement = disagreement_from_string(j.at("disagreement").get<std::string>());
  return c;
}

Eigen::VectorXd RewardNet::step_rewards(const Eigen::MatrixXd& inputs) const {
  return net.forward(inputs.transpose()).row(0).transpose();
}

double RewardNet::step_reward(std::span<const double> input) const {
  const Eigen::Map<const Eigen::VectorXd> x(input.data(), static_cast<Eigen::Index>(input.size()));
  return net.forward(x)(0, 0);
}

void BehaviorIndex::add(std::span<const Behavior> behaviors) {
  for (const auto& b : behaviors) map_[b.id] = &b;
}

const Behavior& BehaviorIndex::at(BehaviorId id) const {
  auto it = map_.find(id);
  if (it == map_.end()) throw UsageError("unknown behavior id " + std::to_string(id));
  return *it->second;
}

Ensemble init_ensemble(const RewardNetConfig& config) {
  config.validate();
  Ensemble e;
  for (std::size_t m = 0; m < config.ensemble_size; ++m) {
    const std::uint64_t seed = derive_seed(config.seed, {kInitTag, m});
    Rng rng(seed);
    e.members.push_back({Mlp(config.input_dim, config.hidden_layers, 1, rng), seed});
  }
  return e;
}

double predict_return(const RewardNet& member, const Behavior& behavior) {
  const Eigen::MatrixXd x = behavior.reward_inputs();
  if (static_cast<std::size_t>(x.cols()) != member.input_dim()) throw DimensionError("behavior input width does not match the reward net");
  return member.net.forward(x.transpose()).sum();
}

double bt_probability_from_difference(double d) {
  constexpr double lo = std::numeric_limits<double>::denorm_min();
  return std::clamp(sigmoid(d), lo, std::nextafter(1.0, 0.0));
}

double bt_probability(const RewardNet& member, const Behavior& a, const Behavior& b) {
  if (a.length() != b.length()) throw UsageError("compared segments must have equal length");
  return bt_probability_from_difference(predict_return(member, a) - predict_return(member, b));
}

double bt_loss(const RewardNet& member, std::span<const PreferenceQuery> queries, const BehaviorIndex& behaviors) {
  if (queries.empty()) throw UsageError("bt_loss needs at least one query");
  const Prepared data = prepare(queries, behaviors, member.input_dim());
  std::vector<std::size_t> all(data.pairs.size());
  std::iota(all.begin(), all.end(), 0);
  return full_loss(member.net, data, all);
}

LossAndGradient bt_loss_gradient(const RewardNet& member, std::span<const PreferenceQuery> queries,
                                 const BehaviorIndex& behaviors) {
  if (queries.empty()) throw UsageError("bt_loss needs at least one query");
  const Prepared data = prepare(queries, behaviors, member.input_dim());
  std::vector<std::size_t> all(data.pairs.size());
  std::iota(all.begin(), all.end(), 0);
  LossAndGradient out;
  out.gradient = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(member.net.parameter_count()));
  out.loss = batch_loss(member.net, data, all, &out.gradient);
  return out;
}

TrainReport train(Ensemble& ensemble, std::span<const PreferenceQuery> queries, const BehaviorIndex& behaviors,
                  const RewardNetConfig& config, const ProgressFn& progress) {
  if (queries.empty()) throw UsageError("training needs at least one query");
  if (ensemble.members.empty()) throw UsageError("empty ensemble");
  if (config.batch_size == 0) throw UsageError("batch_size must be positive");
  const Prepared data = prepare(queries, behaviors, ensemble.members.front().input_dim());

  // One holdout split shared by all members.
  std::vector<std::size_t> order(data.pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::size_t> holdout;
  if (config.holdout_fraction > 0 && order.size() >= config.min_queries_for_holdout) {
    Rng rng(derive_seed(config.seed, {kHoldoutTag, order.size()}));
    std::shuffle(order.begin(), order.end(), rng);
    const auto n = static_cast<std::size_t>(std::ceil(config.holdout_fraction * static_cast<double>(order.size())));
    holdout.assign(order.end() - static_cast<std::ptrdiff_t>(n), order.end());
    order.resize(order.size() - n);
    std::sort(order.begin(), order.end());
    std::sort(holdout.begin(), holdout.end());
  }
  const std::vector<std::size_t> train_set = order;

  TrainReport report;
  report.train_loss.resize(ensemble.size());
  if (!holdout.empty()) report.holdout_loss.resize(ensemble.size());
  report.best_epoch.assign(ensemble.size(), 0);
  const double total_steps = static_cast<double>(ensemble.size() * std::max<std::size_t>(config.epochs_per_round, 1));

  for (std::size_t m = 0; m < ensemble.size(); ++m) {
    Mlp& net = ensemble.members[m].net;
    MomentumSgd opt(net.parameter_count(), config.learning_rate, config.momentum);
    Rng rng(derive_seed(config.seed, {kShuffleTag, ensemble.members[m].member_seed, m}));
    std::vector<std::size_t> idx = train_set;
    Eigen::VectorXd grad(static_cast<Eigen::Index>(net.parameter_count()));
    Eigen::VectorXd best_params = net.parameters();
    double best_holdout = holdout.empty() ? 0.0 : full_loss(net, data, holdout);
    std::size_t since_best = 0;

    for (std::size_t epoch = 0; epoch < config.epochs_per_round; ++epoch) {
      std::shuffle(idx.begin(), idx.end(), rng);
      double epoch_loss = 0.0;
      for (std::size_t s = 0; s < idx.size(); s += config.batch_size) {
        const auto batch = std::span<const std::size_t>(idx).subspan(s, std::min(config.batch_size, idx.size() - s));
        grad.setZero();
        const double loss = batch_loss(net, data, batch, &grad);
        if (!std::isfinite(loss) || !grad.allFinite()) {
          throw TrainingError("reward member " + std::to_string(m) + " produced a non-finite loss at epoch " +
                              std::to_string(epoch));
        }
        epoch_loss += loss * static_cast<double>(batch.size());
        net.add_to_parameters(opt.step(grad));
      }
      report.train_loss[m].push_back(idx.empty() ? 0.0 : epoch_loss / static_cast<double>(idx.size()));
      if (!holdout.empty()) {
        const double h = full_loss(net, data, holdout);
        if (!std::isfinite(h)) throw TrainingError("reward member " + std::to_string(m) + " holdout loss is non-finite");
        report.holdout_loss[m].push_back(h);
        if (h < best_holdout) {
          best_holdout = h;
          best_params = net.parameters();
          report.best_epoch[m] = epoch + 1;
          since_best = 0;
        } else if (++since_best >= config.patience) {
          if (progress) progress(static_cast<double>(m * config.epochs_per_round + config.epochs_per_round) / total_steps);
          break;
        }
      } else {
        report.best_epoch[m] = epoch + 1;
      }
      if (progress) progress(static_cast<double>(m * config.epochs_per_round + epoch + 1) / total_steps);
    }
    if (!holdout.empty()) net.set_parameters(best_params);
    if (!net.all_finite()) throw TrainingError("reward member " + std::to_string(m) + " has non-finite parameters");
  }
  return report;
}

double pair_disagreement(const Ensemble& ensemble, const Behavior& a, const Behavior& b, DisagreementMode mode) {
  if (ensemble.members.empty()) throw UsageError("empty ensemble");
  if (a.length() != b.length()) throw UsageError("compared segments must have equal length");
  std::vector<double> stats;
  for (const auto& m : ensemble.members) {
    stats.push_back(disagreement_statistic(predict_return(m, a), predict_return(m, b), mode));
  }
  return population_variance(stats);
}

double mean_step_reward(const Ensemble& ensemble, std::span<const double> state, std::span<const double> action) {
  if (ensemble.members.empty()) throw UsageError("empty ensemble");
  Eigen::VectorXd x(static_cast<Eigen::Index>(state.size() + action.size()));
  std::copy(state.begin(), state.end(), x.data());
  std::copy(action.begin(), action.end(), x.data() + state.size());
  if (static_cast<std::size_t>(x.size()) != ensemble.members.front().input_dim()) throw DimensionError("state/action width does not match the reward net");
  double s = 0.0;
  for (const auto& m : ensemble.members) s += m.net.forward(x)(0, 0);
  return s / static_cast<double>(ensemble.size());
}

Eigen::VectorXd mean_step_rewards(const Ensemble& ensemble, const Eigen::MatrixXd& inputs) {
  if (ensemble.members.empty()) throw UsageError("empty ensemble");
  if (static_cast<std::size_t>(inputs.cols()) != ensemble.members.front().input_dim()) throw DimensionError("input width does not match the reward net");
  const Eigen::MatrixXd xt = inputs.transpose();
  Eigen::VectorXd s = Eigen::VectorXd::Zero(inputs.rows());
  for (const auto& m : ensemble.members) s += m.net.forward(xt).row(0).transpose();
  return s / static_cast<double>(ensemble.size());
}

DisagreementTable::DisagreementTable(const Ensemble& ensemble, std::span<const Behavior> behaviors, DisagreementMode mode) {
  if (ensemble.members.empty()) throw UsageError("empty ensemble");
  const auto n = static_cast<Eigen::Index>(behaviors.size());
  const auto k = static_cast<Eigen::Index>(ensemble.size());
  returns_.resize(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& b = behaviors[static_cast<std::size_t>(i)];
    if (b.length() != behaviors.front().length()) throw UsageError("round segments must have equal length");
    ids_.push_back(b.id);
    index_[b.id] = static_cast<std::size_t>(i);
    for (Eigen::Index m = 0; m < k; ++m) returns_(i, m) = predict_return(ensemble.members[static_cast<std::size_t>(m)], b);
  }
  values_ = Eigen::MatrixXd::Zero(n, n);
  std::vector<double> stats(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      for (Eigen::Index m = 0; m < k; ++m) {
        stats[static_cast<std::size_t>(m)] = disagreement_statistic(returns_(i, m), returns_(j, m), mode);
      }
      values_(i, j) = values_(j, i) = population_variance(stats);
    }
  }
}

std::size_t DisagreementTable::index_of(BehaviorId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw UsageError("behavior " + std::to_string(id) + " is not in this round");
  return it->second;
}

Checkpoint to_checkpoint(const Ensemble& ensemble) {
  Checkpoint c;
  c.kind = CheckpointKind::RewardEnsemble;
  for (const auto& m : ensemble.members) c.networks.push_back(to_blob(m.net, m.member_seed));
  return c;
}

Ensemble ensemble_from_checkpoint(const Checkpoint& checkpoint) {
  if (checkpoint.kind != CheckpointKind::RewardEnsemble) throw CorruptDataError("checkpoint does not hold a reward ensemble");
  Ensemble e;
  for (const auto& blob : checkpoint.networks) e.members.push_back({mlp_from_blob(blob), blob.seed});
  return e;
}

}  // namespace grlhf
