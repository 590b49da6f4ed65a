#include "grlhf/session.hpp"

#include <algorithm>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "grlhf/checkpoint.hpp"
#include "grlhf/dtw.hpp"
#include "grlhf/error.hpp"
#include "grlhf/random.hpp"

namespace grlhf {
namespace {

constexpr std::uint64_t kEnsembleTag = 0xe45;
constexpr std::uint64_t kPolicyTag = 0x9011c;
constexpr std::uint64_t kStoreTag = 0x5703e;
constexpr std::uint64_t kTrajectoryTag = 0x7ea7;
constexpr std::uint64_t kSegmentTag = 0x5e6;
constexpr std::uint64_t kEvalTag = 0xe7a1;
constexpr std::uint64_t kSuggestTag = 0x5a9;
constexpr int kSnapshotVersion = 1;

std::filesystem::path round_dir(const std::filesystem::path& dir, std::size_t round) {
  char name[16];
  std::snprintf(name, sizeof(name), "%03zu", round);
  return dir / "rounds" / name;
}

nlohmann::json to_json(const GroupSuggestOptions& o) {
  return {{"max_group_size", o.max_group_size},
          {"singleton_pairs_last", o.singleton_pairs_last},
          {"max_candidate_pairs", o.max_candidate_pairs},
          {"intra_mode", o.intra_mode == IntraMode::Pooled ? "pooled" : "mean_of_groups"},
          {"seed", o.seed}};
}

GroupSuggestOptions suggest_options_from_json(const nlohmann::json& j) {
  GroupSuggestOptions o;
  o.max_group_size = j.value("max_group_size", o.max_group_size);
  o.singleton_pairs_last = j.value("singleton_pairs_last", o.singleton_pairs_last);
  o.max_candidate_pairs = j.value("max_candidate_pairs", o.max_candidate_pairs);
  const auto mode = j.value("intra_mode", std::string("mean_of_groups"));
  if (mode == "pooled") o.intra_mode = IntraMode::Pooled;
  else if (mode == "mean_of_groups") o.intra_mode = IntraMode::MeanOfGroups;
  else throw UsageError("unknown intra_mode: " + mode);
  o.seed = j.value("seed", o.seed);
  return o;
}

StoreOptions store_options(const SessionConfig& c) {
  return {c.label_mode, c.preference_budget, derive_seed(c.seed, {kStoreTag})};
}

nlohmann::json read_json(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptDataError(path.string() + ": " + e.what());
  }
}

}  // namespace

SessionConfig SessionConfig::resolved() const {
  SessionConfig c = *this;
  if (c.behaviors_per_round < 2) throw UsageError("behaviors_per_round must be at least 2");
  if (c.behaviors_per_round >= static_cast<std::size_t>(kRoundIdStride)) throw UsageError("behaviors_per_round is too large");
  if (c.rounds == 0) throw UsageError("rounds must be positive");
  if (c.eval_episodes == 0) throw UsageError("eval_episodes must be positive");
  if (c.segment_len == 0) c.segment_len = c.env.default_segment_len;
  if (c.segment_len == 0 || c.segment_len > c.env.episode_len) throw UsageError("segment_len must be in [1, episode_len]");
  if (c.reward.input_dim == 0) c.reward.input_dim = c.env.reward_input_dim();
  if (c.reward.input_dim != c.env.reward_input_dim()) throw DimensionError("reward input_dim does not match the environment");
  if (c.min_trajectories == 0) c.min_trajectories = std::max<std::size_t>(10, c.behaviors_per_round / 5);
  if (c.max_trajectories < c.min_trajectories) throw UsageError("max_trajectories must be at least min_trajectories");
  if (c.suggest.max_group_size == 0) throw UsageError("max_group_size must be positive");
  if (c.threads == 0) c.threads = 1;
  c.reward.validate();
  c.policy.validate(c.env);
  return c;
}

nlohmann::json to_json(const SessionConfig& c) {
  nlohmann::json j{{"env", to_json(c.env)},
                   {"behaviors_per_round", c.behaviors_per_round},
                   {"segment_len", c.segment_len},
                   {"rounds", c.rounds},
                   {"reward", to_json(c.reward)},
                   {"policy", to_json(c.policy)},
                   {"eval_episodes", c.eval_episodes},
                   {"min_trajectories", c.min_trajectories},
                   {"max_trajectories", c.max_trajectories},
                   {"label_mode", c.label_mode == LabelMode::Cartesian ? "cartesian" : "max_pairs"},
                   {"suggest", to_json(c.suggest)},
                   {"threads", c.threads},
                   {"seed", c.seed}};
  j["preference_budget"] = c.preference_budget ? nlohmann::json(*c.preference_budget) : nlohmann::json(nullptr);
  j["dtw_band"] = c.dtw_band ? nlohmann::json(*c.dtw_band) : nlohmann::json(nullptr);
  return j;
}

SessionConfig session_config_from_json(const nlohmann::json& j) {
  SessionConfig c;
  if (j.contains("env")) {
    const auto& e = j.at("env");
    c.env = e.is_string() ? EnvSpec::from_name(env_name_from_string(e.get<std::string>())) : env_spec_from_json(e);
  }
  c.behaviors_per_round = j.value("behaviors_per_round", c.behaviors_per_round);
  c.segment_len = j.value("segment_len", c.segment_len);
  c.rounds = j.value("rounds", c.rounds);
  if (j.contains("reward")) c.reward = reward_config_from_json(j.at("reward"));
  if (j.contains("policy")) c.policy = policy_config_from_json(j.at("policy"));
  c.eval_episodes = j.value("eval_episodes", c.eval_episodes);
  c.min_trajectories = j.value("min_trajectories", c.min_trajectories);
  c.max_trajectories = j.value("max_trajectories", c.max_trajectories);
  if (j.contains("preference_budget") && !j.at("preference_budget").is_null()) {
    c.preference_budget = j.at("preference_budget").get<std::size_t>();
  }
  const auto mode = j.value("label_mode", std::string("max_pairs"));
  if (mode == "cartesian") c.label_mode = LabelMode::Cartesian;
  else if (mode == "max_pairs") c.label_mode = LabelMode::MaxPairs;
  else throw UsageError("unknown label_mode: " + mode);
  if (j.contains("suggest")) c.suggest = suggest_options_from_json(j.at("suggest"));
  if (j.contains("dtw_band") && !j.at("dtw_band").is_null()) c.dtw_band = j.at("dtw_band").get<std::size_t>();
  c.threads = j.value("threads", c.threads);
  c.seed = j.value("seed", c.seed);
  return c;
}

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::CollectingFeedback: return "collecting_feedback";
    case Phase::Training: return "training";
    case Phase::Idle: return "idle";
    case Phase::Finished: return "finished";
  }
  return "idle";
}

Phase phase_from_string(std::string_view s) {
  if (s == "collecting_feedback") return Phase::CollectingFeedback;
  if (s == "training") return Phase::Training;
  if (s == "idle") return Phase::Idle;
  if (s == "finished") return Phase::Finished;
  throw CorruptDataError("unknown phase: " + std::string(s));
}

nlohmann::json to_json(const RoundMetrics& m) {
  return {{"round", m.round_index},
          {"eval_mean", m.eval_mean},
          {"eval_std", m.eval_std},
          {"comparisons", m.comparisons},
          {"total_comparisons", m.total_comparisons},
          {"total_queries", m.total_queries},
          {"reward_retrained", m.reward_retrained},
          {"policy_trained", m.policy_trained},
          {"trajectories", m.trajectories}};
}

RoundMetrics round_metrics_from_json(const nlohmann::json& j) {
  RoundMetrics m;
  m.round_index = j.at("round").get<std::size_t>();
  m.eval_mean = j.at("eval_mean").get<double>();
  m.eval_std = j.at("eval_std").get<double>();
  m.comparisons = j.at("comparisons").get<std::size_t>();
  m.total_comparisons = j.at("total_comparisons").get<std::size_t>();
  m.total_queries = j.at("total_queries").get<std::size_t>();
  m.reward_retrained = j.at("reward_retrained").get<bool>();
  m.policy_trained = j.at("policy_trained").get<bool>();
  m.trajectories = j.value("trajectories", std::size_t{0});
  return m;
}

Session Session::start(const SessionConfig& config) {
  Session s;
  s.config_ = config.resolved();
  RewardNetConfig rc = s.config_.reward;
  rc.seed = derive_seed(s.config_.seed, {kEnsembleTag, 0});
  s.ensemble_ = init_ensemble(rc);
  s.policy_ = init_policy(s.config_.env, s.config_.policy, derive_seed(s.config_.seed, {kPolicyTag}));
  s.store_ = PreferenceStore(store_options(s.config_));
  s.sample_round(s.policy_, 0, nullptr);
  s.refresh_table();
  return s;
}

void Session::sample_round(const Policy& behavior_policy, std::size_t round, std::size_t* trajectories) {
  const auto& c = config_;
  const std::size_t L = c.effective_segment_len();
  const RolloutPolicy rp = as_rollout_policy(behavior_policy);
  std::vector<Trajectory> trajs;
  while (trajs.size() < c.max_trajectories) {
    trajs.push_back(rollout(c.env, rp, derive_seed(c.seed, {kTrajectoryTag, round, trajs.size()})));
    if (trajs.size() >= c.min_trajectories && segment_capacity(trajs, L) >= c.behaviors_per_round) break;
  }
  const std::size_t count = std::min(c.behaviors_per_round, segment_capacity(trajs, L));
  if (count < 2) {
    throw TrainingError("round " + std::to_string(round) + ": fewer than two segments of length " + std::to_string(L) +
                        " in " + std::to_string(trajs.size()) + " trajectories");
  }
  std::vector<Behavior> behaviors = sample_segments(trajs, L, count, derive_seed(c.seed, {kSegmentTag, round}), round);
  DtwOptions opts;
  opts.band = c.dtw_band;
  const DistanceMatrix dm = distance_matrix(behaviors, opts, c.threads);
  std::vector<BehaviorId> ids;
  for (const auto& b : behaviors) ids.push_back(b.id);
  dendrograms_.push_back(agglomerative_cluster(dm, ids));
  rounds_.push_back(std::move(behaviors));
  if (trajectories) *trajectories = trajs.size();
}

void Session::refresh_table() { table_.emplace(ensemble_, rounds_.back(), config_.reward.disagreement); }

const Behavior* Session::find_behavior(BehaviorId id) const {
  if (id < 0) return nullptr;
  const auto r = static_cast<std::size_t>(id / kRoundIdStride);
  const auto i = static_cast<std::size_t>(id % kRoundIdStride);
  if (r >= rounds_.size() || i >= rounds_[r].size() || rounds_[r][i].id != id) return nullptr;
  return &rounds_[r][i];
}

bool Session::in_current_round(BehaviorId id) const {
  const Behavior* b = find_behavior(id);
  return b && b->round_index == round_;
}

std::vector<PreferenceQuery> Session::submit_comparison(GroupComparison comparison) {
  if (phase_ != Phase::CollectingFeedback) throw UsageError("session is not collecting feedback");
  for (const auto* g : {&comparison.group_1, &comparison.group_2}) {
    for (auto id : *g) {
      if (!in_current_round(id)) throw UsageError("behavior " + std::to_string(id) + " is not in the current round");
    }
  }
  comparison.round_index = round_;
  return store_.record(std::move(comparison));
}

BehaviorPair Session::suggest_pair() const { return grlhf::suggest_pair(*table_, store_.compared_pairs()); }

GroupSuggestion Session::suggest_groups() const {
  GroupSuggestOptions o = config_.suggest;
  o.seed = derive_seed(config_.seed, {kSuggestTag, o.seed, round_});
  return grlhf::suggest_groups(*table_, dendrogram(), store_.compared_group_keys(), o);
}

void Session::advance_round(const SessionProgressFn& progress) {
  if (phase_ != Phase::CollectingFeedback) throw UsageError("advance_round needs the collecting_feedback phase");
  auto report = [&](std::string_view stage, double f) {
    if (progress) progress(stage, std::clamp(f, 0.0, 1.0));
  };
  Session next = *this;
  next.phase_ = Phase::Training;
  const std::size_t round = round_;
  RoundMetrics m;
  m.round_index = round;
  m.comparisons = store_.history(round).size();

  report("reward", 0.0);
  if (store_.queries().size() > trained_queries_) {
    RewardNetConfig rc = config_.reward;
    rc.seed = derive_seed(config_.seed, {kEnsembleTag, round + 1});
    next.ensemble_ = init_ensemble(rc);
    BehaviorIndex index;
    for (const auto& r : next.rounds_) index.add(r);
    train(next.ensemble_, next.store_.queries(), index, rc, [&](double f) { report("reward", 0.4 * f); });
    next.ensemble_trained_ = true;
    next.trained_queries_ = store_.queries().size();
    m.reward_retrained = true;
  }
  report("policy", 0.4);
  if (next.ensemble_trained_) {
    const Ensemble& ensemble = next.ensemble_;
    train_policy(
        next.policy_, [&ensemble](const Eigen::MatrixXd& x) { return mean_step_rewards(ensemble, x); }, config_.policy,
        [&](double f) { report("policy", 0.4 + 0.45 * f); });
    m.policy_trained = true;
  }
  report("evaluation", 0.85);
  const EvalResult eval = evaluate_policy(next.policy_, config_.eval_episodes, derive_seed(config_.seed, {kEvalTag, round}));
  m.eval_mean = eval.mean;
  m.eval_std = eval.stddev;
  m.total_comparisons = store_.comparisons().size();
  m.total_queries = store_.queries().size();

  report("behaviors", 0.9);
  if (round + 1 >= config_.rounds) {
    next.phase_ = Phase::Finished;
  } else {
    next.sample_round(next.policy_, round + 1, &m.trajectories);
    next.round_ = round + 1;
    next.phase_ = Phase::CollectingFeedback;
  }
  next.metrics_.push_back(m);
  next.refresh_table();
  *this = std::move(next);
  report("done", 1.0);
}

std::vector<HistoryEdge> Session::history_edges() const {
  std::vector<HistoryEdge> edges;
  for (const auto& c : store_.comparisons()) {
    if (c.round_index != round_) continue;
    const HistoryVerdict v = c.verdict == Verdict::G1Preferred   ? HistoryVerdict::FirstPreferred
                             : c.verdict == Verdict::G2Preferred ? HistoryVerdict::SecondPreferred
                                                                 : HistoryVerdict::Skip;
    bool any = false;
    for (const auto& q : store_.queries()) {
      if (q.source_comparison != c.id) continue;
      edges.push_back({q.tau_i, q.tau_j, v});
      any = true;
    }
    if (!any) {
      // Skips (and truncated comparisons) still show which groups were looked at.
      const auto& big = c.group_1.size() >= c.group_2.size() ? c.group_1 : c.group_2;
      const auto& small = c.group_1.size() >= c.group_2.size() ? c.group_2 : c.group_1;
      const bool first_big = &big == &c.group_1;
      for (std::size_t t = 0; t < big.size(); ++t) {
        const auto x = big[t];
        const auto y = small[t % small.size()];
        edges.push_back(first_big ? HistoryEdge{x, y, v} : HistoryEdge{y, x, v});
      }
    }
  }
  return edges;
}

LayoutScene Session::scene(std::span<const std::pair<BehaviorId, BehaviorId>> suggestions, const LayoutParams& params) const {
  const auto history = history_edges();
  return build_scene(dendrogram(), suggestions, history, params);
}

void Session::snapshot(const std::filesystem::path& dir) const {
  if (phase_ == Phase::Training) throw UsageError("cannot snapshot while training");
  write_file(dir / "config.json", to_json(config_).dump(2) + "\n");
  const nlohmann::json state{{"version", kSnapshotVersion},
                             {"round_index", round_},
                             {"phase", to_string(phase_)},
                             {"rounds_sampled", rounds_.size()},
                             {"ensemble_trained", ensemble_trained_},
                             {"trained_queries", trained_queries_}};
  write_file(dir / "session.json", state.dump(2) + "\n");
  for (std::size_t r = 0; r < rounds_.size(); ++r) {
    const auto rd = round_dir(dir, r);
    write_file(rd / "behaviors.jsonl", behaviors_to_jsonl(rounds_[r]));
    write_file(rd / "dendrogram.json", dendrograms_[r].to_json().dump() + "\n");
  }
  for (const auto& m : metrics_) write_file(round_dir(dir, m.round_index) / "metrics.json", to_json(m).dump(2) + "\n");
  write_file(dir / "store.log", store_.to_jsonl());
  write_checkpoint(dir / "checkpoints" / "ensemble.bin", to_checkpoint(ensemble_));
  write_file(dir / "checkpoints" / "ensemble.json", to_json(config_.reward).dump(2) + "\n");
  write_checkpoint(dir / "checkpoints" / "policy.bin", to_checkpoint(policy_));
  write_file(dir / "checkpoints" / "policy.json", to_json(config_.policy).dump(2) + "\n");
}

Session Session::resume(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw CorruptDataError("no session directory at " + dir.string());
  Session s;
  try {
    s.config_ = session_config_from_json(read_json(dir / "config.json")).resolved();
  } catch (const UsageError& e) {
    throw CorruptDataError(std::string("invalid session config: ") + e.what());
  }
  const auto state = read_json(dir / "session.json");
  try {
    if (state.at("version").get<int>() != kSnapshotVersion) throw CorruptDataError("unsupported snapshot version");
    s.round_ = state.at("round_index").get<std::size_t>();
    s.phase_ = phase_from_string(state.at("phase").get<std::string>());
    s.ensemble_trained_ = state.at("ensemble_trained").get<bool>();
    s.trained_queries_ = state.at("trained_queries").get<std::size_t>();
    const auto sampled = state.at("rounds_sampled").get<std::size_t>();
    if (sampled != s.round_ + 1) throw CorruptDataError("snapshot round count is inconsistent");
    for (std::size_t r = 0; r < sampled; ++r) {
      const auto rd = round_dir(dir, r);
      s.rounds_.push_back(behaviors_from_jsonl(read_file(rd / "behaviors.jsonl")));
      s.dendrograms_.push_back(Dendrogram::from_json(read_json(rd / "dendrogram.json")));
      if (s.dendrograms_.back().leaf_count() != s.rounds_.back().size()) {
        throw CorruptDataError("dendrogram of round " + std::to_string(r) + " does not match its behaviors");
      }
      if (std::filesystem::exists(rd / "metrics.json")) {
        s.metrics_.push_back(round_metrics_from_json(read_json(rd / "metrics.json")));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptDataError(std::string("malformed session snapshot: ") + e.what());
  }
  s.store_ = PreferenceStore::from_jsonl(read_file(dir / "store.log"), store_options(s.config_));
  s.ensemble_ = ensemble_from_checkpoint(read_checkpoint(dir / "checkpoints" / "ensemble.bin"));
  s.policy_ = policy_from_checkpoint(s.config_.env, read_checkpoint(dir / "checkpoints" / "policy.bin"));
  s.refresh_table();
  return s;
}

}  // namespace grlhf
