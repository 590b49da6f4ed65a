#include "grlhf/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "grlhf/error.hpp"

namespace grlhf {
namespace {

using nlohmann::json;

constexpr double kGridScale = gridworld::kSize - 1;
constexpr double kGridMaxDistance = 2.0 * (gridworld::kSize - 1);

int decode_cell(double v) { return static_cast<int>(std::lround(v * kGridScale)); }

std::vector<double> grid_observation(int x, int y) {
  const int dist = std::abs(gridworld::kGoalX - x) + std::abs(gridworld::kGoalY - y);
  return {x / kGridScale, y / kGridScale, gridworld::kGoalX / kGridScale,
          gridworld::kGoalY / kGridScale, dist / kGridMaxDistance};
}

struct GridMove {
  int x, y;
};

GridMove grid_move(int x, int y, int action) {
  switch (action) {
    case 0: ++y; break;
    case 1: ++x; break;
    case 2: --y; break;
    case 3: --x; break;
    default: throw UsageError("gridworld action must be in [0,4), got " + std::to_string(action));
  }
  return {std::clamp(x, 0, gridworld::kSize - 1), std::clamp(y, 0, gridworld::kSize - 1)};
}

struct CarMove {
  double position, velocity;
};

double clip_force(double a) { return std::clamp(a, -1.0, 1.0); }

CarMove car_move(double position, double velocity, double force) {
  using namespace mountaincar;
  velocity += force * kPower - 0.0025 * std::cos(3.0 * position);
  velocity = std::clamp(velocity, -kMaxSpeed, kMaxSpeed);
  position += velocity;
  position = std::clamp(position, kMinPosition, kMaxPosition);
  if (position == kMinPosition && velocity < 0) velocity = 0.0;
  return {position, velocity};
}

void check_matrix_rows(const Eigen::MatrixXd& m, Eigen::Index cols, const char* what) {
  if (m.cols() != cols) {
    throw DimensionError(std::string(what) + ": expected width " + std::to_string(cols) + ", got " +
                         std::to_string(m.cols()));
  }
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const auto& row = j.at(static_cast<std::size_t>(r));
    if (static_cast<Eigen::Index>(row.size()) != cols) throw CorruptDataError("ragged matrix row");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

Eigen::Index width_of(const json& rows) {
  return rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size());
}

}  // namespace

std::string_view to_string(EnvName name) {
  switch (name) {
    case EnvName::GridWorld: return "gridworld";
    case EnvName::MountainCar: return "mountaincar";
  }
  return "unknown";
}

EnvName env_name_from_string(std::string_view s) {
  if (s == "gridworld" || s == "GridWorld") return EnvName::GridWorld;
  if (s == "mountaincar" || s == "MountainCar") return EnvName::MountainCar;
  throw UsageError("unknown environment '" + std::string(s) + "'");
}

EnvSpec EnvSpec::grid_world() {
  EnvSpec s;
  s.name = EnvName::GridWorld;
  s.obs_dim = 5;
  s.action_dim = 4;
  s.action_count = 4;
  s.action_kind = ActionKind::Discrete;
  s.episode_len = 64;
  s.default_segment_len = 10;
  return s;
}

EnvSpec EnvSpec::mountain_car() {
  EnvSpec s;
  s.name = EnvName::MountainCar;
  s.obs_dim = 2;
  s.action_dim = 1;
  s.action_count = 0;
  s.action_kind = ActionKind::Continuous;
  s.episode_len = 200;
  s.default_segment_len = 25;
  return s;
}

EnvSpec EnvSpec::from_name(EnvName name) {
  return name == EnvName::GridWorld ? grid_world() : mountain_car();
}

double mountaincar::hill_height(double position) { return 0.45 * std::sin(3.0 * position) + 0.55; }

EnvState reset(const EnvSpec& spec, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x5e5e7}));
  EnvState s;
  s.seed = seed;
  if (spec.name == EnvName::GridWorld) {
    constexpr int cells = gridworld::kSize * gridworld::kSize - 1;
    int cell = std::uniform_int_distribution<int>(0, cells - 1)(rng);
    const int goal_cell = gridworld::kGoalY * gridworld::kSize + gridworld::kGoalX;
    if (cell >= goal_cell) ++cell;
    s.observation = grid_observation(cell % gridworld::kSize, cell / gridworld::kSize);
  } else {
    const double p = std::uniform_real_distribution<double>(-0.6, -0.4)(rng);
    s.observation = {p, 0.0};
  }
  return s;
}

Transition advance(const EnvSpec& spec, const EnvState& state, const Action& action) {
  if (state.done) throw UsageError("step called on a finished episode");
  if (state.observation.size() != spec.obs_dim) throw DimensionError("observation width does not match spec");
  Transition t;
  t.state.seed = state.seed;
  t.state.step_index = state.step_index + 1;
  if (spec.name == EnvName::GridWorld) {
    const auto next = grid_move(decode_cell(state.observation[0]), decode_cell(state.observation[1]), action.index);
    t.state.observation = grid_observation(next.x, next.y);
    t.terminated = next.x == gridworld::kGoalX && next.y == gridworld::kGoalY;
  } else {
    const auto next = car_move(state.observation[0], state.observation[1], clip_force(action.value));
    t.state.observation = {next.position, next.velocity};
    t.terminated = next.position >= mountaincar::kGoalPosition;
  }
  t.done = t.terminated || t.state.step_index >= spec.episode_len;
  t.state.done = t.done;
  return t;
}

StepResult step(const EnvSpec& spec, const EnvState& state, const Action& action) {
  Transition t = advance(spec, state, action);
  StepResult r;
  if (spec.name == EnvName::GridWorld) {
    r.true_reward = t.terminated ? gridworld::kGoalReward : gridworld::kStepReward;
  } else {
    const double a = clip_force(action.value);
    r.true_reward = -mountaincar::kActionCost * a * a + (t.terminated ? mountaincar::kGoalReward : 0.0);
  }
  r.state = std::move(t.state);
  r.done = t.done;
  r.terminated = t.terminated;
  return r;
}

void encode_action(const EnvSpec& spec, const Action& action, std::span<double> out) {
  if (out.size() != spec.action_dim) throw DimensionError("action encoding width mismatch");
  if (spec.action_kind == ActionKind::Discrete) {
    if (action.index < 0 || static_cast<std::size_t>(action.index) >= spec.action_count) {
      throw UsageError("discrete action out of range");
    }
    std::fill(out.begin(), out.end(), 0.0);
    out[static_cast<std::size_t>(action.index)] = 1.0;
  } else {
    out[0] = clip_force(action.value);
  }
}

std::vector<double> encode_action(const EnvSpec& spec, const Action& action) {
  std::vector<double> out(spec.action_dim);
  encode_action(spec, action, out);
  return out;
}

Eigen::VectorXd true_step_rewards(const EnvSpec& spec, const Eigen::MatrixXd& inputs) {
  check_matrix_rows(inputs, static_cast<Eigen::Index>(spec.reward_input_dim()), "true_step_rewards");
  Eigen::VectorXd out(inputs.rows());
  for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
    if (spec.name == EnvName::GridWorld) {
      Eigen::Index action = 0;
      inputs.row(r).segment(5, 4).maxCoeff(&action);
      const auto next = grid_move(decode_cell(inputs(r, 0)), decode_cell(inputs(r, 1)), static_cast<int>(action));
      const bool goal = next.x == gridworld::kGoalX && next.y == gridworld::kGoalY;
      out(r) = goal ? gridworld::kGoalReward : gridworld::kStepReward;
    } else {
      const double a = clip_force(inputs(r, 2));
      const auto next = car_move(inputs(r, 0), inputs(r, 1), a);
      out(r) = -mountaincar::kActionCost * a * a +
               (next.position >= mountaincar::kGoalPosition ? mountaincar::kGoalReward : 0.0);
    }
  }
  return out;
}

RolloutPolicy uniform_random_policy(const EnvSpec& spec) {
  RolloutPolicy p;
  p.obs_dim = spec.obs_dim;
  p.action_kind = spec.action_kind;
  p.action_count = spec.action_count;
  if (spec.action_kind == ActionKind::Discrete) {
    const int n = static_cast<int>(spec.action_count);
    p.act = [n](std::span<const double>, Rng& rng) {
      return Action{std::uniform_int_distribution<int>(0, n - 1)(rng), 0.0};
    };
  } else {
    p.act = [](std::span<const double>, Rng& rng) {
      return Action{0, std::uniform_real_distribution<double>(-1.0, 1.0)(rng)};
    };
  }
  return p;
}

bool operator==(const Trajectory& a, const Trajectory& b) {
  return a.seed == b.seed && a.states.rows() == b.states.rows() && a.states.cols() == b.states.cols() &&
         a.actions.rows() == b.actions.rows() && a.actions.cols() == b.actions.cols() &&
         a.true_rewards.size() == b.true_rewards.size() && a.states == b.states && a.actions == b.actions &&
         a.true_rewards == b.true_rewards;
}

bool operator==(const Behavior& a, const Behavior& b) {
  return a.id == b.id && a.true_return == b.true_return && a.round_index == b.round_index &&
         a.source == b.source && a.states.rows() == b.states.rows() && a.states.cols() == b.states.cols() &&
         a.actions.rows() == b.actions.rows() && a.actions.cols() == b.actions.cols() && a.states == b.states &&
         a.actions == b.actions;
}

Trajectory rollout(const EnvSpec& spec, const RolloutPolicy& policy, std::uint64_t seed) {
  if (policy.obs_dim != spec.obs_dim || policy.action_kind != spec.action_kind ||
      policy.action_count != spec.action_count) {
    throw DimensionError("policy dimensions do not match environment " + std::string(to_string(spec.name)));
  }
  if (!policy.act) throw UsageError("rollout policy has no action function");
  Rng rng(derive_seed(seed, {0x9011}));
  EnvState state = reset(spec, seed);

  std::vector<double> states, actions, rewards;
  std::vector<double> enc(spec.action_dim);
  while (!state.done) {
    const Action a = policy.act(state.observation, rng);
    encode_action(spec, a, enc);
    states.insert(states.end(), state.observation.begin(), state.observation.end());
    actions.insert(actions.end(), enc.begin(), enc.end());
    StepResult r = step(spec, state, a);
    rewards.push_back(r.true_reward);
    state = std::move(r.state);
  }

  const auto T = static_cast<Eigen::Index>(rewards.size());
  Trajectory t;
  t.seed = seed;
  t.states = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      states.data(), T, static_cast<Eigen::Index>(spec.obs_dim));
  t.actions = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      actions.data(), T, static_cast<Eigen::Index>(spec.action_dim));
  t.true_rewards = Eigen::Map<Eigen::VectorXd>(rewards.data(), T);
  return t;
}

Eigen::MatrixXd Behavior::reward_inputs() const {
  Eigen::MatrixXd m(states.rows(), states.cols() + actions.cols());
  m << states, actions;
  return m;
}

std::size_t segment_capacity(std::span<const Trajectory> trajectories, std::size_t segment_len) {
  std::size_t total = 0;
  for (const auto& t : trajectories) {
    if (segment_len > 0 && t.length() >= segment_len) total += t.length() - segment_len + 1;
  }
  return total;
}

std::vector<Behavior> sample_segments(std::span<const Trajectory> trajectories, std::size_t segment_len,
                                      std::size_t count, std::uint64_t seed, std::size_t round_index) {
  if (segment_len == 0) throw UsageError("segment length must be positive");
  if (count == 0) throw UsageError("segment count must be positive");

  struct Slot {
    std::size_t trajectory, start;
  };
  std::vector<Slot> slots;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto len = trajectories[i].length();
    if (len < segment_len) continue;
    for (std::size_t s = 0; s + segment_len <= len; ++s) slots.push_back({i, s});
  }
  if (slots.size() < count) {
    throw UsageError("insufficient distinct segments: requested " + std::to_string(count) + ", available " +
                     std::to_string(slots.size()));
  }

  // Partial Fisher-Yates: the first `count` slots are a uniform sample without replacement.
  Rng rng(derive_seed(seed, {0x5e6, round_index}));
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, slots.size() - 1);
    std::swap(slots[i], slots[pick(rng)]);
  }

  const auto L = static_cast<Eigen::Index>(segment_len);
  std::vector<Behavior> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto& t = trajectories[slots[i].trajectory];
    const auto start = static_cast<Eigen::Index>(slots[i].start);
    Behavior b;
    b.id = static_cast<BehaviorId>(round_index) * kRoundIdStride + static_cast<BehaviorId>(i);
    b.states = t.states.middleRows(start, L);
    b.actions = t.actions.middleRows(start, L);
    b.true_return = t.true_rewards.segment(start, L).sum();
    b.round_index = round_index;
    b.source = {t.seed, slots[i].start};
    out.push_back(std::move(b));
  }
  return out;
}

std::vector<Frame> render_frames(const EnvSpec& spec, const Behavior& behavior) {
  if (static_cast<std::size_t>(behavior.states.cols()) != spec.obs_dim) {
    throw DimensionError("behavior does not belong to environment " + std::string(to_string(spec.name)));
  }
  std::vector<Frame> frames;
  frames.reserve(behavior.length());
  for (Eigen::Index t = 0; t < behavior.states.rows(); ++t) {
    if (spec.name == EnvName::GridWorld) {
      frames.emplace_back(GridFrame{decode_cell(behavior.states(t, 0)), decode_cell(behavior.states(t, 1)),
                                    decode_cell(behavior.states(t, 2)), decode_cell(behavior.states(t, 3))});
    } else {
      const double p = behavior.states(t, 0);
      frames.emplace_back(CarFrame{p, mountaincar::hill_height(p)});
    }
  }
  return frames;
}

json frames_to_json(const EnvSpec& spec, std::span<const Frame> frames) {
  json out;
  out["env"] = std::string(to_string(spec.name));
  json arr = json::array();
  for (const auto& f : frames) {
    if (const auto* g = std::get_if<GridFrame>(&f)) {
      arr.push_back({{"agent", {g->agent_x, g->agent_y}}, {"goal", {g->goal_x, g->goal_y}}});
    } else {
      const auto& c = std::get<CarFrame>(f);
      arr.push_back({{"x", c.position}, {"height", c.height}});
    }
  }
  out["frames"] = std::move(arr);
  return out;
}

json to_json(const EnvSpec& spec) {
  return {{"name", std::string(to_string(spec.name))},
          {"obs_dim", spec.obs_dim},
          {"action_dim", spec.action_dim},
          {"action_count", spec.action_count},
          {"action_kind", spec.action_kind == ActionKind::Discrete ? "discrete" : "continuous"},
          {"episode_len", spec.episode_len},
          {"default_segment_len", spec.default_segment_len},
          {"reward_input_dim", spec.reward_input_dim()}};
}

EnvSpec env_spec_from_json(const json& j) {
  EnvSpec s = EnvSpec::from_name(env_name_from_string(j.at("name").get<std::string>()));
  if (j.contains("episode_len")) s.episode_len = j.at("episode_len").get<std::size_t>();
  if (j.contains("default_segment_len")) s.default_segment_len = j.at("default_segment_len").get<std::size_t>();
  if (s.episode_len == 0) throw UsageError("episode_len must be positive");
  return s;
}

json to_json(const Trajectory& t) {
  std::vector<double> rewards(t.true_rewards.data(), t.true_rewards.data() + t.true_rewards.size());
  return {{"seed", t.seed},
          {"states", matrix_to_json(t.states)},
          {"actions", matrix_to_json(t.actions)},
          {"true_rewards", rewards}};
}

Trajectory trajectory_from_json(const json& j) {
  Trajectory t;
  t.seed = j.at("seed").get<std::uint64_t>();
  t.states = matrix_from_json(j.at("states"), width_of(j.at("states")));
  t.actions = matrix_from_json(j.at("actions"), width_of(j.at("actions")));
  const auto rewards = j.at("true_rewards").get<std::vector<double>>();
  t.true_rewards = Eigen::Map<const Eigen::VectorXd>(rewards.data(), static_cast<Eigen::Index>(rewards.size()));
  if (t.states.rows() != t.true_rewards.size() || t.actions.rows() != t.true_rewards.size()) {
    throw CorruptDataError("trajectory sequences differ in length");
  }
  return t;
}

json to_json(const Behavior& b) {
  return {{"id", b.id},
          {"round", b.round_index},
          {"true_return", b.true_return},
          {"source", {{"trajectory_seed", b.source.trajectory_seed}, {"start", b.source.start}}},
          {"states", matrix_to_json(b.states)},
          {"actions", matrix_to_json(b.actions)}};
}

Behavior behavior_from_json(const json& j) {
  Behavior b;
  b.id = j.at("id").get<BehaviorId>();
  b.round_index = j.at("round").get<std::size_t>();
  b.true_return = j.at("true_return").get<double>();
  b.source.trajectory_seed = j.at("source").at("trajectory_seed").get<std::uint64_t>();
  b.source.start = j.at("source").at("start").get<std::size_t>();
  b.states = matrix_from_json(j.at("states"), width_of(j.at("states")));
  b.actions = matrix_from_json(j.at("actions"), width_of(j.at("actions")));
  if (b.states.rows() != b.actions.rows()) throw CorruptDataError("behavior states/actions differ in length");
  return b;
}

namespace {
template <typename T, typename F>
std::vector<T> parse_jsonl(std::string_view text, F&& from_json) {
  std::vector<T> out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw CorruptDataError(std::string("bad JSONL record: ") + e.what());
    }
  }
  return out;
}

template <typename T>
std::string dump_jsonl(std::span<const T> items) {
  std::string out;
  for (const auto& item : items) {
    out += to_json(item).dump();
    out += '\n';
  }
  return out;
}
}  // namespace

std::string trajectories_to_jsonl(std::span<const Trajectory> trajectories) { return dump_jsonl(trajectories); }
std::vector<Trajectory> trajectories_from_jsonl(std::string_view text) {
  return parse_jsonl<Trajectory>(text, trajectory_from_json);
}
std::string behaviors_to_jsonl(std::span<const Behavior> behaviors) { return dump_jsonl(behaviors); }
std::vector<Behavior> behaviors_from_jsonl(std::string_view text) {
  return parse_jsonl<Behavior>(text, behavior_from_json);
}

}  // namespace grlhf
