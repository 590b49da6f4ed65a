#pragma once

// Small deterministic environments with known reward functions.
//
// GridWorld: 8x8 grid, goal fixed at (7,7), random non-goal start cell.
//   observation = (x/7, y/7, goal_x/7, goal_y/7, manhattan/14)
//   actions: 0 = up (y+1), 1 = right (x+1), 2 = down (y-1), 3 = left (x-1);
//   moves into a wall leave the agent in place. Entering the goal pays +10 and
//   terminates; every other transition pays -0.1.
//
// MountainCar (continuous): position in [-1.2, 0.6], velocity in [-0.07, 0.07].
//   v' = clamp(v + 0.0015 a - 0.0025 cos(3 p)), p' = clamp(p + v'), a in [-1,1].
//   Reaching p' >= 0.45 pays +100 and terminates; every step costs 0.1 a^2.
//   The drawn hill is height(p) = 0.45 sin(3 p) + 0.55.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "grlhf/random.hpp"

namespace grlhf {

using BehaviorId = std::int64_t;

enum class EnvName { GridWorld, MountainCar };
enum class ActionKind { Discrete, Continuous };

std::string_view to_string(EnvName name);
EnvName env_name_from_string(std::string_view s);

struct EnvSpec {
  EnvName name = EnvName::GridWorld;
  std::size_t obs_dim = 0;
  std::size_t action_dim = 0;    // width of the action encoding
  std::size_t action_count = 0;  // number of discrete choices, 0 if continuous
  ActionKind action_kind = ActionKind::Discrete;
  std::size_t episode_len = 0;
  std::size_t default_segment_len = 0;

  std::size_t reward_input_dim() const { return obs_dim + action_dim; }

  static EnvSpec grid_world();
  static EnvSpec mountain_car();
  static EnvSpec from_name(EnvName name);

  friend bool operator==(const EnvSpec&, const EnvSpec&) = default;
};

namespace gridworld {
inline constexpr int kSize = 8;
inline constexpr int kGoalX = 7;
inline constexpr int kGoalY = 7;
inline constexpr double kGoalReward = 10.0;
inline constexpr double kStepReward = -0.1;
}  // namespace gridworld

namespace mountaincar {
inline constexpr double kMinPosition = -1.2;
inline constexpr double kMaxPosition = 0.6;
inline constexpr double kMaxSpeed = 0.07;
inline constexpr double kGoalPosition = 0.45;
inline constexpr double kPower = 0.0015;
inline constexpr double kGoalReward = 100.0;
inline constexpr double kActionCost = 0.1;
double hill_height(double position);
}  // namespace mountaincar

/// A discrete choice (GridWorld) or a scalar force (MountainCar).
struct Action {
  int index = 0;
  double value = 0.0;
};

struct EnvState {
  std::vector<double> observation;
  std::size_t step_index = 0;
  bool done = false;
  std::uint64_t seed = 0;
};

struct StepResult {
  EnvState state;
  double true_reward = 0.0;
  bool done = false;
  bool terminated = false;  // goal reached, as opposed to the horizon running out
};

/// Next state without the reward. Policy training only sees this.
struct Transition {
  EnvState state;
  bool done = false;
  bool terminated = false;
};

EnvState reset(const EnvSpec& spec, std::uint64_t seed);
Transition advance(const EnvSpec& spec, const EnvState& state, const Action& action);
StepResult step(const EnvSpec& spec, const EnvState& state, const Action& action);

/// Writes the action encoding (one-hot for discrete, clipped force otherwise).
void encode_action(const EnvSpec& spec, const Action& action, std::span<double> out);
std::vector<double> encode_action(const EnvSpec& spec, const Action& action);

/// Ground-truth per-step reward as a function of the reward-model input row
/// concat(observation, action encoding). Rows are samples.
Eigen::VectorXd true_step_rewards(const EnvSpec& spec, const Eigen::MatrixXd& inputs);

struct RolloutPolicy {
  std::size_t obs_dim = 0;
  ActionKind action_kind = ActionKind::Discrete;
  std::size_t action_count = 0;
  std::function<Action(std::span<const double> observation, Rng& rng)> act;
};

RolloutPolicy uniform_random_policy(const EnvSpec& spec);

struct Trajectory {
  Eigen::MatrixXd states;   // T x obs_dim, observation before each action
  Eigen::MatrixXd actions;  // T x action_dim
  Eigen::VectorXd true_rewards;
  std::uint64_t seed = 0;

  std::size_t length() const { return static_cast<std::size_t>(true_rewards.size()); }
  friend bool operator==(const Trajectory& a, const Trajectory& b);
};

Trajectory rollout(const EnvSpec& spec, const RolloutPolicy& policy, std::uint64_t seed);

struct SegmentSource {
  std::uint64_t trajectory_seed = 0;
  std::size_t start = 0;
  friend bool operator==(const SegmentSource&, const SegmentSource&) = default;
};

struct Behavior {
  BehaviorId id = 0;
  Eigen::MatrixXd states;   // L x obs_dim
  Eigen::MatrixXd actions;  // L x action_dim
  double true_return = 0.0;
  std::size_t round_index = 0;
  SegmentSource source;

  std::size_t length() const { return static_cast<std::size_t>(states.rows()); }
  /// L x (obs_dim + action_dim) rows of concat(state, action).
  Eigen::MatrixXd reward_inputs() const;

  friend bool operator==(const Behavior& a, const Behavior& b);
};

/// Behavior ids are unique across rounds: round * kRoundIdStride + index.
inline constexpr BehaviorId kRoundIdStride = 1'000'000;

/// Samples `count` distinct (trajectory, start) segments of length `segment_len`.
/// Trajectories shorter than the segment length contribute nothing.
std::vector<Behavior> sample_segments(std::span<const Trajectory> trajectories,
                                      std::size_t segment_len, std::size_t count,
                                      std::uint64_t seed, std::size_t round_index = 0);

/// Number of distinct segments `sample_segments` could draw.
std::size_t segment_capacity(std::span<const Trajectory> trajectories, std::size_t segment_len);

struct GridFrame {
  int agent_x = 0, agent_y = 0;
  int goal_x = 0, goal_y = 0;
};
struct CarFrame {
  double position = 0.0;
  double height = 0.0;
};
using Frame = std::variant<GridFrame, CarFrame>;

std::vector<Frame> render_frames(const EnvSpec& spec, const Behavior& behavior);
nlohmann::json frames_to_json(const EnvSpec& spec, std::span<const Frame> frames);

nlohmann::json to_json(const EnvSpec& spec);
EnvSpec env_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Trajectory& t);
Trajectory trajectory_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Behavior& b);
Behavior behavior_from_json(const nlohmann::json& j);

/// Line-delimited JSON, one record per line.
std::string trajectories_to_jsonl(std::span<const Trajectory> trajectories);
std::vector<Trajectory> trajectories_from_jsonl(std::string_view text);
std::string behaviors_to_jsonl(std::span<const Behavior> behaviors);
std::vector<Behavior> behaviors_from_jsonl(std::string_view text);

}  // namespace grlhf
