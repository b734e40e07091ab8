#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

#include "lesr/rng.hpp"

// Native point-mass maze navigation task.  The agent starts near the
// bottom-left corner of a 10x10 arena and must reach a target near the
// top-right corner; the observation is (agent_x, agent_y, target_x,
// target_y) and the action is a 2-D force in [-1, 1]^2.
namespace lesr::env {

struct StepResult {
  std::array<double, 4> observation{};
  double reward = 0.0;
  bool terminated = false;  // reached the target
  bool truncated = false;   // horizon exhausted
};

class PointMaze {
 public:
  enum class RewardKind { Dense, Sparse };

  struct Options {
    RewardKind reward = RewardKind::Dense;
    int horizon = 300;
    double success_radius = 0.5;
  };

  static constexpr int kObservationDim = 4;
  static constexpr int kActionDim = 2;
  static constexpr double kMazeSize = 10.0;
  static constexpr double kDt = 0.1;
  static constexpr double kDamping = 0.9;
  static constexpr double kStartJitter = 0.25;

  PointMaze();
  explicit PointMaze(Options options);

  // Places the agent near (0.5, 0.5) and the target near (9.5, 9.5), each
  // jittered per-axis by U(-kStartJitter, kStartJitter); deterministic per
  // seed.  Velocity starts at zero.
  std::array<double, 4> reset(std::uint64_t seed);

  // Integrates one step: x += dt*v, then v = damping*v + dt*clip(action),
  // position hard-clamped to the arena.  Dense reward is exactly
  // -sqrt(dx*dx + dy*dy); sparse reward is 1 when the target is reached,
  // else 0.  Throws std::logic_error if called on a finished episode.
  StepResult step(std::array<double, 2> action);

  const Options& options() const { return options_; }
  std::array<double, 2> agent_pos() const { return agent_; }
  std::array<double, 2> target_pos() const { return target_; }
  std::array<double, 2> velocity() const { return velocity_; }
  int step_count() const { return step_count_; }
  bool done() const { return done_; }
  double distance() const;
  std::array<double, 4> observation() const;

  // Test hook: pin agent/target exactly (velocity zeroed, episode reopened).
  void set_state(std::array<double, 2> agent, std::array<double, 2> target);

 private:
  Options options_;
  std::array<double, 2> agent_{};
  std::array<double, 2> target_{};
  std::array<double, 2> velocity_{};
  int step_count_ = 0;
  bool done_ = true;  // must reset() before stepping
};

// Environment ids: "pointmaze-dense", "pointmaze-sparse".  Unknown ids throw
// std::invalid_argument naming the id.  Horizon/success radius <= 0 keep the
// defaults.
PointMaze make_env(std::string_view id, int horizon = 0,
                   double success_radius = 0.0);
bool is_sparse_env(std::string_view id);

}  // namespace lesr::env
