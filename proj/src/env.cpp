#include "lesr/env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lesr::env {

PointMaze::PointMaze() : PointMaze(Options()) {}

PointMaze::PointMaze(Options options) : options_(options) {
  if (options_.horizon < 1)
    throw std::invalid_argument("horizon must be >= 1");
  if (!(options_.success_radius > 0.0))
    throw std::invalid_argument("success radius must be positive");
}

std::array<double, 4> PointMaze::reset(std::uint64_t seed) {
  Rng rng(seed);
  agent_ = {0.5 + rng.uniform(-kStartJitter, kStartJitter),
            0.5 + rng.uniform(-kStartJitter, kStartJitter)};
  target_ = {kMazeSize - 0.5 + rng.uniform(-kStartJitter, kStartJitter),
             kMazeSize - 0.5 + rng.uniform(-kStartJitter, kStartJitter)};
  velocity_ = {0.0, 0.0};
  step_count_ = 0;
  done_ = false;
  return observation();
}

double PointMaze::distance() const {
  double dx = agent_[0] - target_[0];
  double dy = agent_[1] - target_[1];
  return std::sqrt(dx * dx + dy * dy);
}

std::array<double, 4> PointMaze::observation() const {
  return {agent_[0], agent_[1], target_[0], target_[1]};
}

StepResult PointMaze::step(std::array<double, 2> action) {
  if (done_)
    throw std::logic_error("step() called on a finished episode; reset() first");
  for (double& a : action) a = std::clamp(a, -1.0, 1.0);
  for (int i = 0; i < 2; ++i) {
    agent_[i] += kDt * velocity_[i];
    velocity_[i] = kDamping * velocity_[i] + kDt * action[i];
    agent_[i] = std::clamp(agent_[i], 0.0, kMazeSize);
  }
  ++step_count_;

  StepResult result;
  double d = distance();
  result.terminated = d < options_.success_radius;
  result.truncated = !result.terminated && step_count_ >= options_.horizon;
  result.reward = options_.reward == RewardKind::Dense
                      ? -d
                      : (result.terminated ? 1.0 : 0.0);
  result.observation = observation();
  done_ = result.terminated || result.truncated;
  return result;
}

void PointMaze::set_state(std::array<double, 2> agent,
                          std::array<double, 2> target) {
  for (int i = 0; i < 2; ++i) {
    if (agent[i] < 0.0 || agent[i] > kMazeSize || target[i] < 0.0 ||
        target[i] > kMazeSize)
      throw std::invalid_argument("positions must lie inside the maze");
  }
  agent_ = agent;
  target_ = target;
  velocity_ = {0.0, 0.0};
  step_count_ = 0;
  done_ = false;
}

PointMaze make_env(std::string_view id, int horizon, double success_radius) {
  PointMaze::Options options;
  if (id == "pointmaze-dense") {
    options.reward = PointMaze::RewardKind::Dense;
  } else if (id == "pointmaze-sparse") {
    options.reward = PointMaze::RewardKind::Sparse;
  } else {
    throw std::invalid_argument("unknown environment id '" + std::string(id) +
                                "'; expected pointmaze-dense or "
                                "pointmaze-sparse");
  }
  if (horizon > 0) options.horizon = horizon;
  if (success_radius > 0.0) options.success_radius = success_radius;
  return PointMaze(options);
}

bool is_sparse_env(std::string_view id) {
  return make_env(id).options().reward == PointMaze::RewardKind::Sparse;
}

}  // namespace lesr::env
