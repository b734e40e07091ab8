#include <doctest.h>

#include <cmath>
#include <vector>

#include "lesr/env.hpp"
#include "lesr/rng.hpp"

using namespace lesr;
using namespace lesr::env;

TEST_CASE("env: reset is deterministic and in bounds") {
  PointMaze a, b;
  auto obs1 = a.reset(0);
  auto obs2 = b.reset(0);
  CHECK(obs1 == obs2);
  CHECK(obs1.size() == 4);
  auto obs3 = a.reset(1);
  CHECK(obs1 != obs3);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto obs = a.reset(seed);
    CHECK(obs[0] >= 0.25); CHECK(obs[0] <= 0.75);   // agent near (0.5, 0.5)
    CHECK(obs[1] >= 0.25); CHECK(obs[1] <= 0.75);
    CHECK(obs[2] >= 9.25); CHECK(obs[2] <= 9.75);   // target near (9.5, 9.5)
    CHECK(obs[3] >= 9.25); CHECK(obs[3] <= 9.75);
    CHECK(a.velocity() == std::array<double, 2>{0.0, 0.0});
  }
}

TEST_CASE("env: dense reward is exactly negative euclidean distance") {
  PointMaze env;
  env.set_state({0.0, 0.0}, {3.0, 4.0});
  StepResult r = env.step({0.0, 0.0});  // zero velocity: nothing moves
  CHECK(r.reward == -5.0);              // 3-4-5 triangle
  CHECK_FALSE(r.terminated);

  // The reward must be bitwise -sqrt(dx*dx + dy*dy) of the observation.
  env.reset(7);
  Rng rng(3);
  for (int t = 0; t < 100 && !env.done(); ++t) {
    StepResult s = env.step({rng.uniform(-1, 1), rng.uniform(-1, 1)});
    double dx = s.observation[0] - s.observation[2];
    double dy = s.observation[1] - s.observation[3];
    CHECK(s.reward == -std::sqrt(dx * dx + dy * dy));
  }
}

TEST_CASE("env: reaching the target terminates") {
  PointMaze env;
  env.set_state({5.0, 5.0}, {5.0, 5.0});
  StepResult r = env.step({0.0, 0.0});
  CHECK(r.terminated);
  CHECK(r.reward == 0.0);
  CHECK(env.done());
  CHECK_THROWS_AS(env.step({0.0, 0.0}), std::logic_error);

  PointMaze close;
  close.set_state({5.0, 5.0}, {5.3, 5.0});  // within success radius 0.5
  CHECK(close.step({0.0, 0.0}).terminated);

  PointMaze far;
  far.set_state({5.0, 5.0}, {5.6, 5.0});
  CHECK_FALSE(far.step({0.0, 0.0}).terminated);
}

TEST_CASE("env: sparse variant rewards only success") {
  PointMaze env{{PointMaze::RewardKind::Sparse, 300, 0.5}};
  env.set_state({1.0, 1.0}, {9.0, 9.0});
  StepResult r = env.step({1.0, 1.0});
  CHECK(r.reward == 0.0);
  CHECK_FALSE(r.terminated);
  env.set_state({9.0, 9.0}, {9.1, 9.0});
  StepResult s = env.step({0.0, 0.0});
  CHECK(s.reward == 1.0);
  CHECK(s.terminated);
}

TEST_CASE("env: truncation at the horizon") {
  PointMaze env{{PointMaze::RewardKind::Dense, 5, 0.5}};
  env.reset(0);
  for (int t = 0; t < 4; ++t) {
    StepResult r = env.step({0.0, 0.0});
    CHECK_FALSE(r.truncated);
    CHECK_FALSE(r.terminated);
  }
  StepResult last = env.step({0.0, 0.0});
  CHECK(last.truncated);
  CHECK_FALSE(last.terminated);
  CHECK(env.done());
  CHECK_THROWS_AS(env.step({0.0, 0.0}), std::logic_error);
  env.reset(1);  // reusable after reset
  CHECK_FALSE(env.done());
}

TEST_CASE("env: stepping before any reset is an error") {
  PointMaze env;
  CHECK_THROWS_AS(env.step({0.0, 0.0}), std::logic_error);
}

TEST_CASE("env: dynamics are deterministic and actions are clipped") {
  PointMaze a, b;
  a.reset(11);
  b.reset(11);
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    double ax = rng.uniform(-2, 2), ay = rng.uniform(-2, 2);
    StepResult ra = a.step({ax, ay});
    StepResult rb = b.step({ax, ay});
    CHECK(ra.observation == rb.observation);
    CHECK(ra.reward == rb.reward);
    if (a.done()) break;
  }
  // Oversized actions behave exactly like their clipped versions.
  PointMaze c, d;
  c.reset(3);
  d.reset(3);
  StepResult rc = c.step({5.0, -7.0});
  StepResult rd = d.step({1.0, -1.0});
  CHECK(rc.observation == rd.observation);
}

TEST_CASE("env: positions stay inside the maze, speed stays bounded") {
  PointMaze env;
  Rng rng(19);
  auto prev = env.reset(2);
  for (int t = 0; t < 300 && !env.done(); ++t) {
    StepResult r = env.step({rng.uniform(-1, 1) * 2, rng.uniform(-1, 1) * 2});
    for (int i = 0; i < 2; ++i) {
      CHECK(r.observation[i] >= 0.0);
      CHECK(r.observation[i] <= 10.0);
      // Per-step displacement is at most dt * v_max = 0.1.
      CHECK(std::fabs(r.observation[i] - prev[i]) <= 0.1 + 1e-12);
    }
    CHECK(r.reward >= -10.0 * std::sqrt(2.0));  // reward floor
    prev = r.observation;
  }
}

TEST_CASE("env: a straight-line policy reaches the target within the horizon") {
  PointMaze env;
  auto obs = env.reset(0);
  bool reached = false;
  for (int t = 0; t < 300; ++t) {
    double dx = obs[2] - obs[0], dy = obs[3] - obs[1];
    double norm = std::max(std::sqrt(dx * dx + dy * dy), 1e-9);
    StepResult r = env.step({dx / norm, dy / norm});
    obs = r.observation;
    if (r.terminated) {
      reached = true;
      break;
    }
    if (r.truncated) break;
  }
  CHECK(reached);
  CHECK(env.step_count() < 300);
}

TEST_CASE("env: factory by id") {
  PointMaze dense = make_env("pointmaze-dense");
  CHECK(dense.options().reward == PointMaze::RewardKind::Dense);
  PointMaze sparse = make_env("pointmaze-sparse", 100, 0.25);
  CHECK(sparse.options().reward == PointMaze::RewardKind::Sparse);
  CHECK(sparse.options().horizon == 100);
  CHECK(sparse.options().success_radius == 0.25);
  CHECK(is_sparse_env("pointmaze-sparse"));
  CHECK_FALSE(is_sparse_env("pointmaze-dense"));
  try {
    make_env("cartpole");
    FAIL("expected invalid_argument");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("cartpole") != std::string::npos);
  }
  CHECK_THROWS_AS(PointMaze({PointMaze::RewardKind::Dense, 0, 0.5}),
                  std::invalid_argument);
  CHECK_THROWS_AS(PointMaze({PointMaze::RewardKind::Dense, 10, -1.0}),
                  std::invalid_argument);
}

TEST_CASE("env: set_state validates positions") {
  PointMaze env;
  CHECK_THROWS_AS(env.set_state({-1.0, 0.0}, {5.0, 5.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(env.set_state({1.0, 0.0}, {5.0, 11.0}),
                  std::invalid_argument);
}
