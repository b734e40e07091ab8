#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lesr/dsl.hpp"
#include "lesr/lipschitz.hpp"
#include "lesr/nn.hpp"
#include "lesr/rng.hpp"

// Twin-delayed deterministic policy-gradient trainer over the augmented
// state s_c = (s, F(s)) with blended reward r + w * G(s_c).  One trainer is
// strictly single-threaded and bit-reproducible given (seed, config,
// programs); callers may run many trainers concurrently.
namespace lesr::td3 {

struct TrainConfig {
  long total_steps = 50'000;
  int batch_size = 256;
  double gamma = 0.99;
  double target_update_rate = 0.005;  // polyak rate for target networks
  double policy_noise = 0.2;          // target policy smoothing stddev
  double noise_clip = 0.5;
  int policy_delay = 2;
  double exploration_noise = 0.1;
  long replay_capacity = 200'000;
  double intrinsic_weight = 0.02;  // w
  int eval_episodes = 10;
  long eval_interval = 2'500;
  long start_steps = 1'000;  // warmup: one random action held per episode
  std::vector<int> hidden_sizes = {64, 64};
  double actor_lr = 3e-4;
  double critic_lr = 3e-4;
  int horizon = 300;
  double success_radius = 0.5;
  std::uint64_t seed = 0;
};

// Throws std::invalid_argument naming the offending field.
void validate(const TrainConfig& cfg);

struct CurvePoint {
  long step = 0;
  double nu = 0.0;
  double success_rate = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  // A candidate program that produced a non-finite value is reported here
  // instead of crashing the run.
  bool disqualified = false;
  std::string disqualification_reason;

  nn::MlpParams actor, critic1, critic2;
  double nu = 0.0;            // mean return (dense) or success rate (sparse)
  double success_rate = 0.0;  // fraction of eval episodes reaching the target
  std::vector<lip::EpisodeTrace> eval_traces;  // final deterministic rollouts
  std::vector<CurvePoint> curve;
  long steps_run = 0;
  // Largest |stored_combined - (stored_extrinsic + w*G(stored_state))| seen
  // when auditing replay rows (0 when no intrinsic program is active).
  double blend_audit_max_error = 0.0;
};

class ReplayBuffer {
 public:
  ReplayBuffer(long capacity, int state_dim, int action_dim);

  void add(const Eigen::VectorXd& state, const Eigen::VectorXd& action,
           double combined_reward, double extrinsic_reward,
           const Eigen::VectorXd& next_state, bool done);

  long size() const { return size_; }
  long capacity() const { return capacity_; }

  // Fills row-major batches with uniformly sampled stored transitions.
  void sample(int batch, Rng& rng, Eigen::MatrixXd& states,
              Eigen::MatrixXd& actions, Eigen::VectorXd& combined,
              Eigen::MatrixXd& next_states, Eigen::VectorXd& done) const;

  // Row accessors for audits and tests.
  Eigen::VectorXd state_at(long i) const { return states_.row(i); }
  Eigen::VectorXd action_at(long i) const { return actions_.row(i); }
  double combined_at(long i) const { return combined_(i); }
  double extrinsic_at(long i) const { return extrinsic_(i); }
  Eigen::VectorXd next_state_at(long i) const { return next_states_.row(i); }
  bool done_at(long i) const { return done_(i) != 0.0; }

 private:
  long capacity_;
  long size_ = 0;
  long pos_ = 0;  // FIFO overwrite position
  Eigen::MatrixXd states_, actions_, next_states_;
  Eigen::VectorXd combined_, extrinsic_, done_;
};

// Deterministic actor output plus seeded Gaussian exploration noise, clipped
// to the [-1, 1] action bounds.  Zero noise (or null rng) is the evaluation
// mode.
Eigen::VectorXd select_action(const nn::MlpParams& actor,
                              const Eigen::VectorXd& s_c,
                              double exploration_noise, Rng* rng);

struct EvalResult {
  double nu = 0.0;
  double success_rate = 0.0;
  std::vector<lip::EpisodeTrace> traces;
};

// Deterministic-policy rollouts; nu is the mean undiscounted extrinsic
// return on dense tasks and the success rate on sparse tasks.  Traces carry
// (s, s_c, extrinsic r) per step.
EvalResult evaluate(const nn::MlpParams& actor, const std::string& env_id,
                    int episodes, std::uint64_t seed,
                    const std::optional<dsl::ReprProgram>& F, int horizon = 300,
                    double success_radius = 0.5);

// One full training process for a candidate (F, G).  F absent trains on the
// raw source state; G absent (only allowed that way without F, or with any F)
// means no intrinsic reward.  Program dimensions must match the environment.
TrainResult train(const std::string& env_id,
                  const std::optional<dsl::ReprProgram>& F,
                  const std::optional<dsl::RewardProgram>& G,
                  const TrainConfig& cfg);

// Curve CSV: header step,nu,success_rate,wall_seconds; shortest round-trip
// doubles.
void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& curve);

}  // namespace lesr::td3
