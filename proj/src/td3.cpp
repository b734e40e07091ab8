#include "lesr/td3.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <utility>

#include "lesr/env.hpp"
#include "lesr/util.hpp"

namespace lesr::td3 {
namespace {

// Fixed sub-stream ids forked off the run seed.  Renumbering any of these
// changes every sampled trajectory, so they are part of the reproducibility
// contract.
enum Stream : std::uint64_t {
  kActorInit = 1,
  kCritic1Init = 2,
  kCritic2Init = 3,
  kEpisodeReset = 4,
  kExploration = 5,
  kBatchSample = 6,
  kTargetNoise = 7,
  kWarmupAction = 8,
  kEvalSeed = 9,
};

Eigen::VectorXd to_vec(const std::array<double, env::PointMaze::kObservationDim>& obs) {
  Eigen::VectorXd v(static_cast<int>(obs.size()));
  for (int i = 0; i < v.size(); ++i) v(i) = obs[static_cast<std::size_t>(i)];
  return v;
}

std::array<double, env::PointMaze::kActionDim> to_action(const Eigen::VectorXd& a) {
  return {a(0), a(1)};
}

// s_c = (s, F(s)); empty optional means F produced a non-finite output.
std::optional<Eigen::VectorXd> augment(const std::optional<dsl::ReprProgram>& F,
                                       const Eigen::VectorXd& s) {
  if (!F) return s;
  std::vector<double> in(s.data(), s.data() + s.size());
  auto extra = dsl::eval_repr(*F, in);
  if (!extra) return std::nullopt;
  Eigen::VectorXd v(s.size() + static_cast<long>(extra->size()));
  v.head(s.size()) = s;
  for (std::size_t i = 0; i < extra->size(); ++i)
    v(s.size() + static_cast<long>(i)) = (*extra)[i];
  return v;
}

std::optional<double> intrinsic(const std::optional<dsl::RewardProgram>& G,
                                const Eigen::VectorXd& s_c) {
  if (!G) return 0.0;
  std::vector<double> in(s_c.data(), s_c.data() + s_c.size());
  return dsl::eval_reward(*G, in);
}

std::vector<int> layer_sizes(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> sizes;
  sizes.push_back(in);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

// The actor's output layer starts near zero so its tanh head is responsive
// from the first update; a fan-in-scale init saturates it on
// large-magnitude observations and can freeze the policy in a wall-seeking
// loop.  The critics keep the plain fan-in init.
constexpr double kActorFinalInitBound = 3e-3;

}  // namespace

void validate(const TrainConfig& cfg) {
  auto fail = [](const char* what) {
    throw std::invalid_argument(std::string("train config: ") + what);
  };
  if (cfg.total_steps < 1) fail("total_steps must be >= 1");
  if (cfg.batch_size < 1) fail("batch_size must be >= 1");
  if (!(cfg.gamma >= 0.0 && cfg.gamma < 1.0)) fail("gamma must be in [0, 1)");
  if (!(cfg.target_update_rate > 0.0 && cfg.target_update_rate <= 1.0))
    fail("target_update_rate must be in (0, 1]");
  if (cfg.policy_noise < 0.0) fail("policy_noise must be >= 0");
  if (cfg.noise_clip < 0.0) fail("noise_clip must be >= 0");
  if (cfg.policy_delay < 1) fail("policy_delay must be >= 1");
  if (cfg.exploration_noise < 0.0) fail("exploration_noise must be >= 0");
  if (cfg.replay_capacity < cfg.batch_size)
    fail("replay_capacity must be >= batch_size");
  if (!std::isfinite(cfg.intrinsic_weight)) fail("intrinsic_weight must be finite");
  if (cfg.eval_episodes < 1) fail("eval_episodes must be >= 1");
  if (cfg.eval_interval < 1) fail("eval_interval must be >= 1");
  if (cfg.start_steps < 0) fail("start_steps must be >= 0");
  if (cfg.hidden_sizes.empty()) fail("hidden_sizes must be non-empty");
  for (int h : cfg.hidden_sizes)
    if (h < 1) fail("hidden_sizes entries must be >= 1");
  if (!(cfg.actor_lr > 0.0)) fail("actor_lr must be > 0");
  if (!(cfg.critic_lr > 0.0)) fail("critic_lr must be > 0");
  if (cfg.horizon < 2) fail("horizon must be >= 2");
  if (!(cfg.success_radius > 0.0)) fail("success_radius must be > 0");
}

ReplayBuffer::ReplayBuffer(long capacity, int state_dim, int action_dim)
    : capacity_(capacity) {
  if (capacity < 1) throw std::invalid_argument("replay capacity must be >= 1");
  if (state_dim < 1 || action_dim < 1)
    throw std::invalid_argument("replay dimensions must be >= 1");
  states_.resize(capacity, state_dim);
  actions_.resize(capacity, action_dim);
  next_states_.resize(capacity, state_dim);
  combined_.resize(capacity);
  extrinsic_.resize(capacity);
  done_.resize(capacity);
}

void ReplayBuffer::add(const Eigen::VectorXd& state, const Eigen::VectorXd& action,
                       double combined_reward, double extrinsic_reward,
                       const Eigen::VectorXd& next_state, bool done) {
  states_.row(pos_) = state;
  actions_.row(pos_) = action;
  next_states_.row(pos_) = next_state;
  combined_(pos_) = combined_reward;
  extrinsic_(pos_) = extrinsic_reward;
  done_(pos_) = done ? 1.0 : 0.0;
  pos_ = (pos_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

void ReplayBuffer::sample(int batch, Rng& rng, Eigen::MatrixXd& states,
                          Eigen::MatrixXd& actions, Eigen::VectorXd& combined,
                          Eigen::MatrixXd& next_states,
                          Eigen::VectorXd& done) const {
  if (size_ < 1) throw std::logic_error("cannot sample from an empty replay buffer");
  states.resize(batch, states_.cols());
  actions.resize(batch, actions_.cols());
  next_states.resize(batch, next_states_.cols());
  combined.resize(batch);
  done.resize(batch);
  for (int b = 0; b < batch; ++b) {
    const long i = static_cast<long>(rng.index(static_cast<std::size_t>(size_)));
    states.row(b) = states_.row(i);
    actions.row(b) = actions_.row(i);
    next_states.row(b) = next_states_.row(i);
    combined(b) = combined_(i);
    done(b) = done_(i);
  }
}

Eigen::VectorXd select_action(const nn::MlpParams& actor,
                              const Eigen::VectorXd& s_c,
                              double exploration_noise, Rng* rng) {
  Eigen::VectorXd a = nn::forward(actor, s_c);
  if (exploration_noise > 0.0 && rng != nullptr) {
    for (long i = 0; i < a.size(); ++i) a(i) += rng->normal(0.0, exploration_noise);
  }
  return a.cwiseMax(-1.0).cwiseMin(1.0);
}

EvalResult evaluate(const nn::MlpParams& actor, const std::string& env_id,
                    int episodes, std::uint64_t seed,
                    const std::optional<dsl::ReprProgram>& F, int horizon,
                    double success_radius) {
  if (episodes < 1) throw std::invalid_argument("evaluate: episodes must be >= 1");
  env::PointMaze e = env::make_env(env_id, horizon, success_radius);
  const bool sparse = env::is_sparse_env(env_id);

  EvalResult result;
  double return_sum = 0.0;
  int successes = 0;
  for (int ep = 0; ep < episodes; ++ep) {
    e.reset(Rng::derive(seed, static_cast<std::uint64_t>(ep)));
    lip::EpisodeTrace trace;
    double ep_return = 0.0;
    bool terminated = false;
    while (!e.done()) {
      Eigen::VectorXd s = to_vec(e.observation());
      auto s_c = augment(F, s);
      if (!s_c)
        throw std::runtime_error(
            "representation program produced a non-finite value during evaluation");
      Eigen::VectorXd a = select_action(actor, *s_c, 0.0, nullptr);
      auto step = e.step(to_action(a));
      ep_return += step.reward;
      terminated = step.terminated;
      Eigen::VectorXd s2 = to_vec(step.observation);
      auto s2_c = augment(F, s2);
      if (!s2_c)
        throw std::runtime_error(
            "representation program produced a non-finite value during evaluation");
      trace.source_states.push_back(
          std::vector<double>(s2.data(), s2.data() + s2.size()));
      trace.trajectory.states.push_back(
          std::vector<double>(s2_c->data(), s2_c->data() + s2_c->size()));
      trace.trajectory.rewards.push_back(step.reward);
    }
    return_sum += ep_return;
    if (terminated) ++successes;
    result.traces.push_back(std::move(trace));
  }
  result.success_rate = static_cast<double>(successes) / episodes;
  result.nu = sparse ? result.success_rate : return_sum / episodes;
  return result;
}

TrainResult train(const std::string& env_id,
                  const std::optional<dsl::ReprProgram>& F,
                  const std::optional<dsl::RewardProgram>& G,
                  const TrainConfig& cfg) {
  validate(cfg);
  env::PointMaze e = env::make_env(env_id, cfg.horizon, cfg.success_radius);
  const int obs_dim = env::PointMaze::kObservationDim;
  const int act_dim = env::PointMaze::kActionDim;

  if (F && F->input_dim != obs_dim)
    throw std::invalid_argument("representation program input dimension mismatch");
  const int state_dim = obs_dim + (F ? static_cast<int>(F->outputs.size()) : 0);
  if (G) {
    if (!F && G->input_dim != obs_dim)
      throw std::invalid_argument(
          "intrinsic program without a representation program must read the "
          "source state only");
    if (G->input_dim != state_dim || G->base_dim != obs_dim)
      throw std::invalid_argument("intrinsic program dimension mismatch");
  }

  // Networks.
  nn::MlpParams actor =
      nn::mlp_init(layer_sizes(state_dim, cfg.hidden_sizes, act_dim),
                   nn::Head::TanhScaled, 1.0, Rng::derive(cfg.seed, kActorInit),
                   kActorFinalInitBound);
  nn::MlpParams critic1 =
      nn::mlp_init(layer_sizes(state_dim + act_dim, cfg.hidden_sizes, 1),
                   nn::Head::Identity, 1.0, Rng::derive(cfg.seed, kCritic1Init));
  nn::MlpParams critic2 =
      nn::mlp_init(layer_sizes(state_dim + act_dim, cfg.hidden_sizes, 1),
                   nn::Head::Identity, 1.0, Rng::derive(cfg.seed, kCritic2Init));
  nn::MlpParams actor_target = actor, critic1_target = critic1,
                critic2_target = critic2;
  nn::AdamState actor_opt = nn::adam_init(actor, cfg.actor_lr);
  nn::AdamState critic1_opt = nn::adam_init(critic1, cfg.critic_lr);
  nn::AdamState critic2_opt = nn::adam_init(critic2, cfg.critic_lr);
  nn::Gradients actor_grads = nn::zero_gradients(actor);
  nn::Gradients critic1_grads = nn::zero_gradients(critic1);
  nn::Gradients critic2_grads = nn::zero_gradients(critic2);
  nn::Gradients scratch_grads = nn::zero_gradients(critic1);

  ReplayBuffer buffer(cfg.replay_capacity, state_dim, act_dim);
  Rng exploration_rng(Rng::derive(cfg.seed, kExploration));
  Rng batch_rng(Rng::derive(cfg.seed, kBatchSample));
  Rng noise_rng(Rng::derive(cfg.seed, kTargetNoise));
  Rng warmup_rng(Rng::derive(cfg.seed, kWarmupAction));
  const std::uint64_t reset_base = Rng::derive(cfg.seed, kEpisodeReset);
  const std::uint64_t eval_seed = Rng::derive(cfg.seed, kEvalSeed);

  TrainResult result;
  const auto t0 = std::chrono::steady_clock::now();
  auto wall = [&t0] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  };
  auto disqualify = [&](const std::string& reason, long step) {
    result.disqualified = true;
    result.disqualification_reason =
        reason + " at training step " + std::to_string(step);
    result.steps_run = step;
    return result;
  };
  auto run_eval = [&](long step) {
    EvalResult ev = evaluate(actor, env_id, cfg.eval_episodes, eval_seed, F,
                             cfg.horizon, cfg.success_radius);
    result.curve.push_back({step, ev.nu, ev.success_rate, wall()});
    return ev;
  };

  // Batch scratch space.
  Eigen::MatrixXd bs, ba, bs2;
  Eigen::VectorXd br, bdone;
  nn::ForwardCache cache_q1, cache_q2, cache_pi, cache_q_pi;

  std::uint64_t episode = 0;
  e.reset(Rng::derive(reset_base, episode));
  Eigen::VectorXd s = to_vec(e.observation());
  auto s_c0 = augment(F, s);
  if (!s_c0) return disqualify("representation program produced a non-finite value", 0);
  Eigen::VectorXd s_c = *s_c0;

  // Warmup episodes hold one random action each.  Per-step jitter cancels
  // itself under the damped point-mass dynamics and never leaves the start
  // region, so the replay buffer would open with no coverage of the arena;
  // a persistent action drives a straight ray instead.
  Eigen::VectorXd warm_a(act_dim);
  for (int i = 0; i < act_dim; ++i) warm_a(i) = warmup_rng.uniform(-1.0, 1.0);

  try {
    run_eval(0);
  } catch (const std::runtime_error& err) {
    return disqualify(err.what(), 0);
  }

  long critic_updates = 0;
  for (long step = 1; step <= cfg.total_steps; ++step) {
    // --- act ---
    Eigen::VectorXd a(act_dim);
    if (step <= cfg.start_steps) {
      a = warm_a;
    } else {
      a = select_action(actor, s_c, cfg.exploration_noise, &exploration_rng);
    }
    auto sr = e.step(to_action(a));
    Eigen::VectorXd s2 = to_vec(sr.observation);
    auto s2_c = augment(F, s2);
    if (!s2_c)
      return disqualify("representation program produced a non-finite value", step);

    auto g = intrinsic(G, s_c);
    if (!g)
      return disqualify("intrinsic program produced a non-finite value", step);
    const double combined = sr.reward + cfg.intrinsic_weight * (*g);

    // Bootstrapping masks true termination only, not horizon truncation.
    buffer.add(s_c, a, combined, sr.reward, *s2_c, sr.terminated);

    if (G) {
      // Audit the stored row: the blend must be recoverable from the stored
      // state and extrinsic reward alone.
      const long row = (buffer.size() < buffer.capacity())
                           ? buffer.size() - 1
                           : (step - 1) % buffer.capacity();
      auto g_back = intrinsic(G, buffer.state_at(row));
      const double expect =
          buffer.extrinsic_at(row) + cfg.intrinsic_weight * (*g_back);
      result.blend_audit_max_error =
          std::max(result.blend_audit_max_error,
                   std::abs(buffer.combined_at(row) - expect));
    }

    if (sr.terminated || sr.truncated) {
      ++episode;
      e.reset(Rng::derive(reset_base, episode));
      s = to_vec(e.observation());
      auto sc = augment(F, s);
      if (!sc)
        return disqualify("representation program produced a non-finite value", step);
      s_c = *sc;
      if (step < cfg.start_steps)
        for (int i = 0; i < act_dim; ++i) warm_a(i) = warmup_rng.uniform(-1.0, 1.0);
    } else {
      s = s2;
      s_c = *s2_c;
    }

    // --- learn ---
    if (step > cfg.start_steps && buffer.size() >= cfg.batch_size) {
      buffer.sample(cfg.batch_size, batch_rng, bs, ba, br, bs2, bdone);

      // Target actions with clipped smoothing noise.
      Eigen::MatrixXd a2 = nn::forward_batch(actor_target, bs2);
      for (long r = 0; r < a2.rows(); ++r)
        for (long c = 0; c < a2.cols(); ++c) {
          const double n = std::clamp(noise_rng.normal(0.0, cfg.policy_noise),
                                      -cfg.noise_clip, cfg.noise_clip);
          a2(r, c) = std::clamp(a2(r, c) + n, -1.0, 1.0);
        }

      Eigen::MatrixXd sa2(cfg.batch_size, state_dim + act_dim);
      sa2 << bs2, a2;
      Eigen::VectorXd q1t = nn::forward_batch(critic1_target, sa2).col(0);
      Eigen::VectorXd q2t = nn::forward_batch(critic2_target, sa2).col(0);
      Eigen::VectorXd y =
          br.array() +
          cfg.gamma * (1.0 - bdone.array()) * q1t.array().min(q2t.array());

      Eigen::MatrixXd sa(cfg.batch_size, state_dim + act_dim);
      sa << bs, ba;
      Eigen::VectorXd q1 = nn::forward_batch(critic1, sa, &cache_q1).col(0);
      Eigen::VectorXd q2 = nn::forward_batch(critic2, sa, &cache_q2).col(0);
      const double inv_n = 1.0 / cfg.batch_size;
      Eigen::MatrixXd up1 = (2.0 * inv_n) * (q1 - y);
      Eigen::MatrixXd up2 = (2.0 * inv_n) * (q2 - y);
      nn::backward_batch(critic1, cache_q1, up1, critic1_grads);
      nn::backward_batch(critic2, cache_q2, up2, critic2_grads);
      nn::adam_step(critic1, critic1_grads, critic1_opt);
      nn::adam_step(critic2, critic2_grads, critic2_opt);
      ++critic_updates;

      if (critic_updates % cfg.policy_delay == 0) {
        // Deterministic policy gradient: maximize mean Q1(s, pi(s)).
        Eigen::MatrixXd a_pi = nn::forward_batch(actor, bs, &cache_pi);
        Eigen::MatrixXd sa_pi(cfg.batch_size, state_dim + act_dim);
        sa_pi << bs, a_pi;
        nn::forward_batch(critic1, sa_pi, &cache_q_pi);
        Eigen::MatrixXd up_q = Eigen::MatrixXd::Constant(cfg.batch_size, 1, -inv_n);
        Eigen::MatrixXd d_input =
            nn::backward_batch(critic1, cache_q_pi, up_q, scratch_grads);
        Eigen::MatrixXd d_action = d_input.rightCols(act_dim);
        nn::backward_batch(actor, cache_pi, d_action, actor_grads);
        nn::adam_step(actor, actor_grads, actor_opt);

        nn::soft_update_params(actor_target, actor, cfg.target_update_rate);
        nn::soft_update_params(critic1_target, critic1, cfg.target_update_rate);
        nn::soft_update_params(critic2_target, critic2, cfg.target_update_rate);
      }
    }

    // --- evaluate ---
    if (step % cfg.eval_interval == 0 || step == cfg.total_steps) {
      try {
        EvalResult ev = run_eval(step);
        if (step == cfg.total_steps) {
          result.nu = ev.nu;
          result.success_rate = ev.success_rate;
          result.eval_traces = std::move(ev.traces);
        }
      } catch (const std::runtime_error& err) {
        return disqualify(err.what(), step);
      }
    }
  }

  result.actor = std::move(actor);
  result.critic1 = std::move(critic1);
  result.critic2 = std::move(critic2);
  result.steps_run = cfg.total_steps;
  return result;
}

void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& curve) {
  out << "step,nu,success_rate,wall_seconds\n";
  for (const auto& p : curve) {
    out << p.step << ',' << format_double(p.nu) << ','
        << format_double(p.success_rate) << ',' << format_double(p.wall_seconds)
        << '\n';
  }
}

}  // namespace lesr::td3
