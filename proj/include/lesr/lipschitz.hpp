#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

// Trajectory-based Lipschitz feedback.  A candidate's per-dimension array
// estimates, for every augmented state dimension, how steeply the extrinsic
// reward varies against that dimension along evaluation trajectories; arrays
// from successive trajectories are blended with an exponential soft update.
namespace lesr::lip {

// An evaluation trajectory: the augmented state visited at each step paired
// with the extrinsic reward received at that step.
struct Trajectory {
  std::vector<std::vector<double>> states;  // length H, each of size dim
  std::vector<double> rewards;              // length H

  std::size_t length() const { return states.size(); }
  std::size_t state_dim() const { return states.empty() ? 0 : states[0].size(); }
};

// Throws std::invalid_argument unless: length >= 2, rewards matches states,
// all rows share one dimension >= 1, and every value is finite.
void validate(const Trajectory& t);

// Pairs closer than this in x are degenerate (no slope evidence) and skipped.
inline constexpr double kDegeneratePairEpsilon = 1e-8;

// Largest difference quotient sup |ys_i - ys_j| / |xs_i - xs_j| over all
// non-degenerate pairs; 0 when no pair qualifies.
double pairwise_lipschitz(std::span<const double> xs, std::span<const double> ys);

struct LipschitzOptions {
  // Trajectories longer than this are estimated from a random pair subsample
  // instead of all H*(H-1)/2 pairs, and the result is flagged approximate.
  std::size_t exact_length_threshold = 1000;
  std::size_t sample_pairs = 1'000'000;
  std::uint64_t seed = 0;
};

struct LipschitzEstimate {
  std::vector<double> values;  // one per state dimension
  bool exact = true;
};

// Per-dimension array against the trajectory's own rewards.
LipschitzEstimate trajectory_lipschitz_array(const Trajectory& t,
                                             const LipschitzOptions& opts = {});

// Per-dimension array against an arbitrary aligned target series (used by the
// discounted-return feedback variant).
LipschitzEstimate per_dimension_lipschitz(
    const std::vector<std::vector<double>>& states,
    std::span<const double> target, const LipschitzOptions& opts = {});

// Exponential blend tau*current + (1-tau)*observed, exact at tau in {0, 1}.
std::vector<double> soft_update(const std::vector<double>& current,
                                const std::vector<double>& observed,
                                double tau);

// Folds per-trajectory estimates: the first observation initializes the
// array, later ones are soft-updated into it; exactness is the AND over
// observations.
class LipschitzAccumulator {
 public:
  explicit LipschitzAccumulator(double tau);
  void observe(const LipschitzEstimate& estimate);
  bool empty() const { return count_ == 0; }
  std::size_t count() const { return count_; }
  const std::vector<double>& values() const;
  bool exact() const { return exact_; }

 private:
  double tau_;
  std::vector<double> values_;
  bool exact_ = true;
  std::size_t count_ = 0;
};

// Suffix discounted returns R_t = sum_{j>=t} gamma^(j-t) r_j for gamma in
// [0, 1).  Feeding the result in place of the reward series gives the
// discounted-return ("dr") feedback variant.
std::vector<double> discounted_return_series(std::span<const double> rewards,
                                             double gamma);
std::vector<double> discounted_return_series(const Trajectory& t, double gamma);

// Closed-form horizon-H value-variation bound
//   (1 - (gamma*k2)^H) * k1 / (1 - gamma*k2)
// for per-step reward variation bound k1 and transition variation bound k2;
// equals the partial sum sum_{t<H} (gamma*k2)^t * k1.  Throws
// std::domain_error when gamma*k2 == 1 (use the H-term partial sum directly
// in that case).
double horizon_value_bound(double k1, double k2, double gamma, int horizon);

// ------------------------------------------------------------------ CSV IO
//
// Trace files hold one row per step:
//   episode,t,s0..s{n-1},sc0..sc{m-1},r
// where s* are source observation dims (may be absent), sc* the augmented
// state and r the extrinsic reward.  Doubles are written in shortest
// round-trip form, so write/read is bit-exact.

struct EpisodeTrace {
  std::vector<std::vector<double>> source_states;  // H x n; empty when n == 0
  Trajectory trajectory;                           // augmented states + rewards
};

void write_trace_csv(std::ostream& out, std::span<const EpisodeTrace> episodes);
std::vector<EpisodeTrace> read_trace_csv(std::istream& in);

}  // namespace lesr::lip
