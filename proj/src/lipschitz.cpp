#include "lesr/lipschitz.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "lesr/rng.hpp"
#include "lesr/util.hpp"

namespace lesr::lip {
namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

// Core per-dimension sweep shared by the exact and sampled paths: for each
// requested (a, b) pair, fold |r_a - r_b| / |x_a - x_b| into every
// dimension's running maximum.
void fold_pair(const std::vector<std::vector<double>>& states,
               std::span<const double> target, std::size_t a, std::size_t b,
               std::vector<double>& best) {
  double dr = std::fabs(target[a] - target[b]);
  const std::vector<double>& sa = states[a];
  const std::vector<double>& sb = states[b];
  for (std::size_t i = 0; i < best.size(); ++i) {
    double dx = std::fabs(sa[i] - sb[i]);
    if (dx < kDegeneratePairEpsilon) continue;
    double q = dr / dx;
    if (q > best[i]) best[i] = q;
  }
}

}  // namespace

void validate(const Trajectory& t) {
  require(t.states.size() >= 2, "trajectory must have length >= 2");
  require(t.rewards.size() == t.states.size(),
          "trajectory rewards must align with states");
  std::size_t dim = t.states[0].size();
  require(dim >= 1, "trajectory states must have dimension >= 1");
  for (std::size_t i = 0; i < t.states.size(); ++i) {
    require(t.states[i].size() == dim,
            "trajectory state dimension mismatch at step " + std::to_string(i));
    for (double v : t.states[i])
      require(std::isfinite(v),
              "non-finite state value at step " + std::to_string(i));
    require(std::isfinite(t.rewards[i]),
            "non-finite reward at step " + std::to_string(i));
  }
}

double pairwise_lipschitz(std::span<const double> xs,
                          std::span<const double> ys) {
  require(xs.size() == ys.size(), "series length mismatch");
  require(xs.size() >= 2, "series must have length >= 2");
  double best = 0.0;
  for (std::size_t a = 0; a + 1 < xs.size(); ++a) {
    for (std::size_t b = a + 1; b < xs.size(); ++b) {
      double dx = std::fabs(xs[a] - xs[b]);
      if (dx < kDegeneratePairEpsilon) continue;
      double q = std::fabs(ys[a] - ys[b]) / dx;
      if (q > best) best = q;
    }
  }
  return best;
}

LipschitzEstimate per_dimension_lipschitz(
    const std::vector<std::vector<double>>& states,
    std::span<const double> target, const LipschitzOptions& opts) {
  require(states.size() == target.size(),
          "target series must align with states");
  require(states.size() >= 2, "need at least 2 steps");
  std::size_t h = states.size();
  std::size_t dim = states[0].size();
  for (const auto& row : states)
    require(row.size() == dim, "state dimension mismatch");

  LipschitzEstimate est;
  est.values.assign(dim, 0.0);
  if (h <= opts.exact_length_threshold) {
    for (std::size_t a = 0; a + 1 < h; ++a)
      for (std::size_t b = a + 1; b < h; ++b)
        fold_pair(states, target, a, b, est.values);
    est.exact = true;
    return est;
  }
  Rng rng(opts.seed);
  for (std::size_t n = 0; n < opts.sample_pairs; ++n) {
    std::size_t a = rng.index(h);
    std::size_t b = rng.index(h - 1);
    if (b >= a) ++b;  // uniform over ordered pairs with a != b
    fold_pair(states, target, a, b, est.values);
  }
  est.exact = false;
  return est;
}

LipschitzEstimate trajectory_lipschitz_array(const Trajectory& t,
                                             const LipschitzOptions& opts) {
  validate(t);
  return per_dimension_lipschitz(t.states, t.rewards, opts);
}

std::vector<double> soft_update(const std::vector<double>& current,
                                const std::vector<double>& observed,
                                double tau) {
  require(current.size() == observed.size(), "array length mismatch");
  require(tau >= 0.0 && tau <= 1.0, "tau must lie in [0, 1]");
  if (tau == 0.0) return observed;
  if (tau == 1.0) return current;
  std::vector<double> out(current.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = tau * current[i] + (1.0 - tau) * observed[i];
  return out;
}

LipschitzAccumulator::LipschitzAccumulator(double tau) : tau_(tau) {
  require(tau >= 0.0 && tau <= 1.0, "tau must lie in [0, 1]");
}

void LipschitzAccumulator::observe(const LipschitzEstimate& estimate) {
  if (count_ == 0) {
    values_ = estimate.values;
  } else {
    values_ = soft_update(values_, estimate.values, tau_);
  }
  exact_ = exact_ && estimate.exact;
  ++count_;
}

const std::vector<double>& LipschitzAccumulator::values() const {
  if (count_ == 0)
    throw std::logic_error("no trajectories observed");
  return values_;
}

std::vector<double> discounted_return_series(std::span<const double> rewards,
                                             double gamma) {
  require(gamma >= 0.0 && gamma < 1.0, "gamma must lie in [0, 1)");
  std::vector<double> out(rewards.size(), 0.0);
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc = rewards[i] + gamma * acc;
    out[i] = acc;
  }
  return out;
}

std::vector<double> discounted_return_series(const Trajectory& t,
                                             double gamma) {
  validate(t);
  return discounted_return_series(std::span<const double>(t.rewards), gamma);
}

double horizon_value_bound(double k1, double k2, double gamma, int horizon) {
  require(k1 >= 0.0, "k1 must be >= 0");
  require(k2 >= 0.0, "k2 must be >= 0");
  require(gamma >= 0.0, "gamma must be >= 0");
  require(horizon >= 0, "horizon must be >= 0");
  double x = gamma * k2;
  if (x == 1.0)
    throw std::domain_error(
        "gamma*k2 == 1 makes the closed form singular; sum the H-term "
        "partial series sum_{t<H} (gamma*k2)^t * k1 directly");
  if (x == 0.0) return horizon >= 1 ? k1 : 0.0;
  return (1.0 - std::pow(x, horizon)) * k1 / (1.0 - x);
}

// ------------------------------------------------------------------ CSV IO

void write_trace_csv(std::ostream& out,
                     std::span<const EpisodeTrace> episodes) {
  require(!episodes.empty(), "no episodes to write");
  std::size_t n = episodes[0].source_states.empty()
                      ? 0
                      : episodes[0].source_states[0].size();
  std::size_t m = episodes[0].trajectory.state_dim();
  out << "episode,t";
  for (std::size_t i = 0; i < n; ++i) out << ",s" << i;
  for (std::size_t i = 0; i < m; ++i) out << ",sc" << i;
  out << ",r\n";
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const EpisodeTrace& ep = episodes[e];
    validate(ep.trajectory);
    std::size_t h = ep.trajectory.length();
    require(ep.trajectory.state_dim() == m,
            "episode " + std::to_string(e) + " state dimension mismatch");
    require(n == 0 ? ep.source_states.empty() : ep.source_states.size() == h,
            "episode " + std::to_string(e) + " source states misaligned");
    for (std::size_t t = 0; t < h; ++t) {
      out << e << ',' << t;
      if (n > 0) {
        require(ep.source_states[t].size() == n,
                "episode " + std::to_string(e) + " source dim mismatch");
        for (double v : ep.source_states[t]) out << ',' << format_double(v);
      }
      for (double v : ep.trajectory.states[t]) out << ',' << format_double(v);
      out << ',' << format_double(ep.trajectory.rewards[t]) << '\n';
    }
  }
}

namespace {

[[noreturn]] void csv_fail(std::size_t line_no, const std::string& message) {
  throw std::invalid_argument("trace csv line " + std::to_string(line_no) +
                              ": " + message);
}

}  // namespace

std::vector<EpisodeTrace> read_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line))
    throw std::invalid_argument("trace csv: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string_view> header = split_csv_line(line);
  std::size_t col = 0;
  auto expect = [&](std::string_view name) {
    if (col >= header.size() || header[col] != name)
      throw std::invalid_argument("trace csv: missing column '" +
                                  std::string(name) + "'");
    ++col;
  };
  expect("episode");
  expect("t");
  std::size_t n = 0;
  while (col < header.size() && header[col] == "s" + std::to_string(n)) {
    ++col;
    ++n;
  }
  std::size_t m = 0;
  while (col < header.size() && header[col] == "sc" + std::to_string(m)) {
    ++col;
    ++m;
  }
  if (m == 0) throw std::invalid_argument("trace csv: missing column 'sc0'");
  expect("r");
  if (col != header.size())
    throw std::invalid_argument("trace csv: unexpected column '" +
                                std::string(header[col]) + "'");

  std::vector<EpisodeTrace> episodes;
  std::size_t line_no = 1;
  long expected_episode = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> cells = split_csv_line(line);
    if (cells.size() != header.size())
      csv_fail(line_no, "expected " + std::to_string(header.size()) +
                            " cells, got " + std::to_string(cells.size()));
    std::vector<double> row(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      try {
        row[i] = parse_double(cells[i]);
      } catch (const std::invalid_argument& e) {
        csv_fail(line_no, e.what());
      }
    }
    long episode = static_cast<long>(row[0]);
    if (episode == expected_episode + 1) {
      episodes.emplace_back();
      ++expected_episode;
    } else if (episode != expected_episode) {
      csv_fail(line_no, "episode indices must be contiguous");
    }
    EpisodeTrace& ep = episodes.back();
    if (n > 0)
      ep.source_states.emplace_back(row.begin() + 2, row.begin() + 2 + n);
    ep.trajectory.states.emplace_back(row.begin() + 2 + n,
                                      row.begin() + 2 + n + m);
    ep.trajectory.rewards.push_back(row[2 + n + m]);
  }
  if (episodes.empty())
    throw std::invalid_argument("trace csv: no data rows");
  for (std::size_t e = 0; e < episodes.size(); ++e) validate(episodes[e].trajectory);
  return episodes;
}

}  // namespace lesr::lip
