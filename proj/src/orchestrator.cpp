#include "lesr/orchestrator.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "lesr/env.hpp"
#include "lesr/lipschitz.hpp"
#include "lesr/nn.hpp"
#include "lesr/util.hpp"

namespace lesr::orch {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kSelectionRule[] =
    "argmax nu; ties broken by smaller mean feedback value, then earlier "
    "iteration, then lower candidate id";

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("failed while writing " + path.string());
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Per-candidate feedback: the per-dimension Lipschitz array of the augmented
// state against the extrinsic reward (or discounted return), blended across
// evaluation episodes, or the spectral-norm bound of the trained critic.
std::pair<std::vector<double>, bool> compute_feedback(
    const td3::TrainResult& training, const LesrConfig& cfg) {
  if (cfg.feedback == FeedbackVariant::SpectralNorm) {
    const double b1 = nn::value_lipschitz_bound(training.critic1);
    const double b2 = nn::value_lipschitz_bound(training.critic2);
    return {{std::min(b1, b2)}, true};
  }
  lip::LipschitzAccumulator acc(cfg.tau);
  for (const auto& trace : training.eval_traces) {
    lip::LipschitzEstimate est;
    if (cfg.feedback == FeedbackVariant::Reward) {
      est = lip::trajectory_lipschitz_array(trace.trajectory);
    } else {
      const auto series =
          lip::discounted_return_series(trace.trajectory, cfg.gamma);
      est = lip::per_dimension_lipschitz(trace.trajectory.states, series);
    }
    acc.observe(est);
  }
  if (acc.empty()) return {{}, true};
  return {acc.values(), acc.exact()};
}

std::vector<double> min_max_normalized(const std::vector<double>& v) {
  std::vector<double> out(v.size(), 0.0);
  if (v.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double lo = *lo_it, hi = *hi_it;
  if (hi > lo)
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - lo) / (hi - lo);
  return out;
}

std::string candidate_table_entry(int iteration, const CandidateOutcome& o,
                                  const LesrConfig& cfg) {
  std::ostringstream s;
  s << "### candidate " << o.candidate.id << " (iteration " << iteration
    << ")\n";
  s << "state revision code and intrinsic reward code:\n"
    << format_program_sections(o.candidate.repr, o.candidate.reward);
  if (o.disqualified) {
    s << "training disqualified: " << o.disqualification_reason << "\n";
    return s.str();
  }
  s << "final policy performance(accumulated reward): " << format_double(o.nu)
    << "\n";
  if (cfg.feedback == FeedbackVariant::SpectralNorm) {
    s << "spectral-norm bound of the trained critic: "
      << (o.feedback_values.empty() ? "n/a"
                                    : format_double(o.feedback_values[0]))
      << "\n";
    return s.str();
  }
  s << "Lipschitz constants of the state revise dims with the "
    << (cfg.feedback == FeedbackVariant::Reward ? "reward" : "discounted return")
    << " (raw | min-max normalized):\n";
  const auto norm = min_max_normalized(o.feedback_values);
  for (std::size_t d = 0; d < o.feedback_values.size(); ++d) {
    s << "s[" << d << "]: " << format_double(o.feedback_values[d]) << " | "
      << format_double(norm[d]) << "\n";
  }
  return s.str();
}

std::string build_results_table(const IterationRecord& rec,
                                const LesrConfig& cfg) {
  std::ostringstream s;
  for (const auto& o : rec.outcomes)
    s << candidate_table_entry(rec.index, o, cfg) << "\n";
  return s.str();
}

json config_json(const LesrConfig& cfg) {
  json generator;
  if (cfg.mock) {
    generator = {{"mode", "mock"}};
  } else {
    generator = {{"mode", "remote"},
                 {"endpoint", cfg.remote.endpoint},
                 {"model", cfg.remote.model},
                 {"api_key_env", cfg.remote.api_key_env},
                 {"timeout_seconds", cfg.remote.timeout_seconds},
                 {"transport_retries", cfg.remote.transport_retries}};
  }
  generator["temperature"] = cfg.llm_temperature;
  generator["retry_budget"] = cfg.llm_retry_budget;

  const auto& t = cfg.trainer;
  json trainer = {{"batch_size", t.batch_size},
                  {"target_update_rate", t.target_update_rate},
                  {"policy_noise", t.policy_noise},
                  {"noise_clip", t.noise_clip},
                  {"policy_delay", t.policy_delay},
                  {"exploration_noise", t.exploration_noise},
                  {"replay_capacity", t.replay_capacity},
                  {"eval_episodes", t.eval_episodes},
                  {"eval_interval", t.eval_interval},
                  {"start_steps", t.start_steps},
                  {"hidden_sizes", t.hidden_sizes},
                  {"actor_lr", t.actor_lr},
                  {"critic_lr", t.critic_lr},
                  {"horizon", t.horizon},
                  {"success_radius", t.success_radius}};

  return json{{"env", cfg.env_id},
              {"K", cfg.K},
              {"I", cfg.I},
              {"n_small", cfg.n_small},
              {"n_final", cfg.n_final},
              {"intrinsic_weight", cfg.resolved_intrinsic_weight()},
              {"tau", cfg.tau},
              {"gamma", cfg.gamma},
              {"seed", cfg.seed},
              {"feedback", to_string(cfg.feedback)},
              {"generator", generator},
              {"trainer", trainer},
              {"workers", cfg.workers},
              {"out_dir", cfg.out_dir.string()}};
}

json candidate_json(const CandidateOutcome& o) {
  json j = {{"id", o.candidate.id},
            {"provenance", o.candidate.provenance},
            {"program",
             format_program_sections(o.candidate.repr, o.candidate.reward)},
            {"disqualified", o.disqualified},
            {"feedback_values", o.feedback_values},
            {"feedback_exact", o.feedback_exact}};
  if (o.disqualified) {
    j["disqualification_reason"] = o.disqualification_reason;
    j["nu"] = nullptr;
    j["success_rate"] = nullptr;
  } else {
    j["nu"] = o.nu;
    j["success_rate"] = o.success_rate;
  }
  j["wall_seconds"] = o.training.curve.empty()
                          ? 0.0
                          : o.training.curve.back().wall_seconds;
  return j;
}

json iteration_json(const IterationRecord& rec) {
  json candidates = json::array();
  for (const auto& o : rec.outcomes) candidates.push_back(candidate_json(o));
  return json{{"index", rec.index},
              {"prompt", rec.generation_prompt},
              {"analysis_prompt", rec.analysis_prompt},
              {"analysis", rec.analysis_text},
              {"results_table", rec.results_table},
              {"rejected", rec.rejected_reasons},
              {"failed", rec.failed},
              {"candidates", candidates}};
}

void persist_candidate(const fs::path& dir, const CandidateOutcome& o,
                       FeedbackVariant variant) {
  fs::create_directories(dir);
  write_text_file(dir / "program.dsl",
                  format_program_sections(o.candidate.repr, o.candidate.reward));
  write_text_file(dir / "response.txt", o.candidate.response_text);
  {
    std::ostringstream curve;
    td3::write_curve_csv(curve, o.training.curve);
    write_text_file(dir / "train_curve.csv", curve.str());
  }
  if (!o.disqualified) {
    std::ostringstream traces;
    lip::write_trace_csv(traces, o.training.eval_traces);
    write_text_file(dir / "trajectories.csv", traces.str());

    std::ostringstream lips;
    lips << "name,value\n";
    if (variant == FeedbackVariant::SpectralNorm) {
      lips << "sn_bound," << format_double(o.feedback_values.at(0)) << "\n";
    } else {
      for (std::size_t d = 0; d < o.feedback_values.size(); ++d)
        lips << "c[" << d << "]," << format_double(o.feedback_values[d]) << "\n";
    }
    write_text_file(dir / "lipschitz.csv", lips.str());
  }
}

void flush_manifest(const fs::path& out_dir, const json& manifest) {
  write_text_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace

std::string to_string(FeedbackVariant v) {
  switch (v) {
    case FeedbackVariant::Reward: return "reward";
    case FeedbackVariant::DiscountedReturn: return "dr";
    case FeedbackVariant::SpectralNorm: return "sn";
  }
  return "reward";
}

FeedbackVariant feedback_variant_from_string(const std::string& name) {
  if (name == "reward") return FeedbackVariant::Reward;
  if (name == "dr") return FeedbackVariant::DiscountedReturn;
  if (name == "sn") return FeedbackVariant::SpectralNorm;
  throw std::invalid_argument("unknown feedback variant '" + name +
                              "' (expected reward, dr, or sn)");
}

double LesrConfig::resolved_intrinsic_weight() const {
  if (intrinsic_weight) return *intrinsic_weight;
  return env::is_sparse_env(env_id) ? 0.2 : 0.02;
}

void validate(const LesrConfig& cfg) {
  auto fail = [](const std::string& what) {
    throw std::invalid_argument("run config: " + what);
  };
  try {
    (void)env::make_env(cfg.env_id);
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  if (cfg.K < 1) fail("K must be >= 1");
  if (cfg.I < 1) fail("I must be >= 1");
  if (cfg.n_small < 1) fail("n_small must be >= 1");
  if (cfg.n_final < 1) fail("n_final must be >= 1");
  if (cfg.intrinsic_weight &&
      !(std::isfinite(*cfg.intrinsic_weight) && *cfg.intrinsic_weight >= 0.0))
    fail("w must be finite and >= 0");
  if (!(cfg.tau >= 0.0 && cfg.tau <= 1.0)) fail("tau must be in [0, 1]");
  if (!(cfg.gamma >= 0.0 && cfg.gamma < 1.0)) fail("gamma must be in [0, 1)");
  if (cfg.llm_retry_budget < 0) fail("llm_retry_budget must be >= 0");
  if (!(std::isfinite(cfg.llm_temperature) && cfg.llm_temperature >= 0.0))
    fail("llm_temperature must be finite and >= 0");
  if (cfg.workers < 0) fail("workers must be >= 0");
  if (!cfg.mock) {
    if (cfg.remote.endpoint.empty()) fail("remote endpoint is empty");
    if (cfg.remote.model.empty()) fail("remote model is empty");
  }
  td3::TrainConfig probe = cfg.trainer;
  probe.total_steps = std::max({cfg.n_small, cfg.n_final, long{1}});
  probe.intrinsic_weight = cfg.resolved_intrinsic_weight();
  td3::validate(probe);
}

llm::PromptVars prompt_vars_for_env(const std::string& env_id) {
  const bool sparse = env::is_sparse_env(env_id);
  llm::PromptVars vars;
  vars.total_dim = env::PointMaze::kObservationDim;
  std::string reward_sentence =
      sparse ? "The environment reward is 1 on the step the agent reaches the "
               "target and 0 on every other step."
             : "The environment reward each step is the negative Euclidean "
               "distance between the agent and the target.";
  vars.task_description =
      "A point agent moves across a flat 10x10 arena by applying a 2-D force "
      "in [-1, 1]^2 each step; velocity is damped and the position is clamped "
      "to the arena. The agent starts near one corner and must reach a fixed "
      "target near the opposite corner. " +
      reward_sentence +
      " An episode ends in success when the agent comes within the success "
      "radius of the target, or is truncated at the step limit.";
  vars.detail_content =
      "s[0]: agent x position in [0, 10]\n"
      "s[1]: agent y position in [0, 10]\n"
      "s[2]: target x position in [0, 10]\n"
      "s[3]: target y position in [0, 10]\n";
  return vars;
}

std::string format_program_sections(const dsl::ReprProgram& repr,
                                    const dsl::RewardProgram& reward) {
  return "repr:\n" + dsl::format_program(repr) + "reward:\n" +
         dsl::format_program(reward);
}

std::pair<dsl::ReprProgram, dsl::RewardProgram> parse_program_sections(
    const std::string& text, int obs_dim) {
  return llm::extract_programs("```dsl\n" + text + "\n```\n", obs_dim);
}

IterationRecord run_iteration(int itr_index, const llm::PromptBundle& prompt,
                              const LesrConfig& cfg,
                              llm::Generator& generator) {
  validate(cfg);
  if (itr_index < 1) throw std::invalid_argument("iteration index must be >= 1");

  IterationRecord rec;
  rec.index = itr_index;
  rec.generation_prompt = prompt.user_text;

  auto candidates = llm::generate_candidates(
      generator, prompt, cfg.K, env::PointMaze::kObservationDim,
      &rec.rejected_reasons, cfg.llm_retry_budget);
  rec.outcomes.resize(candidates.size());

  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  int workers = cfg.workers > 0 ? cfg.workers : static_cast<int>(hw);
  workers = std::min<int>(workers, static_cast<int>(candidates.size()));

  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;

  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < candidates.size();) {
      try {
        const llm::Candidate& cand = candidates[i];
        td3::TrainConfig tcfg = cfg.trainer;
        tcfg.total_steps = cfg.n_small;
        tcfg.gamma = cfg.gamma;
        tcfg.intrinsic_weight = cfg.resolved_intrinsic_weight();
        tcfg.seed = cfg.seed + 1 +
                    static_cast<std::uint64_t>(itr_index - 1) *
                        static_cast<std::uint64_t>(cfg.K) +
                    static_cast<std::uint64_t>(cand.id);

        CandidateOutcome out;
        out.candidate = cand;
        out.training = td3::train(cfg.env_id, cand.repr, cand.reward, tcfg);
        if (out.training.disqualified) {
          out.disqualified = true;
          out.disqualification_reason = out.training.disqualification_reason;
        } else {
          out.nu = out.training.nu;
          out.success_rate = out.training.success_rate;
          auto [values, exact] = compute_feedback(out.training, cfg);
          out.feedback_values = std::move(values);
          out.feedback_exact = exact;
        }
        rec.outcomes[i] = std::move(out);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };

  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  rec.failed = std::all_of(rec.outcomes.begin(), rec.outcomes.end(),
                           [](const CandidateOutcome& o) { return o.disqualified; });
  rec.results_table = build_results_table(rec, cfg);
  return rec;
}

BestRef select_best(const std::vector<IterationRecord>& records) {
  BestRef best;
  double best_mean_feedback = 0.0;
  for (const auto& rec : records) {
    for (const auto& o : rec.outcomes) {
      if (o.disqualified) continue;
      const double mean_feedback = mean_of(o.feedback_values);
      bool take = false;
      if (best.outcome == nullptr) {
        take = true;
      } else if (o.nu != best.outcome->nu) {
        take = o.nu > best.outcome->nu;
      } else if (mean_feedback != best_mean_feedback) {
        take = mean_feedback < best_mean_feedback;
      } else if (rec.index != best.iteration) {
        take = rec.index < best.iteration;
      } else {
        take = o.candidate.id < best.candidate;
      }
      if (take) {
        best.iteration = rec.index;
        best.candidate = o.candidate.id;
        best.outcome = &o;
        best_mean_feedback = mean_feedback;
      }
    }
  }
  if (best.outcome == nullptr)
    throw std::runtime_error(
        "no valid candidate: every sampled candidate was disqualified");
  return best;
}

RunSummary run_lesr(const LesrConfig& cfg) {
  validate(cfg);
  if (cfg.out_dir.empty())
    throw std::invalid_argument("run config: out_dir must be set");
  fs::create_directories(cfg.out_dir);

  RunSummary summary;
  summary.run_dir = cfg.out_dir;

  json manifest;
  manifest["config"] = config_json(cfg);
  manifest["selection_rule"] = kSelectionRule;
  manifest["status"] = "running";
  manifest["iterations"] = json::array();

  const auto t0 = std::chrono::steady_clock::now();
  auto total_wall = [&t0] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  };

  try {
    std::unique_ptr<llm::Generator> generator;
    if (cfg.mock) {
      generator = std::make_unique<llm::MockGenerator>(cfg.seed);
    } else {
      llm::RemoteOptions remote = cfg.remote;
      remote.temperature = cfg.llm_temperature;
      generator = std::make_unique<llm::HttpGenerator>(remote);
    }

    llm::PromptVars vars = prompt_vars_for_env(cfg.env_id);
    llm::PromptBundle prompt = llm::build_prompt(llm::TemplateId::Initial, vars);
    std::string history;

    for (int itr = 1; itr <= cfg.I; ++itr) {
      const fs::path iter_dir =
          cfg.out_dir / ("iter_" + std::to_string(itr));
      fs::create_directories(iter_dir);
      write_text_file(iter_dir / "prompt.txt", prompt.user_text);

      IterationRecord rec = run_iteration(itr, prompt, cfg, *generator);

      for (const auto& o : rec.outcomes)
        persist_candidate(
            iter_dir / ("candidate_" + std::to_string(o.candidate.id)), o,
            cfg.feedback);

      llm::PromptVars fb;
      fb.sample_count = static_cast<int>(rec.outcomes.size());
      fb.iteration_results = rec.results_table;
      llm::PromptBundle fb_prompt =
          llm::build_prompt(llm::TemplateId::Feedback, fb);
      rec.analysis_prompt = fb_prompt.user_text;
      rec.analysis_text = llm::request_analysis(*generator, fb_prompt);
      write_text_file(iter_dir / "analysis_prompt.txt", rec.analysis_prompt);
      write_text_file(iter_dir / "analysis.txt", rec.analysis_text);

      history += "--- iteration " + std::to_string(itr) + " results ---\n" +
                 rec.results_table + "--- suggestions after iteration " +
                 std::to_string(itr) + " ---\n" + rec.analysis_text + "\n";

      manifest["iterations"].push_back(iteration_json(rec));
      summary.iterations.push_back(std::move(rec));

      if (itr < cfg.I) {
        vars.former_history = history;
        prompt = llm::build_prompt(llm::TemplateId::Subsequent, vars);
      }
    }

    summary.best = select_best(summary.iterations);
    manifest["best"] = {
        {"iteration", summary.best.iteration},
        {"candidate", summary.best.candidate},
        {"nu", summary.best.outcome->nu},
        {"program",
         format_program_sections(summary.best.outcome->candidate.repr,
                                 summary.best.outcome->candidate.reward)}};

    // Final evaluating stage: fresh networks, n_final steps, no generator
    // involvement.
    td3::TrainConfig tcfg = cfg.trainer;
    tcfg.total_steps = cfg.n_final;
    tcfg.gamma = cfg.gamma;
    tcfg.intrinsic_weight = cfg.resolved_intrinsic_weight();
    tcfg.seed = cfg.seed;
    summary.final_training =
        td3::train(cfg.env_id, summary.best.outcome->candidate.repr,
                   summary.best.outcome->candidate.reward, tcfg);
    if (summary.final_training.disqualified)
      throw std::runtime_error("final training disqualified: " +
                               summary.final_training.disqualification_reason);

    const fs::path final_dir = cfg.out_dir / "final";
    fs::create_directories(final_dir);
    nn::save_params(summary.final_training.actor,
                    (final_dir / "policy.bin").string());
    {
      std::ostringstream eval_csv;
      lip::write_trace_csv(eval_csv, summary.final_training.eval_traces);
      write_text_file(final_dir / "eval.csv", eval_csv.str());
      std::ostringstream curve;
      td3::write_curve_csv(curve, summary.final_training.curve);
      write_text_file(final_dir / "train_curve.csv", curve.str());
    }

    manifest["final"] = {
        {"nu", summary.final_training.nu},
        {"success_rate", summary.final_training.success_rate},
        {"steps", summary.final_training.steps_run},
        {"wall_seconds", summary.final_training.curve.empty()
                             ? 0.0
                             : summary.final_training.curve.back().wall_seconds}};
    manifest["status"] = "completed";
    manifest["wall_seconds_total"] = total_wall();
    flush_manifest(cfg.out_dir, manifest);
    summary.status = "completed";
    return summary;
  } catch (const std::exception& e) {
    manifest["status"] = std::string("aborted: ") + e.what();
    manifest["wall_seconds_total"] = total_wall();
    flush_manifest(cfg.out_dir, manifest);
    throw;
  }
}

std::string manifest_fingerprint(const std::string& manifest_json_text) {
  json j = json::parse(manifest_json_text);
  // Remove every key whose name mentions wall-clock time, recursively.
  std::function<void(json&)> strip = [&](json& node) {
    if (node.is_object()) {
      for (auto it = node.begin(); it != node.end();) {
        if (it.key().find("wall") != std::string::npos) {
          it = node.erase(it);
        } else {
          strip(it.value());
          ++it;
        }
      }
    } else if (node.is_array()) {
      for (auto& item : node) strip(item);
    }
  };
  strip(j);
  return j.dump(2);
}

}  // namespace lesr::orch
