#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lesr/dsl.hpp"
#include "lesr/llm.hpp"
#include "lesr/td3.hpp"

// The full candidate-sampling loop: I iterations of (sample K candidate
// program pairs -> train each for n_small steps -> score them with
// per-dimension Lipschitz feedback and policy performance -> fold the
// results into the next prompt), then one fresh n_final-step training of the
// best candidate.
namespace lesr::orch {

enum class FeedbackVariant { Reward, DiscountedReturn, SpectralNorm };
std::string to_string(FeedbackVariant v);
FeedbackVariant feedback_variant_from_string(const std::string& name);

struct LesrConfig {
  std::string env_id = "pointmaze-dense";
  int K = 3;  // candidates per iteration
  int I = 2;  // iterations
  long n_small = 20'000;
  long n_final = 50'000;
  // Unset picks the environment default: 0.02 dense, 0.2 sparse.
  std::optional<double> intrinsic_weight;
  double tau = 0.9;    // Lipschitz soft-update rate across episodes
  double gamma = 0.99; // discount (shared by the trainer and dr feedback)
  std::uint64_t seed = 0;
  FeedbackVariant feedback = FeedbackVariant::Reward;
  std::filesystem::path out_dir;  // run artifacts land here

  bool mock = true;             // offline deterministic generator
  llm::RemoteOptions remote;    // used when mock == false
  int llm_retry_budget = 3;
  double llm_temperature = 1.0;

  td3::TrainConfig trainer;  // total_steps/seed/intrinsic_weight overridden
  int workers = 0;           // 0 -> min(K, hardware cores)

  double resolved_intrinsic_weight() const;
};

// Throws std::invalid_argument naming the offending field.
void validate(const LesrConfig& cfg);

struct CandidateOutcome {
  llm::Candidate candidate;
  bool disqualified = false;
  std::string disqualification_reason;
  double nu = 0.0;
  double success_rate = 0.0;
  // Per-dimension Lipschitz array over the augmented state (reward and
  // discounted-return variants) or the single spectral-norm bound of the
  // trained critic (smaller of the twins).
  std::vector<double> feedback_values;
  bool feedback_exact = true;
  td3::TrainResult training;
};

struct IterationRecord {
  int index = 1;  // 1-based
  std::string generation_prompt;
  std::vector<CandidateOutcome> outcomes;
  std::vector<std::string> rejected_reasons;
  std::string results_table;  // the text embedded into the feedback prompt
  std::string analysis_prompt;
  std::string analysis_text;
  bool failed = false;  // every sampled candidate disqualified
};

struct BestRef {
  int iteration = 0;  // 1-based
  int candidate = 0;  // slot id within the iteration
  const CandidateOutcome* outcome = nullptr;
};

struct RunSummary {
  std::string status;  // "completed" or "aborted: <reason>"
  std::vector<IterationRecord> iterations;
  BestRef best;
  td3::TrainResult final_training;
  std::filesystem::path run_dir;
};

// Samples and scores one iteration's candidates (trainings may run on a
// small worker pool; aggregation is order-independent).  Candidate k of
// iteration i trains with seed cfg.seed + 1 + (i-1)*K + k.
IterationRecord run_iteration(int itr_index, const llm::PromptBundle& prompt,
                              const LesrConfig& cfg, llm::Generator& generator);

// Total-order selection: maximal nu, ties by smaller mean feedback value,
// then earlier iteration, then lower candidate id.  Throws
// std::runtime_error when every candidate is disqualified.
BestRef select_best(const std::vector<IterationRecord>& records);

// The complete loop.  Persists per-candidate artifacts and manifest.json
// under cfg.out_dir; the manifest is flushed even when an iteration aborts,
// so a failed run leaves a post-mortem record.
RunSummary run_lesr(const LesrConfig& cfg);

// Program files and per-candidate program.dsl artifacts: a `repr:` section
// followed by a `reward:` section, no code fences.
std::string format_program_sections(const dsl::ReprProgram& repr,
                                    const dsl::RewardProgram& reward);
std::pair<dsl::ReprProgram, dsl::RewardProgram> parse_program_sections(
    const std::string& text, int obs_dim);

// Canonical manifest text with every key containing "wall" removed —
// the run fingerprint that must be identical across reruns at a fixed seed.
std::string manifest_fingerprint(const std::string& manifest_json_text);

// Fixed prompt inputs for an environment id (task description and the
// per-dimension detail table).
llm::PromptVars prompt_vars_for_env(const std::string& env_id);

}  // namespace lesr::orch
