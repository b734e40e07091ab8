#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lesr/dsl.hpp"

// Prompt construction, candidate-program generation (remote chat-completion
// endpoint or deterministic offline mock), and program extraction from
// responses.
namespace lesr::llm {

enum class TemplateId { Initial, Feedback, Subsequent };

struct PromptVars {
  std::string task_description;  // Initial + Subsequent
  int total_dim = 0;             // Initial + Subsequent
  std::string detail_content;    // Initial + Subsequent
  std::string former_history;    // Subsequent only
  std::string iteration_results; // Feedback only
  int sample_count = 0;          // Feedback only
};

struct PromptBundle {
  TemplateId id = TemplateId::Initial;
  std::string system_text;
  std::string user_text;
};

// Substitutes vars into the requested template; the expression-language
// grammar block is embedded automatically.  Throws std::invalid_argument
// naming any missing variable.  Identical vars produce byte-identical text.
PromptBundle build_prompt(TemplateId id, const PromptVars& vars);

struct Candidate {
  int id = 0;  // slot index within one generation call
  dsl::ReprProgram repr;
  dsl::RewardProgram reward;
  std::string provenance;     // "mock:<pool index>" or remote model id
  std::string response_text;  // raw response the programs were extracted from
};

// Raised when a response carries no usable program sections.  Parse errors
// inside a section propagate as dsl::ParseError with their source span.
struct ExtractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when the generator itself fails (endpoint unreachable, all
// candidate slots exhausted).
struct GeneratorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Finds the first fenced code block tagged `dsl` (or, failing that, the
// first fenced block containing a `repr:` line), splits the `repr:` and
// `reward:` sections, and parses both against the source-state width.
std::pair<dsl::ReprProgram, dsl::RewardProgram> extract_programs(
    const std::string& response_text, int state_dim);

class Generator {
 public:
  virtual ~Generator() = default;
  virtual std::string name() const = 0;
  // One chat completion; throws GeneratorError on transport-level failure.
  virtual std::string complete(const std::string& system_text,
                               const std::string& user_text) = 0;
  // Identifies where the most recent completion came from (model id or mock
  // pool index); recorded as candidate provenance.
  virtual std::string last_provenance() const { return name(); }
};

// Deterministic offline stand-in: draws responses from a fixed pool,
// starting at an offset keyed by the seed and advancing one entry per call.
// The built-in pool covers distance, displacement, direction, energy and
// absolute-sum features, plus one malformed and one NaN-producing entry to
// exercise the rejection and disqualification paths.  Candidate-generation
// prompts draw from the pool; feedback-analysis prompts return a canned
// analysis text.
class MockGenerator : public Generator {
 public:
  explicit MockGenerator(std::uint64_t seed);
  MockGenerator(std::uint64_t seed, std::vector<std::string> pool);

  std::string name() const override { return "mock"; }
  std::string complete(const std::string& system_text,
                       const std::string& user_text) override;
  std::string last_provenance() const override { return last_provenance_; }

  static const std::vector<std::string>& builtin_pool();
  static const std::string& canned_analysis();

 private:
  std::vector<std::string> pool_;
  std::size_t cursor_ = 0;
  std::string last_provenance_ = "mock";
};

struct RemoteOptions {
  std::string endpoint;  // http(s)://host[:port]/path
  std::string model;
  // Name of the environment variable holding the API key.  Empty disables
  // the Authorization header (local test servers).
  std::string api_key_env = "LESR_API_KEY";
  double temperature = 1.0;
  int timeout_seconds = 120;
  int transport_retries = 3;
};

// Chat-completions client: posts {model, messages, temperature} and reads
// choices[0].message.content.  Construction fails fast when the configured
// key variable is unset.
class HttpGenerator : public Generator {
 public:
  explicit HttpGenerator(RemoteOptions options);
  std::string name() const override { return "remote:" + options_.model; }
  std::string complete(const std::string& system_text,
                       const std::string& user_text) override;

 private:
  RemoteOptions options_;
  std::string api_key_;
};

// Fills up to K candidate slots from the generator.  An invalid response
// (no block, parse failure, dimension mismatch) is retried up to
// retry_budget times for its slot, then the slot is dropped; every
// rejection is appended to rejected_reasons when provided.  Throws
// GeneratorError when no slot could be filled.
std::vector<Candidate> generate_candidates(
    Generator& generator, const PromptBundle& prompt, int K, int obs_dim,
    std::vector<std::string>* rejected_reasons = nullptr, int retry_budget = 3);

// Single feedback-analysis completion (the chain-of-thought suggestions
// pass between iterations).
std::string request_analysis(Generator& generator, const PromptBundle& prompt);

}  // namespace lesr::llm
