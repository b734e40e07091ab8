#include "lesr/llm.hpp"

#include <stdexcept>
#include <string_view>

#include "lesr/rng.hpp"

namespace lesr::llm {
namespace {

const char kSystemText[] =
    "You are an expert assistant that designs state representations and "
    "intrinsic reward functions for reinforcement learning agents. Answer "
    "with your reasoning followed by one fenced ```dsl code block.";

// --- template texts -------------------------------------------------------
// {placeholders} are substituted by build_prompt; the expression-language
// grammar is injected as {grammar}.

const char kInitialTemplate[] =
    R"(Revise the state representation for a reinforcement learning agent.
=========================================================
The agent's task description is:
{task_description}
=========================================================

The current state is represented by a {total_dim}-dimensional vector of real numbers, denoted as `s`.

Details of each dimension in the state `s` are as follows:
{detail_content}

You should design a task-related state representation based on the source {total_dim} dim to better for reinforcement training, using the detailed information mentioned above to do some caculations, and feel free to do complex caculations, and then concat them to the source state.

Besides, we want you to design an intrinsic reward function based on the state representation.

That is to say, we will:
1. use your `repr:` expressions to get an updated state: updated_s = concat(s, repr outputs)
2. use your `reward:` expression to get an intrinsic reward for the task: r = reward(updated_s)
3. to better design the intrinsic reward, we recommond you use some source dim in the updated_s, which is between s[0] and s[{total_dim_minus_one}]
4. however, you must use the extra dim computed by your `repr:` expressions, which is between s[{total_dim}] and the end of updated_s

Your task is to create two expression blocks: one named `repr:`, which takes the current state `s` as input and computes the extra dimensions appended to the state representation, and one named `reward:`, which takes the updated state `s` as input and computes an intrinsic reward. The expressions must be executable and ready for integration into a reinforcement learning environment.

The expression language is:
{grammar}
The goal is to better for reinforcement training. Lets think step by step. Below is an illustrative example of the expected output:

```dsl
repr:
out: s[0] + s[1]  # each out: line appends one extra dimension
reward:
out: -s[{total_dim}]  # exactly one out: line, using at least one extra dim
```
)";

const char kFeedbackTemplate[] =
    R"(We have successfully trained Reinforcement Learning policy using {sample_count} different state revision codes and intrinsic reward function codes sampled by you, and each pair of code is associated with the training of a policy relatively.

Throughout every state revision code's training process, we monitored:
1. The final policy performance(accumulated reward).
2. Most importantly, every state revise dim's Lipschitz constant with the reward. That is to say, you can see which state revise dim is more related to the reward and which dim can contribute to enhancing the continuity of the reward function mapping.

Here are the results:
{iteration_results}

You should analyze the results mentioned above and give suggestions about how to imporve the performace of the "state revision code".

Here are some tips for how to analyze the results:
(a) if you find a state revision code's performance is very low, then you should analyze to figure out why it fail
(b) if you find some dims' Lipschitz constant very large, you should analyze to figure out what makes it fail
(c) you should also analyze how to imporve the performace of the "state revision code" and "intrinsic reward code" later

Lets think step by step. Your solution should aim to improve the overall performance of the RL policy.
)";

const char kSubsequentTemplate[] =
    R"(Revise the state representation for a reinforcement learning agent.
=========================================================
The agent's task description is:
{task_description}
=========================================================

The current state is represented by a {total_dim}-dimensional vector of real numbers, denoted as `s`.

Details of each dimension in the state `s` are as follows:
{detail_content}

You should design a task-related state representation based on the source {total_dim} dim to better for reinforcement training, using the detailed information mentioned above to do some caculations, and feel free to do complex caculations, and then concat them to the source state.

For this problem, we have some history experience for you, here are some state revision codes we have tried in the former iterations:
{former_history}

Based on the former suggestions. We are seeking an improved state revision code and an improved intrinsic reward code that can enhance the model's performance on the task. The state revised code should incorporate calculations, and the results should be concatenated to the original state.

Besides, We are seeking an improved intrinsic reward code.

That is to say, we will:
1. use your `repr:` expressions to get an updated state: updated_s = concat(s, repr outputs)
2. use your `reward:` expression to get an intrinsic reward for the task: r = reward(updated_s)
3. to better design the intrinsic reward, we recommond you use some source dim in the updated_s, which is between s[0] and s[{total_dim_minus_one}]
4. however, you must use the extra dim computed by your `repr:` expressions, which is between s[{total_dim}] and the end of updated_s

Your task is to create two expression blocks: one named `repr:`, which takes the current state `s` as input and computes the extra dimensions appended to the state representation, and one named `reward:`, which takes the updated state `s` as input and computes an intrinsic reward. The expressions must be executable and ready for integration into a reinforcement learning environment.

The expression language is:
{grammar}
The goal is to better for reinforcement training. Lets think step by step. Below is an illustrative example of the expected output:

```dsl
repr:
out: s[0] + s[1]  # each out: line appends one extra dimension
reward:
out: -s[{total_dim}]  # exactly one out: line, using at least one extra dim
```
)";

void replace_all(std::string& text, std::string_view token,
                 std::string_view value) {
  std::size_t pos = 0;
  while ((pos = text.find(token, pos)) != std::string::npos) {
    text.replace(pos, token.size(), value);
    pos += value.size();
  }
}

void require(bool ok, const char* var) {
  if (!ok)
    throw std::invalid_argument(std::string("prompt variable missing: ") + var);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

}  // namespace

PromptBundle build_prompt(TemplateId id, const PromptVars& vars) {
  std::string text;
  switch (id) {
    case TemplateId::Initial:
    case TemplateId::Subsequent: {
      require(!vars.task_description.empty(), "task_description");
      require(vars.total_dim >= 1, "total_dim");
      require(!vars.detail_content.empty(), "detail_content");
      if (id == TemplateId::Subsequent)
        require(!vars.former_history.empty(), "former_history");
      text = id == TemplateId::Initial ? kInitialTemplate : kSubsequentTemplate;
      replace_all(text, "{task_description}", vars.task_description);
      replace_all(text, "{detail_content}", vars.detail_content);
      replace_all(text, "{total_dim_minus_one}",
                  std::to_string(vars.total_dim - 1));
      replace_all(text, "{total_dim}", std::to_string(vars.total_dim));
      replace_all(text, "{grammar}", dsl::grammar_text());
      if (id == TemplateId::Subsequent)
        replace_all(text, "{former_history}", vars.former_history);
      break;
    }
    case TemplateId::Feedback: {
      require(vars.sample_count >= 1, "sample_count");
      require(!vars.iteration_results.empty(), "iteration_results");
      text = kFeedbackTemplate;
      replace_all(text, "{sample_count}", std::to_string(vars.sample_count));
      replace_all(text, "{iteration_results}", vars.iteration_results);
      break;
    }
  }
  return PromptBundle{id, kSystemText, std::move(text)};
}

std::pair<dsl::ReprProgram, dsl::RewardProgram> extract_programs(
    const std::string& response_text, int state_dim) {
  // Locate the fenced block: prefer ```dsl, else any fence holding a repr:
  // line.
  auto block_of = [&](std::size_t open_tick,
                      std::size_t body_start) -> std::optional<std::string> {
    std::size_t close = response_text.find("```", body_start);
    if (close == std::string::npos) return std::nullopt;
    (void)open_tick;
    return response_text.substr(body_start, close - body_start);
  };

  std::optional<std::string> body;
  std::size_t pos = 0;
  // Pass 1: tagged fences.
  while ((pos = response_text.find("```dsl", pos)) != std::string::npos) {
    std::size_t line_end = response_text.find('\n', pos);
    if (line_end == std::string::npos) break;
    body = block_of(pos, line_end + 1);
    break;
  }
  if (!body) {
    // Pass 2: untagged fences containing a repr: section.
    pos = 0;
    while ((pos = response_text.find("```", pos)) != std::string::npos) {
      std::size_t line_end = response_text.find('\n', pos);
      if (line_end == std::string::npos) break;
      auto candidate = block_of(pos, line_end + 1);
      if (candidate && candidate->find("repr:") != std::string::npos) {
        body = std::move(candidate);
        break;
      }
      pos = line_end + 1;
    }
  }
  if (!body) throw ExtractError("no program block in response");

  // Split the repr: and reward: sections line by line.
  std::string repr_text, reward_text;
  int section = 0;  // 0 none, 1 repr, 2 reward
  std::size_t start = 0;
  const std::string& b = *body;
  while (start <= b.size()) {
    std::size_t nl = b.find('\n', start);
    std::string_view line(b.data() + start,
                          (nl == std::string::npos ? b.size() : nl) - start);
    std::string_view t = trim(line);
    if (t == "repr:") {
      section = 1;
    } else if (t == "reward:") {
      section = 2;
    } else if (section == 1) {
      repr_text.append(line);
      repr_text.push_back('\n');
    } else if (section == 2) {
      reward_text.append(line);
      reward_text.push_back('\n');
    }
    if (nl == std::string::npos) break;
    start = nl + 1;
  }
  if (trim(repr_text).empty()) throw ExtractError("missing repr block");
  if (trim(reward_text).empty()) throw ExtractError("missing reward block");

  dsl::ReprProgram repr = dsl::parse_repr_program(repr_text, state_dim);
  dsl::RewardProgram reward = dsl::parse_reward_program(
      reward_text, state_dim + static_cast<int>(repr.outputs.size()),
      state_dim);
  return {std::move(repr), std::move(reward)};
}

// --- mock generator --------------------------------------------------------

const std::vector<std::string>& MockGenerator::builtin_pool() {
  static const std::vector<std::string> pool = {
      // 0: Euclidean distance feature.
      "Lets think step by step. The agent is at (s[0], s[1]) and the target "
      "at (s[2], s[3]); the single most task-related quantity is the "
      "Euclidean distance between them, and rewarding its decrease guides "
      "the policy directly.\n\n"
      "```dsl\n"
      "repr:\n"
      "out: sqrt((s[2] - s[0])^2 + (s[3] - s[1])^2)\n"
      "reward:\n"
      "out: -s[4]\n"
      "```\n",
      // 1: displacement vector plus distance.
      "Lets think step by step. The displacement components toward the "
      "target tell the policy which direction to push, and the distance "
      "summarizes progress; penalizing the distance makes a smooth intrinsic "
      "reward.\n\n"
      "```dsl\n"
      "repr:\n"
      "out: s[2] - s[0]\n"
      "out: s[3] - s[1]\n"
      "out: sqrt((s[2] - s[0])^2 + (s[3] - s[1])^2)\n"
      "reward:\n"
      "out: -s[6]\n"
      "```\n",
      // 2: unit direction plus distance.
      "Lets think step by step. Normalizing the displacement gives a bounded "
      "direction signal that is scale-free, while the raw distance keeps the "
      "progress information; the intrinsic reward follows the distance.\n\n"
      "```dsl\n"
      "repr:\n"
      "out: (s[2] - s[0]) / sqrt((s[2] - s[0])^2 + (s[3] - s[1])^2)\n"
      "out: (s[3] - s[1]) / sqrt((s[2] - s[0])^2 + (s[3] - s[1])^2)\n"
      "out: sqrt((s[2] - s[0])^2 + (s[3] - s[1])^2)\n"
      "reward:\n"
      "out: -s[6]\n"
      "```\n",
      // 3: energy-like quadratic.
      "Lets think step by step. A quadratic potential over the displacement "
      "acts like an energy the agent should minimize; taking its square root "
      "in the reward restores a distance scale.\n\n"
      "```dsl\n"
      "repr:\n"
      "out: (s[2] - s[0])^2 + (s[3] - s[1])^2\n"
      "reward:\n"
      "out: -sqrt(s[4])\n"
      "```\n",
      // 4: absolute-sum (L1) feature.
      "Lets think step by step. The sum of absolute coordinate gaps is a "
      "cheap monotone progress measure, similar to summing absolute joint "
      "efforts; its negative is a serviceable intrinsic reward.\n\n"
      "```dsl\n"
      "repr:\n"
      "out: abs(s[2] - s[0]) + abs(s[3] - s[1])\n"
      "reward:\n"
      "out: -s[4]\n"
      "```\n",
      // 5: malformed (unbalanced parenthesis) to exercise the retry path.
      "Lets think step by step. Distance should help.\n\n"
      "```dsl\n"
      "repr:\n"
      "out: sqrt((s[2] - s[0])^2 + (s[3] - s[1])^2\n"
      "reward:\n"
      "out: -s[4]\n"
      "```\n",
      // 6: parses cleanly but overflows to NaN at run time, to exercise the
      // disqualification path.
      "Lets think step by step. Exponentially amplifying the coordinates "
      "should sharpen the signal.\n\n"
      "```dsl\n"
      "repr:\n"
      "out: exp((s[0] + s[1]) * 9999) - exp((s[0] + s[1]) * 9999)\n"
      "reward:\n"
      "out: -s[4]\n"
      "```\n",
      // 7: logarithmic progress potential.
      "Lets think step by step. A logarithmic potential compresses the "
      "distance scale so early progress is rewarded strongly while the "
      "gradient stays finite near the target.\n\n"
      "```dsl\n"
      "repr:\n"
      "out: log(1 + sqrt((s[2] - s[0])^2 + (s[3] - s[1])^2))\n"
      "reward:\n"
      "out: -s[4]\n"
      "```\n",
  };
  return pool;
}

const std::string& MockGenerator::canned_analysis() {
  static const std::string text =
      "Analysis: candidates whose extra dimension tracks the remaining "
      "distance to the target show small, stable Lipschitz constants against "
      "the reward, which indicates a smooth reward mapping; candidates with "
      "very large constants on any dimension couple the reward to a noisy or "
      "overflowing feature. Suggestions: keep one well-scaled distance-like "
      "dimension, avoid unbounded transforms, and let the intrinsic reward "
      "decrease monotonically with that dimension.\n";
  return text;
}

MockGenerator::MockGenerator(std::uint64_t seed)
    : MockGenerator(seed, builtin_pool()) {}

MockGenerator::MockGenerator(std::uint64_t seed, std::vector<std::string> pool)
    : pool_(std::move(pool)) {
  if (pool_.empty()) throw std::invalid_argument("mock pool must be non-empty");
  cursor_ = static_cast<std::size_t>(seed % pool_.size());
}

std::string MockGenerator::complete(const std::string& /*system_text*/,
                                    const std::string& user_text) {
  // Feedback-analysis prompts get the canned analysis; generation prompts
  // draw the next pool entry.
  if (user_text.rfind("We have successfully trained", 0) == 0) {
    last_provenance_ = "mock:analysis";
    return canned_analysis();
  }
  last_provenance_ = "mock:" + std::to_string(cursor_);
  std::string out = pool_[cursor_];
  cursor_ = (cursor_ + 1) % pool_.size();
  return out;
}

// --- candidate generation ---------------------------------------------------

std::vector<Candidate> generate_candidates(
    Generator& generator, const PromptBundle& prompt, int K, int obs_dim,
    std::vector<std::string>* rejected_reasons, int retry_budget) {
  if (K < 1) throw std::invalid_argument("K must be >= 1");
  if (retry_budget < 0) throw std::invalid_argument("retry budget must be >= 0");
  std::vector<Candidate> out;
  for (int slot = 0; slot < K; ++slot) {
    bool filled = false;
    for (int attempt = 0; attempt <= retry_budget && !filled; ++attempt) {
      std::string response = generator.complete(prompt.system_text, prompt.user_text);
      try {
        auto [repr, reward] = extract_programs(response, obs_dim);
        Candidate c;
        c.id = slot;
        c.repr = std::move(repr);
        c.reward = std::move(reward);
        c.provenance = generator.last_provenance();
        c.response_text = std::move(response);
        out.push_back(std::move(c));
        filled = true;
      } catch (const std::exception& e) {
        if (rejected_reasons)
          rejected_reasons->push_back("slot " + std::to_string(slot) +
                                      " attempt " + std::to_string(attempt) +
                                      ": " + e.what());
      }
    }
  }
  if (out.empty())
    throw GeneratorError("no candidate slot produced a valid program pair");
  return out;
}

std::string request_analysis(Generator& generator, const PromptBundle& prompt) {
  return generator.complete(prompt.system_text, prompt.user_text);
}

}  // namespace lesr::llm
