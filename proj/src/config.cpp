#include "lesr/config.hpp"

#include <json.hpp>

#include <charconv>
#include <climits>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "lesr/util.hpp"

namespace lesr::config {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

struct Line {
  int number;
  std::string key;
  std::string value;
};

[[noreturn]] void fail(int line, const std::string& what) {
  throw std::invalid_argument("config line " + std::to_string(line) + ": " + what);
}

long parse_long(const Line& l) {
  long v = 0;
  const std::string_view s = l.value;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    fail(l.number, "key '" + l.key + "' expects an integer, got '" + l.value + "'");
  return v;
}

int parse_int(const Line& l) {
  const long v = parse_long(l);
  if (v < INT_MIN || v > INT_MAX)
    fail(l.number, "key '" + l.key + "' is out of range");
  return static_cast<int>(v);
}

double parse_real(const Line& l) {
  try {
    return parse_double(l.value);
  } catch (const std::invalid_argument&) {
    fail(l.number, "key '" + l.key + "' expects a number, got '" + l.value + "'");
  }
}

std::vector<int> parse_int_list(const Line& l) {
  std::vector<int> out;
  for (std::string_view part : split_csv_line(l.value)) {
    part = trim(part);
    int v = 0;
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc() || ptr != part.data() + part.size())
      fail(l.number, "key '" + l.key +
                         "' expects comma-separated integers, got '" + l.value +
                         "'");
    out.push_back(v);
  }
  return out;
}

std::vector<Line> tokenize(const std::string& text) {
  std::vector<Line> lines;
  std::istringstream in(text);
  std::string raw;
  int number = 0;
  while (std::getline(in, raw)) {
    ++number;
    std::string_view s = raw;
    if (auto hash = s.find('#'); hash != std::string_view::npos)
      s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos)
      fail(number, "expected 'key = value', got '" + std::string(s) + "'");
    const std::string key{trim(s.substr(0, eq))};
    const std::string value{trim(s.substr(eq + 1))};
    if (key.empty()) fail(number, "missing key before '='");
    if (value.empty()) fail(number, "key '" + key + "' has an empty value");
    lines.push_back({number, key, value});
  }
  return lines;
}

void apply(const Line& l, orch::LesrConfig& cfg) {
  const std::string& k = l.key;
  if (k == "env") {
    cfg.env_id = l.value;
  } else if (k == "generator") {
    if (l.value == "mock") cfg.mock = true;
    else if (l.value == "remote") cfg.mock = false;
    else fail(l.number, "key 'generator' expects mock or remote, got '" +
                            l.value + "'");
  } else if (k == "endpoint") {
    cfg.remote.endpoint = l.value;
  } else if (k == "model") {
    cfg.remote.model = l.value;
  } else if (k == "api_key_env") {
    cfg.remote.api_key_env = l.value == "none" ? "" : l.value;
  } else if (k == "timeout_seconds") {
    cfg.remote.timeout_seconds = parse_int(l);
  } else if (k == "transport_retries") {
    cfg.remote.transport_retries = parse_int(l);
  } else if (k == "temperature") {
    cfg.llm_temperature = parse_real(l);
  } else if (k == "retry_budget") {
    cfg.llm_retry_budget = parse_int(l);
  } else if (k == "K") {
    cfg.K = parse_int(l);
  } else if (k == "I") {
    cfg.I = parse_int(l);
  } else if (k == "n_small") {
    cfg.n_small = parse_long(l);
  } else if (k == "n_final") {
    cfg.n_final = parse_long(l);
  } else if (k == "w") {
    cfg.intrinsic_weight = parse_real(l);
  } else if (k == "tau") {
    cfg.tau = parse_real(l);
  } else if (k == "gamma") {
    cfg.gamma = parse_real(l);
  } else if (k == "seed") {
    cfg.seed = static_cast<std::uint64_t>(parse_long(l));
  } else if (k == "feedback") {
    try {
      cfg.feedback = orch::feedback_variant_from_string(l.value);
    } catch (const std::invalid_argument& e) {
      fail(l.number, e.what());
    }
  } else if (k == "out_dir") {
    cfg.out_dir = l.value;
  } else if (k == "workers") {
    cfg.workers = parse_int(l);
  } else if (k == "batch_size") {
    cfg.trainer.batch_size = parse_int(l);
  } else if (k == "hidden") {
    cfg.trainer.hidden_sizes = parse_int_list(l);
  } else if (k == "actor_lr") {
    cfg.trainer.actor_lr = parse_real(l);
  } else if (k == "critic_lr") {
    cfg.trainer.critic_lr = parse_real(l);
  } else if (k == "start_steps") {
    cfg.trainer.start_steps = parse_long(l);
  } else if (k == "eval_interval") {
    cfg.trainer.eval_interval = parse_long(l);
  } else if (k == "eval_episodes") {
    cfg.trainer.eval_episodes = parse_int(l);
  } else if (k == "replay_capacity") {
    cfg.trainer.replay_capacity = parse_long(l);
  } else if (k == "horizon") {
    cfg.trainer.horizon = parse_int(l);
  } else if (k == "success_radius") {
    cfg.trainer.success_radius = parse_real(l);
  } else if (k == "exploration_noise") {
    cfg.trainer.exploration_noise = parse_real(l);
  } else if (k == "policy_noise") {
    cfg.trainer.policy_noise = parse_real(l);
  } else if (k == "noise_clip") {
    cfg.trainer.noise_clip = parse_real(l);
  } else if (k == "policy_delay") {
    cfg.trainer.policy_delay = parse_int(l);
  } else if (k == "target_update_rate") {
    cfg.trainer.target_update_rate = parse_real(l);
  } else {
    fail(l.number, "unknown config key '" + k + "'");
  }
}

}  // namespace

orch::LesrConfig parse_config_text(const std::string& text) {
  orch::LesrConfig cfg;
  for (const Line& l : tokenize(text)) apply(l, cfg);
  orch::validate(cfg);
  return cfg;
}

orch::LesrConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::invalid_argument("cannot read config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config_text(buf.str());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

orch::LesrConfig from_manifest_json(const std::string& manifest_text) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(manifest_text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("manifest is not valid JSON: ") +
                                e.what());
  }
  if (!manifest.contains("config"))
    throw std::invalid_argument("manifest has no 'config' object");
  const nlohmann::json& j = manifest["config"];

  orch::LesrConfig cfg;
  try {
    cfg.env_id = j.at("env").get<std::string>();
    cfg.K = j.at("K").get<int>();
    cfg.I = j.at("I").get<int>();
    cfg.n_small = j.at("n_small").get<long>();
    cfg.n_final = j.at("n_final").get<long>();
    cfg.intrinsic_weight = j.at("intrinsic_weight").get<double>();
    cfg.tau = j.at("tau").get<double>();
    cfg.gamma = j.at("gamma").get<double>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.feedback =
        orch::feedback_variant_from_string(j.at("feedback").get<std::string>());
    cfg.out_dir = j.at("out_dir").get<std::string>();
    cfg.workers = j.at("workers").get<int>();

    const nlohmann::json& gen = j.at("generator");
    cfg.mock = gen.at("mode").get<std::string>() == "mock";
    cfg.llm_temperature = gen.at("temperature").get<double>();
    cfg.llm_retry_budget = gen.at("retry_budget").get<int>();
    if (!cfg.mock) {
      cfg.remote.endpoint = gen.at("endpoint").get<std::string>();
      cfg.remote.model = gen.at("model").get<std::string>();
      cfg.remote.api_key_env = gen.at("api_key_env").get<std::string>();
      cfg.remote.timeout_seconds = gen.at("timeout_seconds").get<int>();
      cfg.remote.transport_retries = gen.at("transport_retries").get<int>();
    }

    const nlohmann::json& t = j.at("trainer");
    cfg.trainer.batch_size = t.at("batch_size").get<int>();
    cfg.trainer.target_update_rate = t.at("target_update_rate").get<double>();
    cfg.trainer.policy_noise = t.at("policy_noise").get<double>();
    cfg.trainer.noise_clip = t.at("noise_clip").get<double>();
    cfg.trainer.policy_delay = t.at("policy_delay").get<int>();
    cfg.trainer.exploration_noise = t.at("exploration_noise").get<double>();
    cfg.trainer.replay_capacity = t.at("replay_capacity").get<long>();
    cfg.trainer.eval_episodes = t.at("eval_episodes").get<int>();
    cfg.trainer.eval_interval = t.at("eval_interval").get<long>();
    cfg.trainer.start_steps = t.at("start_steps").get<long>();
    cfg.trainer.hidden_sizes = t.at("hidden_sizes").get<std::vector<int>>();
    cfg.trainer.actor_lr = t.at("actor_lr").get<double>();
    cfg.trainer.critic_lr = t.at("critic_lr").get<double>();
    cfg.trainer.horizon = t.at("horizon").get<int>();
    cfg.trainer.success_radius = t.at("success_radius").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("manifest config is incomplete: ") +
                                e.what());
  }
  orch::validate(cfg);
  return cfg;
}

std::string default_config_text() {
  return R"(# Run configuration (key = value; '#' starts a comment).
# Every key is optional; the value shown is the default.

# --- task and loop shape ---
env = pointmaze-dense        # pointmaze-dense | pointmaze-sparse
K = 3                        # candidate programs per iteration
I = 2                        # iterations
n_small = 20000              # training steps per candidate
n_final = 50000              # training steps for the selected best
# w = 0.02                   # intrinsic-reward weight; unset picks the
                             # environment default (0.02 dense, 0.2 sparse)
tau = 0.9                    # Lipschitz-feedback soft-update rate
gamma = 0.99                 # discount
seed = 0
feedback = reward            # reward | dr | sn
out_dir = runs/latest        # artifacts and manifest.json land here
workers = 0                  # parallel candidate trainings; 0 = auto

# --- candidate generator ---
generator = mock             # mock | remote
# endpoint = https://api.example.com/v1/chat/completions
# model = gpt-4
# api_key_env = LESR_API_KEY # environment variable holding the key
                             # ('none' sends no Authorization header)
# temperature = 1
# retry_budget = 3           # re-asks per candidate slot on invalid replies
# timeout_seconds = 120
# transport_retries = 3

# --- trainer ---
batch_size = 256
hidden = 64,64               # comma-separated hidden-layer widths
actor_lr = 0.0003
critic_lr = 0.0003
start_steps = 1000           # warmup: one random action held per episode
eval_interval = 2500
eval_episodes = 10
replay_capacity = 200000
horizon = 300                # episode step limit
success_radius = 0.5
exploration_noise = 0.1
policy_noise = 0.2
noise_clip = 0.5
policy_delay = 2
target_update_rate = 0.005
)";
}

}  // namespace lesr::config
