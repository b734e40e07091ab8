#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "lesr/config.hpp"
#include "lesr/dsl.hpp"
#include "lesr/env.hpp"
#include "lesr/lipschitz.hpp"
#include "lesr/llm.hpp"
#include "lesr/nn.hpp"
#include "lesr/orchestrator.hpp"
#include "lesr/td3.hpp"
#include "lesr/util.hpp"

namespace fs = std::filesystem;
using namespace lesr;

namespace {

// Exit codes: 0 success, 1 the method failed (training/search/transport),
// 2 the invocation or its inputs were unusable.
constexpr int kOk = 0;
constexpr int kMethodFailure = 1;
constexpr int kUsageError = 2;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot read file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot write file '" + path.string() + "'");
  out << content;
}

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

orch::LesrConfig load_config(const CommonFlags& flags) {
  orch::LesrConfig cfg = flags.config_path.empty()
                             ? config::parse_config_text("")
                             : config::load_config_file(flags.config_path);
  if (flags.seed) cfg.seed = *flags.seed;
  if (!flags.out.empty()) cfg.out_dir = flags.out;
  return cfg;
}

void require_api_key(const orch::LesrConfig& cfg) {
  if (cfg.mock || cfg.remote.api_key_env.empty()) return;
  const char* key = std::getenv(cfg.remote.api_key_env.c_str());
  if (key == nullptr || *key == '\0')
    throw std::invalid_argument(
        "remote generator needs an API key: set the environment variable '" +
        cfg.remote.api_key_env +
        "', or set api_key_env = none for keyless endpoints, or use "
        "generator = mock");
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

int cmd_run(const CommonFlags& flags) {
  orch::LesrConfig cfg = load_config(flags);
  require_api_key(cfg);

  orch::RunSummary summary = orch::run_lesr(cfg);

  const orch::CandidateOutcome& best = *summary.best.outcome;
  std::cout << "status: " << summary.status << "\n";
  std::cout << "best: iteration " << summary.best.iteration << ", candidate "
            << summary.best.candidate << " (" << best.candidate.provenance
            << ")\n";
  std::cout << "  nu: " << format_double(best.nu) << "\n";
  std::cout << "  success rate: " << format_double(best.success_rate) << "\n";
  std::cout << "  mean feedback value: "
            << format_double(mean_of(best.feedback_values)) << "\n";
  std::cout << "  program:\n";
  std::istringstream program(
      orch::format_program_sections(best.candidate.repr, best.candidate.reward));
  for (std::string line; std::getline(program, line);)
    std::cout << "    " << line << "\n";
  std::cout << "final training (" << summary.final_training.steps_run
            << " steps): nu " << format_double(summary.final_training.nu)
            << ", success rate "
            << format_double(summary.final_training.success_rate) << "\n";
  std::cout << "artifacts: " << summary.run_dir.string() << "\n";
  return kOk;
}

int cmd_train(const std::string& program_path, const CommonFlags& flags) {
  orch::LesrConfig cfg = load_config(flags);
  if (cfg.out_dir.empty())
    throw std::invalid_argument(
        "no output directory: set out_dir in the config or pass --out");

  auto [repr, reward] = orch::parse_program_sections(
      read_file(program_path), env::PointMaze::kObservationDim);

  td3::TrainConfig tcfg = cfg.trainer;
  tcfg.total_steps = cfg.n_final;
  tcfg.gamma = cfg.gamma;
  tcfg.intrinsic_weight = cfg.resolved_intrinsic_weight();
  tcfg.seed = cfg.seed;

  td3::TrainResult result = td3::train(cfg.env_id, repr, reward, tcfg);

  fs::create_directories(cfg.out_dir);
  {
    std::ostringstream curve;
    td3::write_curve_csv(curve, result.curve);
    write_file(cfg.out_dir / "train_curve.csv", curve.str());
  }
  if (result.disqualified) {
    std::cerr << "error: training disqualified: "
              << result.disqualification_reason << "\n";
    return kMethodFailure;
  }
  {
    std::ostringstream traces;
    lip::write_trace_csv(traces, result.eval_traces);
    write_file(cfg.out_dir / "trajectories.csv", traces.str());
  }
  nn::save_params(result.actor, (cfg.out_dir / "policy.bin").string());

  std::cout << "trained " << result.steps_run << " steps on " << cfg.env_id
            << "\n";
  std::cout << "  nu: " << format_double(result.nu) << "\n";
  std::cout << "  success rate: " << format_double(result.success_rate) << "\n";
  std::cout << "artifacts: " << cfg.out_dir.string() << "\n";
  return kOk;
}

int cmd_eval(const std::string& policy_path, const std::string& program_path,
             const CommonFlags& flags) {
  orch::LesrConfig cfg = load_config(flags);

  nn::MlpParams actor = nn::load_params(policy_path);
  std::optional<dsl::ReprProgram> repr;
  int expected_dim = env::PointMaze::kObservationDim;
  if (!program_path.empty()) {
    auto [r, unused] = orch::parse_program_sections(
        read_file(program_path), env::PointMaze::kObservationDim);
    expected_dim += static_cast<int>(r.outputs.size());
    repr = std::move(r);
  }
  const auto policy_dim = actor.weights.at(0).cols();
  if (policy_dim != expected_dim)
    throw std::invalid_argument(
        "policy expects a " + std::to_string(policy_dim) +
        "-dimensional state but the " +
        (repr ? "augmented" : "source") + " state has " +
        std::to_string(expected_dim) +
        " dimensions; pass the --program the policy was trained with");

  td3::EvalResult result = td3::evaluate(
      actor, cfg.env_id, cfg.trainer.eval_episodes, cfg.seed, repr,
      cfg.trainer.horizon, cfg.trainer.success_radius);

  std::cout << "episodes: " << cfg.trainer.eval_episodes << "\n";
  std::cout << "nu: " << format_double(result.nu) << "\n";
  std::cout << "success rate: " << format_double(result.success_rate) << "\n";
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    std::ostringstream traces;
    lip::write_trace_csv(traces, result.traces);
    write_file(cfg.out_dir / "eval.csv", traces.str());
    std::cout << "trajectories: " << (cfg.out_dir / "eval.csv").string() << "\n";
  }
  return kOk;
}

int cmd_analyze(const std::string& csv_path, double tau,
                const std::string& out) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in)
    throw std::invalid_argument("cannot read trajectory file '" + csv_path + "'");
  std::vector<lip::EpisodeTrace> traces = lip::read_trace_csv(in);

  lip::LipschitzAccumulator acc(tau);
  for (const auto& trace : traces)
    acc.observe(lip::trajectory_lipschitz_array(trace.trajectory));

  const std::vector<double>& values = acc.values();
  std::cout << "episodes: " << traces.size() << "\n";
  std::cout << "estimate: " << (acc.exact() ? "exact" : "sampled") << "\n";
  std::ostringstream table;
  table << "name,value\n";
  for (std::size_t d = 0; d < values.size(); ++d) {
    std::cout << "c[" << d << "] = " << format_double(values[d]) << "\n";
    table << "c[" << d << "]," << format_double(values[d]) << "\n";
  }
  if (!out.empty()) {
    write_file(out, table.str());
    std::cout << "written: " << out << "\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "State-representation search and TD3 training for the point maze"};
  app.require_subcommand(1);
  app.set_version_flag(
      "--config-template",
      [] { return config::default_config_text(); },
      "Print a commented configuration template and exit");

  CommonFlags run_flags;
  CLI::App* run = app.add_subcommand(
      "run", "Search candidate programs with the configured generator, then "
             "train the best one");
  run->add_option("--config", run_flags.config_path,
                  "Run configuration file (key = value)");
  run->add_option("--seed", run_flags.seed, "Override the configured seed");
  run->add_option("--out", run_flags.out,
                  "Override the configured output directory");

  CommonFlags train_flags;
  std::string train_program;
  CLI::App* train = app.add_subcommand(
      "train", "Train one program pair for the configured final step budget");
  train->add_option("program", train_program,
                    "Program file: a repr: section then a reward: section")
      ->required();
  train->add_option("--config", train_flags.config_path,
                    "Run configuration file (key = value)");
  train->add_option("--seed", train_flags.seed, "Override the configured seed");
  train->add_option("--out", train_flags.out,
                    "Override the configured output directory");

  CommonFlags eval_flags;
  std::string eval_policy, eval_program;
  CLI::App* eval = app.add_subcommand(
      "eval", "Roll out a stored policy deterministically and report nu");
  eval->add_option("policy", eval_policy, "Policy checkpoint (policy.bin)")
      ->required();
  eval->add_option("--program", eval_program,
                   "Program file the policy was trained with (for augmented "
                   "policies)");
  eval->add_option("--config", eval_flags.config_path,
                   "Run configuration file (key = value)");
  eval->add_option("--seed", eval_flags.seed, "Override the configured seed");
  eval->add_option("--out", eval_flags.out,
                   "Directory for eval.csv (prints only when omitted)");

  std::string analyze_csv, analyze_out;
  double analyze_tau = 0.9;
  CLI::App* analyze = app.add_subcommand(
      "analyze",
      "Per-dimension Lipschitz array of a trajectory CSV against its rewards");
  analyze->add_option("trajectories", analyze_csv,
                      "Trajectory CSV (episode,t,s*,sc*,r)")
      ->required();
  analyze->add_option("--tau", analyze_tau,
                      "Soft-update rate blending multi-episode estimates")
      ->check(CLI::Range(0.0, 1.0));
  analyze->add_option("--out", analyze_out, "Also write the array as CSV here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (run->parsed()) return cmd_run(run_flags);
    if (train->parsed()) return cmd_train(train_program, train_flags);
    if (eval->parsed()) return cmd_eval(eval_policy, eval_program, eval_flags);
    if (analyze->parsed())
      return cmd_analyze(analyze_csv, analyze_tau, analyze_out);
  } catch (const dsl::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const llm::ExtractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kMethodFailure;
  }
  return kUsageError;
}
