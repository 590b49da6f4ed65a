// grlhf: simulation matrix, single simulated sessions, rollout dumps and the
// interactive HTTP service.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "grlhf/decision_makers.hpp"
#include "grlhf/envs.hpp"
#include "grlhf/error.hpp"
#include "grlhf/experiment.hpp"
#include "grlhf/random.hpp"
#include "grlhf/service.hpp"

using namespace grlhf;

namespace {

std::vector<EnvName> parse_envs(const std::vector<std::string>& names) {
  std::vector<EnvName> out;
  for (const auto& n : names) {
    if (n == "all") return {EnvName::GridWorld, EnvName::MountainCar};
    out.push_back(env_name_from_string(n));
  }
  return out;
}

std::vector<DmKind> parse_dms(const std::vector<std::string>& names) {
  std::vector<DmKind> out;
  for (const auto& n : names) {
    if (n == "all") return {DmKind::Pairwise, DmKind::Groupwise, DmKind::Interactive};
    out.push_back(dm_kind_from_string(n));
  }
  return out;
}

struct SimArgs {
  std::vector<std::string> envs{"all"};
  std::vector<std::string> dms{"all"};
  std::size_t seeds = 5;
  std::uint64_t first_seed = 0;
  std::size_t budget = 400;
  std::size_t fixed_prefs = 0;
  double noise_std = -1.0;
  double noise_fraction = 0.1;
  bool noise_sweep = false;
  std::size_t rounds = 8;
  std::size_t steps = 0;
  std::size_t jobs = 1;
  std::string normalize = "per-env";
  std::string out = "sim-out";
  bool quiet = false;
};

int run_sim(const SimArgs& a) {
  ExperimentMatrix m;
  m.envs = parse_envs(a.envs);
  m.dms = parse_dms(a.dms);
  m.seeds.clear();
  for (std::size_t s = 0; s < a.seeds; ++s) m.seeds.push_back(a.first_seed + s);
  m.comparison_budget = a.budget;
  if (a.fixed_prefs > 0) m.fixed_preference_budget = a.fixed_prefs;
  if (a.noise_std >= 0.0) m.noise_std = a.noise_std;
  m.dm.rounds = a.rounds;
  if (a.steps > 0) m.session.policy.steps_per_round = a.steps;
  const auto scope = a.normalize == "pooled" ? NormalizationScope::Pooled : NormalizationScope::PerEnvironment;

  std::vector<double> fractions{a.noise_fraction};
  if (a.noise_sweep) fractions = {0.0, 0.05, 0.1, 0.2};
  for (double f : fractions) {
    m.noise_fraction = f;
    std::filesystem::path dir = a.out;
    if (a.noise_sweep) {
      char name[32];
      std::snprintf(name, sizeof name, "noise-%.2f", f);
      dir /= name;
    }
    auto records = run_matrix(m, a.jobs, [&](const RunRecord& r, std::size_t done, std::size_t total) {
      if (a.quiet) return;
      std::fprintf(stderr, "[%zu/%zu] %s %s seed %llu: ", done, total, std::string(to_string(r.env)).c_str(),
                   std::string(to_string(r.dm)).c_str(), static_cast<unsigned long long>(r.seed));
      if (r.ok())
        std::fprintf(stderr, "return %.3f, %zu preferences (%.0fs)\n", r.final_return, r.preferences, r.seconds);
      else
        std::fprintf(stderr, "FAILED: %s\n", r.failure.c_str());
    });
    const auto norm = normalize_records(records, scope);
    const auto summary = summarize(records, norm);
    write_report(dir, records, summary);
    if (a.noise_sweep) std::printf("noise fraction %.2f\n", f);
    std::fputs(summary_text(summary, records).c_str(), stdout);
    std::printf("report written to %s\n", dir.string().c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Groupwise preference-feedback workbench"};
  app.require_subcommand(1);

  SimArgs sim;
  auto* sim_cmd = app.add_subcommand("sim", "Run the simulated decision-maker matrix and write a report");
  sim_cmd->add_option("--env", sim.envs, "gridworld, mountaincar or all")->delimiter(',');
  sim_cmd->add_option("--dm", sim.dms, "pairwise, groupwise, interactive or all")->delimiter(',');
  sim_cmd->add_option("--seeds", sim.seeds, "Number of seeds per cell")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--first-seed", sim.first_seed, "First seed");
  sim_cmd->add_option("--budget", sim.budget, "Comparisons per run")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--fixed-prefs", sim.fixed_prefs, "Cap on generated preferences (ablation)");
  sim_cmd->add_option("--noise-std", sim.noise_std, "Absolute noise sigma (default: fraction of the return range)");
  sim_cmd->add_option("--noise-fraction", sim.noise_fraction, "Sigma as a fraction of the round's return range");
  sim_cmd->add_flag("--noise-sweep", sim.noise_sweep, "Repeat the matrix for fractions 0, 0.05, 0.1, 0.2");
  sim_cmd->add_option("--rounds", sim.rounds, "Feedback rounds the budget is spread over");
  sim_cmd->add_option("--steps-per-round", sim.steps, "Policy steps per round (0 keeps the default)");
  sim_cmd->add_option("--jobs", sim.jobs, "Parallel runs")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--normalize", sim.normalize, "per-env or pooled")
      ->check(CLI::IsMember({"per-env", "pooled"}));
  sim_cmd->add_option("--out", sim.out, "Report directory");
  sim_cmd->add_flag("--quiet", sim.quiet, "No per-run progress");

  std::string run_env = "gridworld", run_dm = "interactive";
  std::uint64_t run_seed = 0;
  std::size_t run_budget = 400;
  auto* run_cmd = app.add_subcommand("run", "One simulated session; prints its result as JSON");
  run_cmd->add_option("--env", run_env);
  run_cmd->add_option("--dm", run_dm);
  run_cmd->add_option("--seed", run_seed);
  run_cmd->add_option("--budget", run_budget);

  std::string roll_env = "gridworld", roll_out;
  std::size_t roll_episodes = 10;
  std::uint64_t roll_seed = 0;
  auto* roll_cmd = app.add_subcommand("rollout", "Dump uniform-random rollouts as line-delimited JSON");
  roll_cmd->add_option("--env", roll_env);
  roll_cmd->add_option("--episodes", roll_episodes)->check(CLI::PositiveNumber);
  roll_cmd->add_option("--seed", roll_seed);
  roll_cmd->add_option("--out", roll_out, "Output file (default stdout)");

  std::string host = "127.0.0.1", token, session_dir, resume_dir, cors = "*";
  int port = 8080;
  auto* serve_cmd = app.add_subcommand("serve", "Serve the v1 HTTP API for the interactive client");
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--port", port);
  serve_cmd->add_option("--token", token, "Bearer token (empty disables auth)");
  serve_cmd->add_option("--session-dir", session_dir, "Snapshot directory written after every mutation");
  serve_cmd->add_option("--resume", resume_dir, "Resume a snapshot as the active session");
  serve_cmd->add_option("--cors-origin", cors);

  ErrorRateStudy study;
  auto* err_cmd = app.add_subcommand("error-rates", "Monte-Carlo pair vs group decision error rates");
  err_cmd->add_option("--trials", study.trials);
  err_cmd->add_option("--group-size", study.group_size);
  err_cmd->add_option("--sigma", study.sigma);
  err_cmd->add_option("--separation", study.separation);
  err_cmd->add_option("--spread", study.spread);
  err_cmd->add_option("--kappa", study.overlap_factor);
  err_cmd->add_option("--seed", study.seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim_cmd) return run_sim(sim);
    if (*run_cmd) {
      SessionConfig sc;
      sc.env = EnvSpec::from_name(env_name_from_string(run_env));
      sc.seed = run_seed;
      DmConfig dm;
      dm.kind = dm_kind_from_string(run_dm);
      dm.seed = run_seed;
      dm.comparison_budget = run_budget;
      const auto r = run_dm_session(sc, dm, [](std::size_t round, std::string_view stage, double f) {
        std::fprintf(stderr, "\rround %zu %-12s %3.0f%%", round, std::string(stage).c_str(), 100.0 * f);
      });
      std::fprintf(stderr, "\n");
      std::cout << to_json(r).dump(2) << "\n";
      return 0;
    }
    if (*roll_cmd) {
      const EnvSpec spec = EnvSpec::from_name(env_name_from_string(roll_env));
      const auto policy = uniform_random_policy(spec);
      std::vector<Trajectory> ts;
      for (std::size_t e = 0; e < roll_episodes; ++e) ts.push_back(rollout(spec, policy, derive_seed(roll_seed, {e})));
      const std::string text = trajectories_to_jsonl(ts);
      if (roll_out.empty()) {
        std::cout << text;
      } else {
        std::ofstream(roll_out) << text;
      }
      return 0;
    }
    if (*serve_cmd) {
      ServiceOptions o;
      o.token = token;
      o.cors_origin = cors;
      if (!session_dir.empty()) o.session_dir = session_dir;
      Service service(o);
      if (!resume_dir.empty()) service.resume(resume_dir);
      HttpServer server(service);
      const int bound = server.bind(host, port);
      std::fprintf(stderr, "listening on http://%s:%d/api/v1\n", host.c_str(), bound);
      server.run();
      return 0;
    }
    if (*err_cmd) {
      const auto r = estimate_error_rates(study);
      std::printf("pair  error rate %.4f (se %.4f, %zu decisions)\n", r.pair_error_rate, r.pair_standard_error,
                  r.pair_decisions);
      std::printf("group error rate %.4f (se %.4f, %zu decisions, skip rate %.3f)\n", r.group_error_rate,
                  r.group_standard_error, r.group_decisions, r.group_skip_rate);
      return 0;
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
