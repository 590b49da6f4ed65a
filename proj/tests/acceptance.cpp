// Acceptance suite: one PASS/FAIL line per criterion. The matrix criteria run
// the full simulated matrix and take well over an hour on one core;
// --reuse-matrix / --reuse-ablation read records.csv from an earlier report
// instead (development only).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "grlhf/clustering_study.hpp"
#include "grlhf/decision_makers.hpp"
#include "grlhf/dtw.hpp"
#include "grlhf/error.hpp"
#include "grlhf/experiment.hpp"
#include "grlhf/layout.hpp"
#include "grlhf/policy.hpp"
#include "grlhf/preferences.hpp"
#include "grlhf/reward_ensemble.hpp"
#include "grlhf/stats.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace grlhf;

namespace {

struct CriterionResult {
  bool pass = false;
  std::string detail;
};

struct Options {
  std::string report = "acceptance-report";
  std::string reuse_matrix;
  std::string reuse_ablation;
  std::size_t jobs = 1;
  std::vector<std::string> only;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------
// Closed-form checks

CriterionResult group_score_exactness() {
  Rng rng(2024);
  double worst = 0.0;
  for (std::uint64_t f = 0; f < 200; ++f) {
    const std::size_t obs = 2 + f % 4;
    const auto e = init_ensemble(fixtures::small_reward_config(obs + 1, f));
    const auto bs = fixtures::random_behaviors(16, 3 + f % 5, obs, 1, 7000 + f);
    std::vector<std::size_t> perm(bs.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const std::size_t m = 1 + f % 7, n = 1 + (f / 7) % 8;
    std::vector<const Behavior*> g1, g2;
    std::vector<BehaviorId> i1, i2;
    for (std::size_t k = 0; k < m; ++k) {
      g1.push_back(&bs[perm[k]]);
      i1.push_back(bs[perm[k]].id);
    }
    for (std::size_t k = 0; k < n; ++k) {
      g2.push_back(&bs[perm[m + k]]);
      i2.push_back(bs[perm[m + k]].id);
    }
    const DisagreementTable table(e, bs);
    const double want = oracle::group_score(e, g1, g2);
    const double got = group_score(table, i1, i2);
    worst = std::max(worst, std::abs(got - want) / std::max(std::abs(want), 1e-300));
  }
  return {worst <= 1e-12, fmt("200 fixtures, max relative error %.2e (limit 1e-12)", worst)};
}

CriterionResult label_law() {
  std::size_t checked = 0, bad = 0;
  const Verdict verdicts[] = {Verdict::G1Preferred, Verdict::G2Preferred, Verdict::Tie};
  for (std::size_t m = 1; m <= 8; ++m) {
    for (std::size_t n = 1; n <= 8; ++n) {
      for (std::uint64_t seed = 0; seed < 100; ++seed) {
        GroupComparison c;
        c.id = "c";
        for (std::size_t k = 0; k < m; ++k) c.group_1.push_back(static_cast<BehaviorId>(k));
        for (std::size_t k = 0; k < n; ++k) c.group_2.push_back(static_cast<BehaviorId>(100 + k));
        c.verdict = verdicts[seed % 3];
        const auto qs = generate_labels(c, seed);
        std::set<BehaviorId> left, right;
        std::set<std::pair<BehaviorId, BehaviorId>> pairs;
        bool ok = qs.size() == std::max(m, n);
        for (const auto& q : qs) {
          ok &= q.tau_i < 100 && q.tau_j >= 100;
          left.insert(q.tau_i);
          right.insert(q.tau_j);
          pairs.insert({q.tau_i, q.tau_j});
        }
        ok &= left.size() == m && right.size() == n && pairs.size() == qs.size();
        ++checked;
        if (!ok) ++bad;
      }
    }
  }
  return {bad == 0, fmt("%zu comparisons, %zu violations of |Q| = max(m,n) with full coverage", checked, bad)};
}

CriterionResult gradient_check() {
  double worst = 0.0, worst_loss = 0.0;
  Rng rng(77);
  std::uniform_int_distribution<std::size_t> width(2, 8), depth(1, 3), obs(2, 5);
  for (std::uint64_t net = 0; net < 20; ++net) {
    const std::size_t o = obs(rng);
    auto cfg = fixtures::small_reward_config(o + 1, 900 + net);
    cfg.hidden_layers.assign(depth(rng), 0);
    for (auto& w : cfg.hidden_layers) w = width(rng);
    cfg.ensemble_size = 2;
    RewardNet m = init_ensemble(cfg).members[0];
    const auto bs = fixtures::random_behaviors(8, 2 + net % 4, o, 1, 500 + net);
    const BehaviorIndex idx(bs);
    const auto qs = fixtures::random_queries(10, bs.size(), net);
    const auto g = bt_loss_gradient(m, qs, idx);
    worst_loss = std::max(worst_loss, std::abs(g.loss - oracle::bt_loss(m, qs, idx)));
    const Eigen::VectorXd theta = m.net.parameters();
    Eigen::VectorXd fd(theta.size());
    const double h = 1e-6;
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
      Eigen::VectorXd t = theta;
      t(k) += h;
      m.net.set_parameters(t);
      const double up = bt_loss(m, qs, idx);
      t(k) -= 2 * h;
      m.net.set_parameters(t);
      fd(k) = (up - bt_loss(m, qs, idx)) / (2 * h);
    }
    worst = std::max(worst, (g.gradient - fd).norm() / std::max(g.gradient.norm(), fd.norm()));
  }
  return {worst <= 1e-4 && worst_loss <= 1e-12,
          fmt("20 nets, max relative gradient error %.2e (limit 1e-4), loss vs scalar oracle %.1e", worst, worst_loss)};
}

// Every monotone warping path, materialized and costed one by one.
void enumerate_paths(Eigen::Index n, Eigen::Index m, std::vector<std::pair<Eigen::Index, Eigen::Index>>& path,
                     const std::function<void(const std::vector<std::pair<Eigen::Index, Eigen::Index>>&)>& visit) {
  const auto [i, j] = path.back();
  if (i == n - 1 && j == m - 1) {
    visit(path);
    return;
  }
  const std::pair<Eigen::Index, Eigen::Index> steps[] = {{i + 1, j}, {i, j + 1}, {i + 1, j + 1}};
  for (const auto& s : steps) {
    if (s.first >= n || s.second >= m) continue;
    path.push_back(s);
    enumerate_paths(n, m, path, visit);
    path.pop_back();
  }
}

CriterionResult dtw_oracle() {
  Rng rng(31);
  std::uniform_int_distribution<Eigen::Index> len(1, 5), dims(1, 3);
  std::normal_distribution<double> z(0.0, 1.0);
  double worst = 0.0;
  std::size_t paths = 0;
  for (int c = 0; c < 500; ++c) {
    const Eigen::Index d = dims(rng);
    Eigen::MatrixXd a(len(rng), d), b(len(rng), d);
    for (Eigen::Index k = 0; k < a.size(); ++k) a.data()[k] = z(rng);
    for (Eigen::Index k = 0; k < b.size(); ++k) b.data()[k] = z(rng);
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::pair<Eigen::Index, Eigen::Index>> path{{0, 0}};
    enumerate_paths(a.rows(), b.rows(), path, [&](const auto& p) {
      double cost = 0.0;
      for (const auto& [i, j] : p) cost += (a.row(i) - b.row(j)).norm();
      best = std::min(best, cost);
      ++paths;
    });
    worst = std::max(worst, std::abs(dtw_distance(a, b) - best));
  }
  return {worst <= 1e-12, fmt("500 cases (%zu paths), max abs error %.2e (limit 1e-12)", paths, worst)};
}

// ---------------------------------------------------------------------------
// Behavior space and decision makers

CriterionResult clustering_direction() {
  // Ten rounds as a session samples them (150 behaviors from the initial
  // policy), one session seed per round.
  std::vector<std::vector<Behavior>> rounds;
  for (std::uint64_t r = 0; r < 10; ++r) {
    SessionConfig c;
    c.env = EnvSpec::grid_world();
    c.seed = 100 + r;
    rounds.push_back(Session::start(c).behaviors());
  }
  const std::size_t k = 10;
  const auto rep = clustering_quality_study(rounds, k, 1);
  std::string per;
  for (std::size_t i = 0; i < rounds.size(); ++i)
    per += fmt(" %.2f/%.2f", rep.hierarchical_variance[i], rep.pca_variance[i]);
  const bool pass = rep.hierarchical_wins >= 8 && rep.t_defined && rep.paired.t > 0;
  return {pass, fmt("k=%zu, hc wins %zu/10 (need 8), paired t %s; hc/pca per round:", k, rep.hierarchical_wins,
                    rep.t_defined ? fmt("%+.3f", rep.paired.t).c_str() : "undefined") +
                    per};
}

CriterionResult error_rate_ordering() {
  ErrorRateStudy s;  // sigma 1, groups of 4, 10,000 trials
  const auto e = estimate_error_rates(s);
  const double se = std::sqrt(e.pair_standard_error * e.pair_standard_error +
                              e.group_standard_error * e.group_standard_error);
  const double margin = e.pair_error_rate - e.group_error_rate;
  return {margin >= 2.0 * se, fmt("pair %.4f vs group %.4f (skip rate %.3f), margin %.4f = %.1f SE (need 2)",
                                  e.pair_error_rate, e.group_error_rate, e.group_skip_rate, margin, margin / se)};
}

// ---------------------------------------------------------------------------
// Matrix

std::vector<RunRecord> load_records(const std::filesystem::path& csv) {
  std::ifstream in(csv);
  if (!in) throw UsageError("cannot read " + csv.string());
  std::string line;
  std::getline(in, line);
  std::vector<RunRecord> out;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string f[8];
    for (auto& x : f) std::getline(ss, x, ',');
    RunRecord r;
    r.env = env_name_from_string(f[0]);
    r.dm = dm_kind_from_string(f[1]);
    r.seed = std::stoull(f[2]);
    r.final_return = std::stod(f[3]);
    r.comparisons = std::stoul(f[5]);
    r.preferences = std::stoul(f[6]);
    r.errors = std::stoul(f[7]);
    out.push_back(r);
  }
  return out;
}

struct MatrixRun {
  std::vector<RunRecord> records;
  MatrixSummary summary;
  double seconds = 0.0;
  bool reused = false;
};

MatrixRun run_or_load(const ExperimentMatrix& m, const std::string& reuse, const std::filesystem::path& out,
                      std::size_t jobs) {
  MatrixRun r;
  const auto t0 = std::chrono::steady_clock::now();
  if (!reuse.empty()) {
    r.records = load_records(std::filesystem::path(reuse) / "records.csv");
    r.reused = true;
  } else {
    r.records = run_matrix(m, jobs, [](const RunRecord& x, std::size_t done, std::size_t total) {
      std::fprintf(stderr, "  [%zu/%zu] %s %s seed %llu: %s\n", done, total, std::string(to_string(x.env)).c_str(),
                   std::string(to_string(x.dm)).c_str(), static_cast<unsigned long long>(x.seed),
                   x.ok() ? fmt("return %.3f, %zu preferences", x.final_return, x.preferences).c_str()
                          : x.failure.c_str());
    });
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto norm = normalize_records(r.records);
  r.summary = summarize(r.records, norm);
  if (!r.reused) write_report(out, r.records, r.summary);
  return r;
}

double mean_of_dm(const MatrixSummary& s, DmKind dm, double DmSummary::*field) {
  const auto* d = find_summary(s, dm);
  return d ? d->*field : std::nan("");
}

CriterionResult preference_ordering(const MatrixRun& run) {
  const double g = mean_of_dm(run.summary, DmKind::Groupwise, &DmSummary::mean_preferences);
  const double i = mean_of_dm(run.summary, DmKind::Interactive, &DmSummary::mean_preferences);
  const double p = mean_of_dm(run.summary, DmKind::Pairwise, &DmSummary::mean_preferences);
  const bool order = g >= 1.1 * i && i >= 1.1 * p;
  const bool in_time = run.reused || run.seconds <= 2 * 3600;
  return {order && in_time,
          fmt("mean preferences groupwise %.1f, interactive %.1f, pairwise %.1f; gaps %+.1f%% and %+.1f%% (need +10%%); "
              "matrix %s %.0f s",
              g, i, p, 100 * (g / i - 1), 100 * (i / p - 1), run.reused ? "reused," : "ran in", run.seconds)};
}

CriterionResult return_ordering(const MatrixRun& run, const MatrixRun& ablation) {
  const auto* c = find_contrast(run.summary, "normalized_return", DmKind::Interactive, DmKind::Pairwise);
  const double ia = mean_of_dm(run.summary, DmKind::Interactive, &DmSummary::mean_normalized);
  const double pw = mean_of_dm(run.summary, DmKind::Pairwise, &DmSummary::mean_normalized);
  const double ag = mean_of_dm(ablation.summary, DmKind::Groupwise, &DmSummary::mean_normalized);
  const double ap = mean_of_dm(ablation.summary, DmKind::Pairwise, &DmSummary::mean_normalized);
  const bool main_ok = c && ia > pw && c->test.t > 0;
  const bool ablation_ok = ag <= ap;
  return {main_ok && ablation_ok,
          fmt("normalized return interactive %.3f vs pairwise %.3f, Welch t %+.3f (p %.3f); "
              "fixed-preference ablation groupwise %.3f vs pairwise %.3f",
              ia, pw, c ? c->test.t : std::nan(""), c ? c->test.p : std::nan(""), ag, ap)};
}

// ---------------------------------------------------------------------------
// Policy and layout

CriterionResult rl_sanity() {
  const auto spec = EnvSpec::grid_world();
  const PolicyConfig cfg;
  auto reward = [&](const Eigen::MatrixXd& x) { return true_step_rewards(spec, x); };
  std::string detail;
  std::size_t reached = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto p = init_policy(spec, cfg, seed);
    std::size_t hit = 0;
    double best = -1e9;
    for (std::size_t round = 1; round <= 10 && hit == 0; ++round) {
      train_policy(p, reward, cfg);
      // Same starts for the policy and the shortest-path optimum.
      double got = 0.0, opt = 0.0;
      const auto behavior = as_rollout_policy(p);
      for (std::uint64_t e = 0; e < 50; ++e) {
        const std::uint64_t s = derive_seed(seed, {0xacc, round, e});
        got += rollout(spec, behavior, s).true_rewards.sum();
        const auto start = reset(spec, s);
        const long dx = 7 - std::lround(start.observation[0] * 7), dy = 7 - std::lround(start.observation[1] * 7);
        opt += 10.0 - 0.1 * static_cast<double>(dx + dy - 1);
      }
      best = std::max(best, got / opt);
      if (got >= 0.9 * opt) hit = round;
    }
    if (hit) ++reached;
    detail += hit ? fmt(" seed %llu: round %zu;", static_cast<unsigned long long>(seed), hit)
                  : fmt(" seed %llu: best %.0f%%;", static_cast<unsigned long long>(seed), 100 * best);
  }
  return {reached == 5, fmt("%zu/5 seeds reach 90%% of optimum within 10 rounds:", reached) + detail};
}

CriterionResult layout_invariants() {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double worst_span = 0.0, worst_radius = 0.0;
  const LayoutParams params;
  for (std::uint64_t t = 0; t < 50; ++t) {
    const std::size_t n = 2 + (t * 7) % 60;
    const auto tree = fixtures::random_dendrogram(n, 300 + t);
    double sum = 0.0;
    for (const auto& a : radial_layout(tree, params))
      if (a.behavior) sum += a.end_angle - a.start_angle;
    worst_span = std::max(worst_span, std::abs(sum - kTwoPi));

    Rng rng(t);
    std::uniform_int_distribution<BehaviorId> pick(0, static_cast<BehaviorId>(n) - 1);
    std::vector<std::pair<BehaviorId, BehaviorId>> sugg;
    std::vector<HistoryEdge> hist;
    for (int e = 0; e < 10; ++e) {
      const BehaviorId a = pick(rng), b = pick(rng);
      if (a == b) continue;
      if (e % 2) sugg.emplace_back(a, b);
      else hist.push_back({a, b, static_cast<HistoryVerdict>(e % 3)});
    }
    const auto scene = build_scene(tree, sugg, hist, params);
    for (const auto& e : scene.edges) {
      for (const auto& pt : e.control_points) worst_radius = std::max(worst_radius, pt.radius - params.hub_radius);
      for (const auto& pt : tessellate_bspline(e.control_points))
        worst_radius = std::max(worst_radius, pt.radius - params.hub_radius);
    }
  }
  const auto t = fixtures::golden_tree();
  const std::vector<std::pair<BehaviorId, BehaviorId>> sugg{{10, 15}, {12, 14}};
  const std::vector<HistoryEdge> hist{{11, 13, HistoryVerdict::FirstPreferred}, {14, 10, HistoryVerdict::Skip}};
  const auto first = to_json(build_scene(t, sugg, hist));
  const auto second = to_json(build_scene(t, sugg, hist));
  std::ifstream in(std::string(GRLHF_TEST_DATA) + "/golden_scene.json");
  const bool golden = in && nlohmann::json::parse(in) == first && first.dump() == second.dump();
  const bool pass = worst_span <= 1e-9 && worst_radius <= 1e-12 && golden;
  return {pass, fmt("50 trees: max |sum of leaf spans - 2pi| %.1e, max radius beyond hub %.1e; golden scene %s",
                    worst_span, std::max(worst_radius, 0.0), golden ? "identical" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  Options o;
  app.add_option("--report", o.report, "Directory for the matrix reports");
  app.add_option("--reuse-matrix", o.reuse_matrix, "Read the default matrix from an earlier report directory");
  app.add_option("--reuse-ablation", o.reuse_ablation, "Read the fixed-preference ablation from an earlier report");
  app.add_option("--jobs", o.jobs, "Parallel matrix runs")->check(CLI::PositiveNumber);
  app.add_option("--only", o.only, "Run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  std::size_t failed = 0;
  auto wanted = [&](const std::string& name) {
    return o.only.empty() || std::find(o.only.begin(), o.only.end(), name) != o.only.end();
  };
  auto report = [&](const std::string& name, double limit_s, const std::function<CriterionResult()>& fn) {
    if (!wanted(name)) return;
    const auto t0 = std::chrono::steady_clock::now();
    CriterionResult r;
    try {
      r = fn();
    } catch (const std::exception& e) {
      r = {false, std::string("threw: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = limit_s <= 0 || s <= limit_s;
    if (!in_time) r.detail += fmt("; over the %.0f s limit", limit_s);
    const bool pass = r.pass && in_time;
    if (!pass) ++failed;
    std::printf("%s %-22s %s (%.1f s)\n", pass ? "PASS" : "FAIL", name.c_str(), r.detail.c_str(), s);
    std::fflush(stdout);
  };

  report("group-score-exact", 10, group_score_exactness);
  report("label-law", 5, label_law);
  report("gradient-check", 30, gradient_check);
  report("dtw-oracle", 0, dtw_oracle);
  report("clustering-direction", 300, clustering_direction);
  report("dm-error-rates", 60, error_rate_ordering);
  report("rl-sanity", 600, rl_sanity);
  report("layout-invariants", 0, layout_invariants);

  if (wanted("preference-count") || wanted("return-ordering")) {
    const std::filesystem::path out(o.report);
    MatrixRun matrix, ablation;
    ExperimentMatrix m;  // GridWorld and MountainCar, 3 DMs, 5 seeds, budget 400
    std::fprintf(stderr, "default matrix\n");
    matrix = run_or_load(m, o.reuse_matrix, out / "matrix", o.jobs);
    report("preference-count", 0, [&] { return preference_ordering(matrix); });
    if (wanted("return-ordering")) {
      ExperimentMatrix a = m;
      a.dms = {DmKind::Pairwise, DmKind::Groupwise};
      a.fixed_preference_budget = m.comparison_budget;
      std::fprintf(stderr, "fixed-preference ablation\n");
      ablation = run_or_load(a, o.reuse_ablation, out / "ablation", o.jobs);
      report("return-ordering", 0, [&] { return return_ordering(matrix, ablation); });
    }
  }
  std::printf("%zu criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
