#include "grlhf/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "grlhf/error.hpp"

namespace grlhf {
namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string fixed(double v, int digits) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

// Published relative differences of mean normalized return.
std::optional<double> reference_for(DmKind a, DmKind b) {
  if (a == DmKind::Interactive && b == DmKind::Pairwise) return 0.6934;
  if (a == DmKind::Groupwise && b == DmKind::Pairwise) return 0.413;
  if (a == DmKind::Interactive && b == DmKind::Groupwise) return 0.2804;
  return std::nullopt;
}

}  // namespace

void ExperimentMatrix::validate() const {
  if (envs.empty() || dms.empty() || seeds.empty()) throw UsageError("experiment matrix axes must be nonempty");
  if (comparison_budget == 0) throw UsageError("comparison budget must be positive");
  if (fixed_preference_budget && *fixed_preference_budget == 0) throw UsageError("preference budget must be positive");
  if (noise_std && !(*noise_std >= 0.0)) throw UsageError("noise_std must be >= 0");
  if (!(noise_fraction >= 0.0)) throw UsageError("noise_fraction must be >= 0");
}

std::pair<SessionConfig, DmConfig> cell_config(const ExperimentMatrix& m, EnvName env, DmKind dm, std::uint64_t seed) {
  SessionConfig sc = m.session;
  sc.env = EnvSpec::from_name(env);
  sc.seed = seed;
  sc.preference_budget = m.fixed_preference_budget;
  DmConfig dc = m.dm;
  dc.kind = dm;
  dc.seed = seed;
  dc.comparison_budget = m.comparison_budget;
  dc.noise_std = m.noise_std;
  dc.noise_fraction = m.noise_fraction;
  return {sc, dc};
}

RunRecord run_cell(const ExperimentMatrix& m, EnvName env, DmKind dm, std::uint64_t seed) {
  RunRecord rec;
  rec.env = env;
  rec.dm = dm;
  rec.seed = seed;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const auto [sc, dc] = cell_config(m, env, dm, seed);
    const DmRunResult r = run_dm_session(sc, dc);
    rec.final_return = r.final_return;
    rec.comparisons = r.comparisons;
    rec.preferences = r.preferences;
    rec.errors = r.decision_errors;
    rec.decisions = r.decisions;
    rec.skips = r.skips;
    for (const auto& row : r.rounds) rec.curve.push_back(row.eval_mean);
  } catch (const std::exception& e) {
    rec.failure = e.what();
    if (rec.failure.empty()) rec.failure = "unknown failure";
  }
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

std::vector<RunRecord> run_matrix(const ExperimentMatrix& m, std::size_t jobs, const MatrixProgressFn& progress) {
  m.validate();
  struct Cell {
    EnvName env;
    DmKind dm;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (auto env : m.envs)
    for (auto dm : m.dms)
      for (auto seed : m.seeds) cells.push_back({env, dm, seed});

  std::vector<RunRecord> records(cells.size());
  std::atomic<std::size_t> next{0};
  std::size_t done = 0;
  std::mutex mu;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < cells.size();) {
      records[i] = run_cell(m, cells[i].env, cells[i].dm, cells[i].seed);
      std::lock_guard lock(mu);
      ++done;
      if (progress) progress(records[i], done, cells.size());
    }
  };
  jobs = std::clamp<std::size_t>(jobs, 1, cells.size());
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return records;
}

std::vector<NormalizationGroup> normalize_records(std::vector<RunRecord>& records, NormalizationScope scope) {
  std::vector<NormalizationGroup> groups;
  auto apply = [&](const std::string& label, auto&& member) {
    std::vector<RunRecord*> rs;
    for (auto& r : records)
      if (r.ok() && member(r)) rs.push_back(&r);
    if (rs.empty()) return;
    NormalizationGroup g;
    g.label = label;
    g.runs = rs.size();
    if (rs.size() < 4) {
      // Too few runs for quartiles; leave the values unscaled and flag it.
      g.degenerate = true;
      for (auto* r : rs) r->normalized_return = std::numeric_limits<double>::quiet_NaN();
      groups.push_back(g);
      return;
    }
    std::vector<double> v;
    for (auto* r : rs) v.push_back(r->final_return);
    const auto n = stats::normalize_iqr(v);
    g.q1 = n.q1;
    g.q3 = n.q3;
    g.degenerate = n.degenerate;
    for (std::size_t i = 0; i < rs.size(); ++i) rs[i]->normalized_return = n.values[i];
    groups.push_back(g);
  };
  for (auto& r : records)
    if (!r.ok()) r.normalized_return = std::numeric_limits<double>::quiet_NaN();
  if (scope == NormalizationScope::Pooled) {
    apply("all", [](const RunRecord&) { return true; });
    return groups;
  }
  std::vector<EnvName> envs;
  for (const auto& r : records)
    if (std::find(envs.begin(), envs.end(), r.env) == envs.end()) envs.push_back(r.env);
  for (auto env : envs) apply(std::string(to_string(env)), [env](const RunRecord& r) { return r.env == env; });
  return groups;
}

MatrixSummary summarize(const std::vector<RunRecord>& records, const std::vector<NormalizationGroup>& normalization) {
  MatrixSummary s;
  s.normalization = normalization;
  std::vector<DmKind> kinds;
  for (const auto& r : records)
    if (std::find(kinds.begin(), kinds.end(), r.dm) == kinds.end()) kinds.push_back(r.dm);
  std::sort(kinds.begin(), kinds.end());

  auto column = [&](DmKind dm, auto&& get) {
    std::vector<double> v;
    for (const auto& r : records)
      if (r.dm == dm && r.ok() && !std::isnan(get(r))) v.push_back(get(r));
    return v;
  };
  auto norm = [](const RunRecord& r) { return r.normalized_return; };
  auto prefs = [](const RunRecord& r) { return static_cast<double>(r.preferences); };
  auto avg = [](const std::vector<double>& v) {
    return v.empty() ? std::numeric_limits<double>::quiet_NaN() : stats::mean(v);
  };

  for (auto dm : kinds) {
    DmSummary d;
    d.dm = dm;
    std::size_t errors = 0, decisions = 0;
    for (const auto& r : records) {
      if (r.dm != dm) continue;
      if (!r.ok()) {
        ++d.failures;
        continue;
      }
      ++d.runs;
      errors += r.errors;
      decisions += r.decisions;
    }
    const auto nv = column(dm, norm);
    d.mean_normalized = avg(nv);
    d.std_normalized = nv.size() >= 2 ? std::sqrt(stats::sample_variance(nv)) : 0.0;
    d.mean_final_return = avg(column(dm, [](const RunRecord& r) { return r.final_return; }));
    d.mean_preferences = avg(column(dm, prefs));
    d.mean_comparisons = avg(column(dm, [](const RunRecord& r) { return static_cast<double>(r.comparisons); }));
    d.mean_errors = avg(column(dm, [](const RunRecord& r) { return static_cast<double>(r.errors); }));
    d.error_rate = decisions == 0 ? 0.0 : static_cast<double>(errors) / static_cast<double>(decisions);
    s.dms.push_back(d);
  }

  const std::pair<DmKind, DmKind> pairs[] = {{DmKind::Interactive, DmKind::Pairwise},
                                             {DmKind::Groupwise, DmKind::Pairwise},
                                             {DmKind::Interactive, DmKind::Groupwise}};
  for (const auto& [a, b] : pairs) {
    if (std::find(kinds.begin(), kinds.end(), a) == kinds.end() ||
        std::find(kinds.begin(), kinds.end(), b) == kinds.end())
      continue;
    for (const char* metric : {"normalized_return", "preferences"}) {
      const bool is_norm = std::string(metric) == "normalized_return";
      const auto va = is_norm ? column(a, norm) : column(a, prefs);
      const auto vb = is_norm ? column(b, norm) : column(b, prefs);
      Contrast c;
      c.metric = metric;
      c.a = a;
      c.b = b;
      c.mean_a = avg(va);
      c.mean_b = avg(vb);
      c.relative_difference = (c.mean_a - c.mean_b) / std::abs(c.mean_b);
      if (va.size() >= 2 && vb.size() >= 2) {
        c.test = stats::welch_t(va, vb);
      } else {
        c.test.degenerate = true;
        c.test.t = c.test.p = std::numeric_limits<double>::quiet_NaN();
      }
      if (is_norm) c.reference = reference_for(a, b);
      s.contrasts.push_back(c);
    }
  }
  return s;
}

const DmSummary* find_summary(const MatrixSummary& s, DmKind dm) {
  for (const auto& d : s.dms)
    if (d.dm == dm) return &d;
  return nullptr;
}

const Contrast* find_contrast(const MatrixSummary& s, const std::string& metric, DmKind a, DmKind b) {
  for (const auto& c : s.contrasts)
    if (c.metric == metric && c.a == a && c.b == b) return &c;
  return nullptr;
}

std::string summary_text(const MatrixSummary& s, const std::vector<RunRecord>& records) {
  std::ostringstream o;
  char line[256];
  std::snprintf(line, sizeof line, "%-12s %5s %9s %9s %12s %12s %12s %10s\n", "dm", "runs", "norm_mean", "norm_std",
                "final_return", "preferences", "comparisons", "error_rate");
  o << line;
  for (const auto& d : s.dms) {
    std::snprintf(line, sizeof line, "%-12s %5zu %9.3f %9.3f %12.3f %12.1f %12.1f %10.4f\n",
                  std::string(to_string(d.dm)).c_str(), d.runs, d.mean_normalized, d.std_normalized,
                  d.mean_final_return, d.mean_preferences, d.mean_comparisons, d.error_rate);
    o << line;
  }
  o << "\n";
  for (const auto& c : s.contrasts) {
    std::snprintf(line, sizeof line, "%-17s %-11s vs %-11s %+8.2f%%  t=%8.3f  p=%.3e", c.metric.c_str(),
                  std::string(to_string(c.a)).c_str(), std::string(to_string(c.b)).c_str(),
                  100.0 * c.relative_difference, c.test.t, c.test.p);
    o << line;
    if (c.reference) {
      std::snprintf(line, sizeof line, "  (reference: %+.2f%%)", 100.0 * *c.reference);
      o << line;
    }
    if (c.test.degenerate) o << "  [degenerate]";
    o << "\n";
  }
  o << "\nnormalization:";
  for (const auto& g : s.normalization) {
    o << " " << g.label << " q1=" << fixed(g.q1, 3) << " q3=" << fixed(g.q3, 3) << " n=" << g.runs;
    if (g.degenerate) o << " [degenerate]";
  }
  o << "\n";
  std::size_t failed = 0;
  for (const auto& r : records) failed += r.ok() ? 0 : 1;
  if (failed > 0) o << "failed runs: " << failed << "\n";
  return o.str();
}

void write_report(const std::filesystem::path& dir, const std::vector<RunRecord>& records, const MatrixSummary& s) {
  if (records.empty()) throw UsageError("no records to report");
  std::filesystem::create_directories(dir);
  {
    auto out = open_out(dir / "records.csv");
    out << "env,dm,seed,final_return,normalized_return,comparisons,preferences,errors\n";
    for (const auto& r : records) {
      if (!r.ok()) continue;
      out << to_string(r.env) << ',' << to_string(r.dm) << ',' << r.seed << ',' << fmt(r.final_return) << ','
          << fmt(r.normalized_return) << ',' << r.comparisons << ',' << r.preferences << ',' << r.errors << '\n';
    }
  }
  {
    auto out = open_out(dir / "curves.csv");
    out << "env,dm,seed,round,eval_return\n";
    for (const auto& r : records)
      for (std::size_t k = 0; k < r.curve.size(); ++k)
        out << to_string(r.env) << ',' << to_string(r.dm) << ',' << r.seed << ',' << k << ',' << fmt(r.curve[k])
            << '\n';
  }
  {
    auto out = open_out(dir / "pareto.csv");
    out << "env,dm,seed,preferences,normalized_return\n";
    for (const auto& r : records)
      if (r.ok())
        out << to_string(r.env) << ',' << to_string(r.dm) << ',' << r.seed << ',' << r.preferences << ','
            << fmt(r.normalized_return) << '\n';
  }
  {
    auto out = open_out(dir / "summary.csv");
    out << "dm,runs,failures,mean_normalized_return,std_normalized_return,mean_final_return,mean_preferences,"
           "mean_comparisons,mean_errors,error_rate\n";
    for (const auto& d : s.dms)
      out << to_string(d.dm) << ',' << d.runs << ',' << d.failures << ',' << fmt(d.mean_normalized) << ','
          << fmt(d.std_normalized) << ',' << fmt(d.mean_final_return) << ',' << fmt(d.mean_preferences) << ','
          << fmt(d.mean_comparisons) << ',' << fmt(d.mean_errors) << ',' << fmt(d.error_rate) << '\n';
  }
  {
    auto out = open_out(dir / "contrasts.csv");
    out << "metric,a,b,mean_a,mean_b,relative_difference,t,p,df,reference_relative_difference\n";
    for (const auto& c : s.contrasts)
      out << c.metric << ',' << to_string(c.a) << ',' << to_string(c.b) << ',' << fmt(c.mean_a) << ','
          << fmt(c.mean_b) << ',' << fmt(c.relative_difference) << ',' << fmt(c.test.t) << ',' << fmt(c.test.p)
          << ',' << fmt(c.test.df) << ',' << (c.reference ? fmt(*c.reference) : "") << '\n';
  }
  {
    auto out = open_out(dir / "normalization.csv");
    out << "population,q1,q3,runs,degenerate\n";
    for (const auto& g : s.normalization)
      out << g.label << ',' << fmt(g.q1) << ',' << fmt(g.q3) << ',' << g.runs << ',' << (g.degenerate ? 1 : 0)
          << '\n';
  }
  {
    auto out = open_out(dir / "summary.txt");
    out << summary_text(s, records);
  }
  const auto failures = dir / "failures.csv";
  std::filesystem::remove(failures);
  bool any = false;
  for (const auto& r : records) any = any || !r.ok();
  if (any) {
    auto out = open_out(failures);
    out << "env,dm,seed,message\n";
    for (const auto& r : records) {
      if (r.ok()) continue;
      std::string msg = r.failure;
      for (auto& ch : msg)
        if (ch == ',' || ch == '\n') ch = ' ';
      out << to_string(r.env) << ',' << to_string(r.dm) << ',' << r.seed << ',' << msg << '\n';
    }
  }
}

}  // namespace grlhf
