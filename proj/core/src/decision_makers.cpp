#include "grlhf/decision_makers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "grlhf/error.hpp"

namespace grlhf {
namespace {

constexpr std::uint64_t kDmTag = 0xd3;
constexpr std::uint64_t kMixTag = 0x3175;

double mean_of(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

}  // namespace

std::string_view to_string(DmKind k) {
  switch (k) {
    case DmKind::Pairwise: return "pairwise";
    case DmKind::Groupwise: return "groupwise";
    case DmKind::Interactive: return "interactive";
  }
  return "pairwise";
}

DmKind dm_kind_from_string(std::string_view s) {
  if (s == "pairwise") return DmKind::Pairwise;
  if (s == "groupwise") return DmKind::Groupwise;
  if (s == "interactive") return DmKind::Interactive;
  throw UsageError("unknown decision-maker kind: " + std::string(s));
}

void DmConfig::validate() const {
  if (comparison_budget == 0) throw UsageError("comparison_budget must be at least 1");
  if (rounds == 0) throw UsageError("rounds must be positive");
  if (noise_std && *noise_std < 0) throw UsageError("noise_std must be non-negative");
  if (noise_fraction < 0) throw UsageError("noise_fraction must be non-negative");
  if (tie_band && *tie_band < 0) throw UsageError("tie_band must be non-negative");
  if (overlap_factor < 0) throw UsageError("overlap_factor must be non-negative");
  if (strata == 0) throw UsageError("strata must be positive");
  if (suggestion_mix < 0 || suggestion_mix > 1) throw UsageError("suggestion_mix must be in [0,1]");
}

nlohmann::json to_json(const DmConfig& c) {
  nlohmann::json j{{"kind", to_string(c.kind)},
                   {"noise_fraction", c.noise_fraction},
                   {"overlap_factor", c.overlap_factor},
                   {"comparison_budget", c.comparison_budget},
                   {"rounds", c.rounds},
                   {"strata", c.strata},
                   {"min_group_size", c.min_group_size},
                   {"suggestion_mix", c.suggestion_mix},
                   {"seed", c.seed}};
  j["noise_std"] = c.noise_std ? nlohmann::json(*c.noise_std) : nlohmann::json(nullptr);
  j["tie_band"] = c.tie_band ? nlohmann::json(*c.tie_band) : nlohmann::json(nullptr);
  return j;
}

DmConfig dm_config_from_json(const nlohmann::json& j) {
  DmConfig c;
  if (j.contains("kind")) c.kind = dm_kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("noise_std") && !j.at("noise_std").is_null()) c.noise_std = j.at("noise_std").get<double>();
  c.noise_fraction = j.value("noise_fraction", c.noise_fraction);
  if (j.contains("tie_band") && !j.at("tie_band").is_null()) c.tie_band = j.at("tie_band").get<double>();
  c.overlap_factor = j.value("overlap_factor", c.overlap_factor);
  c.comparison_budget = j.value("comparison_budget", c.comparison_budget);
  c.rounds = j.value("rounds", c.rounds);
  c.strata = j.value("strata", c.strata);
  c.min_group_size = j.value("min_group_size", c.min_group_size);
  c.suggestion_mix = j.value("suggestion_mix", c.suggestion_mix);
  c.seed = j.value("seed", c.seed);
  return c;
}

std::string_view to_string(DmOutcome o) {
  switch (o) {
    case DmOutcome::First: return "first";
    case DmOutcome::Second: return "second";
    case DmOutcome::Tie: return "tie";
    case DmOutcome::Skip: return "skip";
  }
  return "skip";
}

double perceive(double true_return, double sigma, Rng& rng) {
  if (sigma == 0) return true_return;
  std::normal_distribution<double> n(0.0, sigma);
  return true_return + n(rng);
}

DmVerdict decide_pair(double return_a, double return_b, double sigma, double tie_band, Rng& rng) {
  DmVerdict v;
  v.perceived_1 = perceive(return_a, sigma, rng);
  v.perceived_2 = perceive(return_b, sigma, rng);
  const double d = v.perceived_1 - v.perceived_2;
  v.outcome = std::abs(d) <= tie_band ? DmOutcome::Tie : d > 0 ? DmOutcome::First : DmOutcome::Second;
  return v;
}

DmVerdict decide_pair(const Behavior& a, const Behavior& b, double sigma, double tie_band, Rng& rng) {
  return decide_pair(a.true_return, b.true_return, sigma, tie_band, rng);
}

DmVerdict decide_groups(std::span<const double> returns_1, std::span<const double> returns_2, double sigma,
                        double overlap_factor, Rng& rng) {
  if (returns_1.empty() || returns_2.empty()) throw UsageError("decide_groups needs nonempty groups");
  std::vector<double> p1, p2;
  for (double r : returns_1) p1.push_back(perceive(r, sigma, rng));
  for (double r : returns_2) p2.push_back(perceive(r, sigma, rng));
  DmVerdict v;
  v.perceived_1 = mean_of(p1);
  v.perceived_2 = mean_of(p2);
  double ss = 0.0;
  for (double x : p1) ss += (x - v.perceived_1) * (x - v.perceived_1);
  for (double x : p2) ss += (x - v.perceived_2) * (x - v.perceived_2);
  const std::size_t dof = p1.size() + p2.size() - 2;
  const double pooled = dof == 0 ? 0.0 : std::sqrt(ss / static_cast<double>(dof));
  const double gap = v.perceived_1 - v.perceived_2;
  if (std::abs(gap) <= overlap_factor * pooled) {
    v.outcome = DmOutcome::Skip;
  } else {
    v.outcome = gap > 0 ? DmOutcome::First : DmOutcome::Second;
  }
  return v;
}

bool is_decision_error(DmOutcome outcome, double true_1, double true_2) {
  return (outcome == DmOutcome::First && true_1 < true_2) || (outcome == DmOutcome::Second && true_2 < true_1);
}

Verdict to_verdict(DmOutcome o) {
  switch (o) {
    case DmOutcome::First: return Verdict::G1Preferred;
    case DmOutcome::Second: return Verdict::G2Preferred;
    case DmOutcome::Tie: return Verdict::Tie;
    case DmOutcome::Skip: return Verdict::Skip;
  }
  return Verdict::Skip;
}

double round_noise_std(const DmConfig& config, std::span<const Behavior> behaviors) {
  if (config.noise_std) return *config.noise_std;
  if (behaviors.empty()) return 0.0;
  const auto [lo, hi] = std::minmax_element(behaviors.begin(), behaviors.end(),
                                            [](const Behavior& a, const Behavior& b) { return a.true_return < b.true_return; });
  return config.noise_fraction * (hi->true_return - lo->true_return);
}

NodePair interactive_select(std::span<const Behavior> behaviors, const Dendrogram& dendrogram,
                            const std::set<GroupPairKey>& compared, InteractiveState& state, const DmConfig& config,
                            Rng& rng) {
  constexpr std::size_t kMaxGroup = 8;
  std::vector<NodeId> cands = candidate_nodes(dendrogram, kMaxGroup, std::max<std::size_t>(config.min_group_size, 1));
  if (cands.size() < 2) cands = candidate_nodes(dendrogram, kMaxGroup, 1);
  if (cands.size() < 2) throw ExhaustedError("fewer than two candidate groups");

  std::unordered_map<BehaviorId, double> true_return;
  for (const auto& b : behaviors) true_return[b.id] = b.true_return;
  struct Cand {
    NodeId id;
    std::vector<BehaviorId> leaves;
    double mean;
    std::size_t stratum = 0;
  };
  std::vector<Cand> info;
  for (auto id : cands) {
    Cand c{id, dendrogram.leaves_of(id), 0.0};
    std::vector<double> r;
    for (auto leaf : c.leaves) {
      auto it = true_return.find(leaf);
      if (it == true_return.end()) throw UsageError("dendrogram leaf " + std::to_string(leaf) + " is not a round behavior");
      r.push_back(it->second);
    }
    c.mean = mean_of(r);
    info.push_back(std::move(c));
  }
  // Random order first so that the stable sorts below break ties randomly.
  std::shuffle(info.begin(), info.end(), rng);
  std::stable_sort(info.begin(), info.end(), [](const Cand& a, const Cand& b) { return a.mean < b.mean; });
  const std::size_t Q = std::min(config.strata, info.size());
  for (std::size_t k = 0; k < info.size(); ++k) info[k].stratum = k * Q / info.size();

  if (state.round_key != behaviors.front().id) {
    state.round_key = behaviors.front().id;
    state.uses.clear();
  }
  std::vector<std::size_t> order(info.size());
  std::iota(order.begin(), order.end(), 0);
  auto uses = [&](std::size_t k) {
    auto it = state.uses.find(info[k].id);
    return it == state.uses.end() ? std::size_t{0} : it->second;
  };
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return uses(a) < uses(b); });

  auto disjoint = [&](const Cand& a, const Cand& b) {
    const auto& x = dendrogram.node(a.id);
    const auto& y = dendrogram.node(b.id);
    return x.span_end <= y.span_begin || y.span_end <= x.span_begin;
  };
  auto partner_strata = [&](std::size_t anchor, bool spanning) {
    std::vector<std::size_t> s(Q);
    std::iota(s.begin(), s.end(), 0);
    auto dist = [&](std::size_t x) { return x > anchor ? x - anchor : anchor - x; };
    std::stable_sort(s.begin(), s.end(), [&](auto a, auto b) {
      const auto da = dist(a), db = dist(b);
      if (da == 0 || db == 0) return db == 0 && da != 0;  // the anchor's own stratum goes last
      return spanning ? da > db : da < db;
    });
    return s;
  };

  for (std::size_t attempt = 0; attempt < Q; ++attempt) {
    const std::size_t anchor = (state.cursor + attempt) % Q;
    const bool spanning = ((state.cursor + attempt) / Q) % 2 == 1;
    for (std::size_t target : partner_strata(anchor, spanning)) {
      for (auto a : order) {
        if (info[a].stratum != anchor) continue;
        for (auto b : order) {
          if (a == b || info[b].stratum != target || !disjoint(info[a], info[b])) continue;
          if (compared.contains(make_group_key(info[a].leaves, info[b].leaves))) continue;
          state.cursor += attempt + 1;
          ++state.uses[info[a].id];
          ++state.uses[info[b].id];
          return {info[a].id, info[b].id, info[a].leaves, info[b].leaves, anchor};
        }
      }
    }
  }
  throw ExhaustedError("no uncompared disjoint pair of candidate groups is left");
}

nlohmann::json to_json(const DmRunResult& r) {
  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& m : r.rounds) rounds.push_back(to_json(m));
  return {{"kind", to_string(r.kind)},
          {"rounds", rounds},
          {"final_return", r.final_return},
          {"comparisons", r.comparisons},
          {"skips", r.skips},
          {"preferences", r.preferences},
          {"decisions", r.decisions},
          {"decision_errors", r.decision_errors},
          {"noise_std", r.noise_std}};
}

DmRunResult run_dm_session(const SessionConfig& session_config, const DmConfig& dm, const DmProgressFn& progress) {
  dm.validate();
  SessionConfig sc = session_config;
  sc.rounds = dm.rounds;
  Session session = Session::start(sc);
  Rng rng(derive_seed(dm.seed, {kDmTag, static_cast<std::uint64_t>(dm.kind)}));
  Rng mix_rng(derive_seed(dm.seed, {kMixTag}));
  InteractiveState interactive;
  DmRunResult result;
  result.kind = dm.kind;
  std::int64_t clock = 0;

  for (std::size_t round = 0; round < dm.rounds; ++round) {
    const auto& behaviors = session.behaviors();
    const double sigma = round_noise_std(dm, behaviors);
    const double tie_band = dm.tie_band.value_or(sigma / 10.0);
    result.noise_std.push_back(sigma);
    const std::size_t quota = dm.comparison_budget * (round + 1) / dm.rounds - dm.comparison_budget * round / dm.rounds;
    std::unordered_map<BehaviorId, double> true_return;
    for (const auto& b : behaviors) true_return[b.id] = b.true_return;
    auto returns_of = [&](const std::vector<BehaviorId>& ids) {
      std::vector<double> r;
      for (auto id : ids) r.push_back(true_return.at(id));
      return r;
    };

    for (std::size_t k = 0; k < quota; ++k) {
      GroupComparison c;
      c.origin = Origin::Dm;
      c.ts = clock++;
      DmVerdict v;
      double truth_1 = 0.0, truth_2 = 0.0;
      try {
        if (dm.kind == DmKind::Pairwise) {
          const auto [a, b] = session.suggest_pair();
          c.group_1 = {a};
          c.group_2 = {b};
          truth_1 = true_return.at(a);
          truth_2 = true_return.at(b);
          v = decide_pair(truth_1, truth_2, sigma, tie_band, rng);
        } else {
          const bool use_suggestion =
              dm.kind == DmKind::Groupwise ||
              (dm.suggestion_mix > 0 && std::uniform_real_distribution<double>(0.0, 1.0)(mix_rng) < dm.suggestion_mix);
          if (use_suggestion) {
            const GroupSuggestion s = session.suggest_groups();
            c.group_1 = s.leaves_1;
            c.group_2 = s.leaves_2;
            if (dm.kind == DmKind::Interactive) c.origin = Origin::SuggestionAccepted;
          } else {
            const NodePair p = interactive_select(behaviors, session.dendrogram(), session.store().compared_group_keys(),
                                                  interactive, dm, rng);
            c.group_1 = p.leaves_1;
            c.group_2 = p.leaves_2;
          }
          const auto r1 = returns_of(c.group_1);
          const auto r2 = returns_of(c.group_2);
          truth_1 = mean_of(r1);
          truth_2 = mean_of(r2);
          v = decide_groups(r1, r2, sigma, dm.overlap_factor, rng);
        }
      } catch (const ExhaustedError&) {
        break;
      }
      c.verdict = to_verdict(v.outcome);
      ++result.comparisons;
      if (v.outcome == DmOutcome::Skip) {
        ++result.skips;
      } else {
        ++result.decisions;
        if (is_decision_error(v.outcome, truth_1, truth_2)) ++result.decision_errors;
      }
      session.submit_comparison(std::move(c));
    }
    session.advance_round([&](std::string_view stage, double f) {
      if (progress) progress(round, stage, f);
    });
  }
  result.rounds = session.metrics();
  result.final_return = result.rounds.empty() ? 0.0 : result.rounds.back().eval_mean;
  result.preferences = session.store().queries().size();
  return result;
}

ErrorRateEstimate estimate_error_rates(const ErrorRateStudy& s) {
  if (s.trials == 0 || s.group_size == 0) throw UsageError("error-rate study needs trials and a group size");
  Rng rng(derive_seed(s.seed, {0xe77}));
  std::normal_distribution<double> spread(0.0, s.spread);
  std::size_t pair_errors = 0, pair_decisions = 0, group_errors = 0, group_decisions = 0, skips = 0;
  std::vector<double> g1(s.group_size), g2(s.group_size);
  for (std::size_t t = 0; t < s.trials; ++t) {
    for (auto& x : g1) x = 0.5 * s.separation + spread(rng);
    for (auto& x : g2) x = -0.5 * s.separation + spread(rng);
    const DmVerdict pv = decide_pair(g1[0], g2[0], s.sigma, s.tie_band, rng);
    if (pv.outcome != DmOutcome::Tie) {
      ++pair_decisions;
      if (is_decision_error(pv.outcome, g1[0], g2[0])) ++pair_errors;
    }
    const DmVerdict gv = decide_groups(g1, g2, s.sigma, s.overlap_factor, rng);
    if (gv.outcome == DmOutcome::Skip) {
      ++skips;
    } else {
      ++group_decisions;
      if (is_decision_error(gv.outcome, mean_of(g1), mean_of(g2))) ++group_errors;
    }
  }
  auto rate = [](std::size_t e, std::size_t n) { return n == 0 ? 0.0 : static_cast<double>(e) / static_cast<double>(n); };
  auto se = [](double p, std::size_t n) { return n == 0 ? 0.0 : std::sqrt(p * (1.0 - p) / static_cast<double>(n)); };
  ErrorRateEstimate e;
  e.pair_decisions = pair_decisions;
  e.pair_error_rate = rate(pair_errors, pair_decisions);
  e.pair_standard_error = se(e.pair_error_rate, pair_decisions);
  e.group_decisions = group_decisions;
  e.group_error_rate = rate(group_errors, group_decisions);
  e.group_standard_error = se(e.group_error_rate, group_decisions);
  e.group_skip_rate = rate(skips, s.trials);
  return e;
}

}  // namespace grlhf
