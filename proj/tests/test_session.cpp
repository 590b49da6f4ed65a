#include <filesystem>
#include <fstream>
#include <sstream>
#include <set>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "grlhf/error.hpp"
#include "grlhf/session.hpp"
#include "support.hpp"

using namespace grlhf;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("grlhf-test-" + name);
  std::filesystem::remove_all(p);
  return p;
}

GroupComparison compare(const Session& s, std::vector<BehaviorId> g1, std::vector<BehaviorId> g2, Verdict v) {
  GroupComparison c;
  c.id = "c" + std::to_string(s.store().comparisons().size());
  c.group_1 = std::move(g1);
  c.group_2 = std::move(g2);
  c.verdict = v;
  return c;
}

}  // namespace

TEST(Session, StartSamplesAndClustersTheFirstRound) {
  const auto s = Session::start(fixtures::tiny_session_config());
  EXPECT_EQ(s.phase(), Phase::CollectingFeedback);
  EXPECT_EQ(s.round_index(), 0u);
  EXPECT_EQ(s.behaviors().size(), 24u);
  EXPECT_EQ(s.dendrogram().leaf_count(), 24u);
  EXPECT_FALSE(s.ensemble_trained());
  std::set<BehaviorId> ids;
  for (const auto& b : s.behaviors()) {
    EXPECT_TRUE(ids.insert(b.id).second);
    EXPECT_EQ(static_cast<std::size_t>(b.states.rows()), s.config().effective_segment_len());
    EXPECT_TRUE(s.in_current_round(b.id));
    EXPECT_EQ(s.find_behavior(b.id), &b);
  }
  EXPECT_EQ(s.find_behavior(999999), nullptr);
}

TEST(Session, ConfigValidationAndJsonRoundTrip) {
  auto c = fixtures::tiny_session_config(EnvSpec::mountain_car(), 7);
  const auto back = session_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
  EXPECT_EQ(back.env.name, EnvName::MountainCar);
  EXPECT_EQ(back.seed, 7u);

  c.behaviors_per_round = 1;
  EXPECT_THROW(Session::start(c), UsageError);
}

TEST(Session, SubmissionChecksRoundMembership) {
  auto s = Session::start(fixtures::tiny_session_config());
  const auto& b = s.behaviors();
  const auto q = s.submit_comparison(compare(s, {b[0].id, b[1].id}, {b[2].id}, Verdict::G1Preferred));
  EXPECT_EQ(q.size(), 2u);
  EXPECT_THROW(s.submit_comparison(compare(s, {b[0].id}, {424242}, Verdict::Tie)), UsageError);
  EXPECT_THROW(s.submit_comparison(compare(s, {b[0].id}, {b[0].id}, Verdict::Tie)), UsageError);
  EXPECT_EQ(s.store().comparisons().size(), 1u);
}

TEST(Session, HistoryEdgesFollowQueriesAndSkips) {
  auto s = Session::start(fixtures::tiny_session_config());
  const auto& b = s.behaviors();
  s.submit_comparison(compare(s, {b[0].id, b[1].id}, {b[2].id}, Verdict::G2Preferred));
  s.submit_comparison(compare(s, {b[3].id}, {b[4].id, b[5].id, b[6].id}, Verdict::Skip));
  const auto edges = s.history_edges();
  ASSERT_EQ(edges.size(), 5u);
  for (int i = 0; i < 2; ++i) {
    EXPECT_EQ(edges[i].verdict, HistoryVerdict::SecondPreferred);
    EXPECT_EQ(edges[i].b, b[2].id);
  }
  for (int i = 2; i < 5; ++i) {
    EXPECT_EQ(edges[i].verdict, HistoryVerdict::Skip);
    EXPECT_EQ(edges[i].a, b[3].id);  // group_1 side stays first
  }
}

TEST(Session, AdvanceRoundTrainsEvaluatesAndMovesOn) {
  auto s = Session::start(fixtures::tiny_session_config());
  const auto first = s.behaviors().front().id;
  const auto& b = s.behaviors();
  for (int i = 0; i + 1 < 12; i += 2)
    s.submit_comparison(compare(s, {b[i].id}, {b[i + 1].id}, b[i].true_return > b[i + 1].true_return
                                                                 ? Verdict::G1Preferred
                                                                 : Verdict::G2Preferred));
  std::vector<std::string> stages;
  s.advance_round([&](std::string_view st, double f) {
    EXPECT_GE(f, 0.0);
    EXPECT_LE(f, 1.0);
    stages.emplace_back(st);
  });
  EXPECT_FALSE(stages.empty());
  EXPECT_EQ(s.round_index(), 1u);
  EXPECT_TRUE(s.ensemble_trained());
  ASSERT_EQ(s.metrics().size(), 1u);
  EXPECT_EQ(s.metrics()[0].comparisons, 6u);
  EXPECT_EQ(s.metrics()[0].total_queries, 6u);
  EXPECT_TRUE(s.metrics()[0].reward_retrained);
  EXPECT_FALSE(s.in_current_round(first));
  EXPECT_NE(s.find_behavior(first), nullptr);  // earlier rounds stay addressable
  EXPECT_TRUE(s.history_edges().empty());

  s.advance_round();
  EXPECT_EQ(s.phase(), Phase::Finished);
  EXPECT_THROW(s.advance_round(), UsageError);
}

TEST(Session, SnapshotResumeIsIdempotent) {
  auto s = Session::start(fixtures::tiny_session_config());
  const auto& b = s.behaviors();
  s.submit_comparison(compare(s, {b[0].id, b[1].id}, {b[2].id, b[3].id}, Verdict::G1Preferred));
  s.submit_comparison(compare(s, {b[4].id}, {b[5].id}, Verdict::G2Preferred));
  s.advance_round();
  s.submit_comparison(compare(s, {s.behaviors()[0].id}, {s.behaviors()[1].id}, Verdict::Tie));

  const auto dir = temp_dir("snapshot");
  s.snapshot(dir);
  const auto r = Session::resume(dir);
  EXPECT_EQ(r.round_index(), s.round_index());
  EXPECT_EQ(r.phase(), s.phase());
  EXPECT_EQ(r.store().comparisons(), s.store().comparisons());
  EXPECT_EQ(r.metrics(), s.metrics());
  EXPECT_EQ(r.suggest_pair(), s.suggest_pair());
  EXPECT_EQ(r.behaviors().size(), s.behaviors().size());
  for (std::size_t i = 0; i < r.behaviors().size(); ++i) {
    EXPECT_EQ(r.behaviors()[i].id, s.behaviors()[i].id);
    EXPECT_EQ(r.behaviors()[i].states, s.behaviors()[i].states);
  }
  EXPECT_TRUE(r.dendrogram() == s.dendrogram());

  // A second snapshot of the resumed session is byte-identical.
  const auto dir2 = temp_dir("snapshot2");
  r.snapshot(dir2);
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), dir);
    std::ifstream a(e.path(), std::ios::binary), c(dir2 / rel, std::ios::binary);
    std::stringstream sa, sc;
    sa << a.rdbuf();
    sc << c.rdbuf();
    EXPECT_EQ(sa.str(), sc.str()) << rel;
  }

  // Continuing either session gives the same next round.
  auto s2 = s;
  auto r2 = r;
  s2.advance_round();
  r2.advance_round();
  EXPECT_EQ(s2.metrics(), r2.metrics());
}

TEST(Session, ResumeRejectsMissingOrCorruptSnapshots) {
  EXPECT_THROW(Session::resume(temp_dir("missing")), Error);
  auto s = Session::start(fixtures::tiny_session_config());
  const auto dir = temp_dir("corrupt");
  s.snapshot(dir);
  std::ofstream(dir / "session.json") << "{not json";
  EXPECT_THROW(Session::resume(dir), CorruptDataError);
}

TEST(Session, StartIsDeterministicPerSeed) {
  const auto a = Session::start(fixtures::tiny_session_config(EnvSpec::grid_world(), 5));
  const auto b = Session::start(fixtures::tiny_session_config(EnvSpec::grid_world(), 5));
  const auto c = Session::start(fixtures::tiny_session_config(EnvSpec::grid_world(), 6));
  ASSERT_EQ(a.behaviors().size(), b.behaviors().size());
  bool differs = false;
  for (std::size_t i = 0; i < a.behaviors().size(); ++i) {
    EXPECT_EQ(a.behaviors()[i].states, b.behaviors()[i].states);
    if (i < c.behaviors().size() && c.behaviors()[i].states != a.behaviors()[i].states) differs = true;
  }
  EXPECT_TRUE(differs);
}
