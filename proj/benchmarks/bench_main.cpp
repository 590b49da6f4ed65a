#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "grlhf/dendrogram.hpp"
#include "grlhf/dtw.hpp"
#include "grlhf/envs.hpp"
#include "grlhf/preferences.hpp"
#include "grlhf/random.hpp"
#include "grlhf/reward_ensemble.hpp"

using namespace grlhf;

namespace {

std::vector<Behavior> behaviors(std::size_t count, std::size_t len, std::size_t obs, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Behavior> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto& b = out[i];
    b.id = static_cast<BehaviorId>(i);
    b.states.resize(static_cast<Eigen::Index>(len), static_cast<Eigen::Index>(obs));
    b.actions.resize(static_cast<Eigen::Index>(len), 1);
    for (Eigen::Index k = 0; k < b.states.size(); ++k) b.states.data()[k] = n(rng);
    for (Eigen::Index k = 0; k < b.actions.size(); ++k) b.actions.data()[k] = n(rng);
  }
  return out;
}

RewardNetConfig reward_config(std::size_t input_dim) {
  RewardNetConfig c;
  c.input_dim = input_dim;
  return c;
}

void BM_Dtw(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  const auto bs = behaviors(2, len, 5, 1);
  for (auto _ : state) benchmark::DoNotOptimize(dtw_distance(bs[0].states, bs[1].states));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Dtw)->RangeMultiplier(2)->Range(16, 256)->Complexity(benchmark::oNSquared);

void BM_DistanceMatrix(benchmark::State& state) {
  const auto bs = behaviors(static_cast<std::size_t>(state.range(0)), 25, 5, 2);
  for (auto _ : state) benchmark::DoNotOptimize(distance_matrix(bs));
}
BENCHMARK(BM_DistanceMatrix)->Arg(50)->Arg(150)->Unit(benchmark::kMillisecond);

void BM_Cluster(benchmark::State& state) {
  const auto bs = behaviors(static_cast<std::size_t>(state.range(0)), 25, 5, 3);
  const auto d = distance_matrix(bs);
  for (auto _ : state) benchmark::DoNotOptimize(agglomerative_cluster(d));
}
BENCHMARK(BM_Cluster)->Arg(50)->Arg(150)->Unit(benchmark::kMillisecond);

void BM_GroupScore(benchmark::State& state) {
  const auto bs = behaviors(150, 25, 5, 4);
  const auto e = init_ensemble(reward_config(6));
  const DisagreementTable table(e, bs);
  std::vector<BehaviorId> g1, g2;
  for (BehaviorId i = 0; i < 8; ++i) {
    g1.push_back(i);
    g2.push_back(i + 8);
  }
  for (auto _ : state) benchmark::DoNotOptimize(group_score(table, g1, g2));
}
BENCHMARK(BM_GroupScore);

void BM_SuggestGroups(benchmark::State& state) {
  const auto bs = behaviors(150, 25, 5, 5);
  const auto e = init_ensemble(reward_config(6));
  const DisagreementTable table(e, bs);
  const auto tree = agglomerative_cluster(distance_matrix(bs));
  const std::set<GroupPairKey> compared;
  for (auto _ : state) benchmark::DoNotOptimize(suggest_groups(table, tree, compared));
}
BENCHMARK(BM_SuggestGroups)->Unit(benchmark::kMillisecond);

void BM_BtGradient(benchmark::State& state) {
  const auto bs = behaviors(64, 25, 5, 6);
  const BehaviorIndex idx(bs);
  const auto e = init_ensemble(reward_config(6));
  std::vector<PreferenceQuery> qs;
  for (BehaviorId i = 0; i + 1 < 64; i += 2) qs.push_back({i, i + 1, Outcome::IPreferred, "c"});
  for (auto _ : state) benchmark::DoNotOptimize(bt_loss_gradient(e.members[0], qs, idx));
}
BENCHMARK(BM_BtGradient)->Unit(benchmark::kMicrosecond);

}  // namespace
BENCHMARK_MAIN();
