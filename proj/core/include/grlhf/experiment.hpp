#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "grlhf/decision_makers.hpp"
#include "grlhf/envs.hpp"
#include "grlhf/session.hpp"
#include "grlhf/stats.hpp"

namespace grlhf {

struct ExperimentMatrix {
  std::vector<EnvName> envs{EnvName::GridWorld, EnvName::MountainCar};
  std::vector<DmKind> dms{DmKind::Pairwise, DmKind::Groupwise, DmKind::Interactive};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::size_t comparison_budget = 400;
  std::optional<std::size_t> fixed_preference_budget;  // ablation: cap on generated queries
  std::optional<double> noise_std;                      // absolute sigma; unset uses noise_fraction
  double noise_fraction = 0.1;
  SessionConfig session;  // env and seed are overwritten per cell
  DmConfig dm;            // kind, seed, budget and noise are overwritten per cell

  void validate() const;
};

struct RunRecord {
  EnvName env = EnvName::GridWorld;
  DmKind dm = DmKind::Pairwise;
  std::uint64_t seed = 0;
  double final_return = 0.0;
  double normalized_return = 0.0;
  std::size_t comparisons = 0;
  std::size_t preferences = 0;
  std::size_t errors = 0;  // decision errors against noiseless ground truth
  std::size_t decisions = 0;
  std::size_t skips = 0;
  std::vector<double> curve;  // true-return evaluation per round
  double seconds = 0.0;
  std::string failure;        // non-empty when the run threw

  bool ok() const { return failure.empty(); }
};

/// Session and DM configuration for one cell.
std::pair<SessionConfig, DmConfig> cell_config(const ExperimentMatrix& matrix, EnvName env, DmKind dm,
                                               std::uint64_t seed);

RunRecord run_cell(const ExperimentMatrix& matrix, EnvName env, DmKind dm, std::uint64_t seed);

using MatrixProgressFn = std::function<void(const RunRecord& finished, std::size_t done, std::size_t total)>;

/// One run per (env, dm, seed) on `jobs` worker threads. Failed runs are kept
/// with their message. Records come back in matrix order.
std::vector<RunRecord> run_matrix(const ExperimentMatrix& matrix, std::size_t jobs = 1,
                                  const MatrixProgressFn& progress = {});

enum class NormalizationScope { PerEnvironment, Pooled };

struct NormalizationGroup {
  std::string label;  // environment name, or "all"
  double q1 = 0.0;
  double q3 = 0.0;
  std::size_t runs = 0;
  bool degenerate = false;
};

/// Fills normalized_return of the successful records in place.
std::vector<NormalizationGroup> normalize_records(std::vector<RunRecord>& records,
                                                  NormalizationScope scope = NormalizationScope::PerEnvironment);

struct DmSummary {
  DmKind dm = DmKind::Pairwise;
  std::size_t runs = 0;
  std::size_t failures = 0;
  double mean_normalized = 0.0;
  double std_normalized = 0.0;
  double mean_final_return = 0.0;
  double mean_preferences = 0.0;
  double mean_comparisons = 0.0;
  double mean_errors = 0.0;
  double error_rate = 0.0;  // errors / decisions
};

struct Contrast {
  std::string metric;  // "normalized_return" or "preferences"
  DmKind a = DmKind::Interactive;
  DmKind b = DmKind::Pairwise;
  double mean_a = 0.0;
  double mean_b = 0.0;
  double relative_difference = 0.0;  // (mean_a - mean_b) / |mean_b|
  stats::TTest test;
  std::optional<double> reference;   // expected relative difference, for orientation only
};

struct MatrixSummary {
  std::vector<DmSummary> dms;
  std::vector<Contrast> contrasts;
  std::vector<NormalizationGroup> normalization;
};

MatrixSummary summarize(const std::vector<RunRecord>& records, const std::vector<NormalizationGroup>& normalization);

const DmSummary* find_summary(const MatrixSummary& s, DmKind dm);
const Contrast* find_contrast(const MatrixSummary& s, const std::string& metric, DmKind a, DmKind b);

/// Writes records.csv, curves.csv, summary.csv, contrasts.csv, normalization.csv,
/// pareto.csv, summary.txt and failures.csv (when any run failed) into `dir`.
void write_report(const std::filesystem::path& dir, const std::vector<RunRecord>& records,
                  const MatrixSummary& summary);

std::string summary_text(const MatrixSummary& summary, const std::vector<RunRecord>& records);

}  // namespace grlhf
