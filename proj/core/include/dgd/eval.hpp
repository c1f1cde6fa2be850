#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dgd/detector.hpp"
#include "dgd/refine.hpp"

namespace dgd {

/// Downstream classifier: detector architecture, plain one-hot cross-entropy, no CutMix.
Detector train_downstream(const LabeledDataset& distilled, const TrainConfig& cfg, SeededRng& rng);

/// Top-1 accuracy. Throws InvalidArgument on an empty test set.
double evaluate(const ImageClassifier& clf, const LabeledDataset& test);

struct PipelineInputs {
  const LabeledDataset* train = nullptr;
  const LabeledDataset* test = nullptr;
  const Autoencoder* autoencoder = nullptr;
  const CandidateGenerator* generator = nullptr;
  const ImageClassifier* detector = nullptr;
  DistillConfig distill;
  TrainConfig downstream{.epochs = 300, .batch_size = 32, .learning_rate = 1e-3};
  /// Worker threads for independent runs; results do not depend on it.
  int threads = 1;
};

/// "random" is the random-real-subset baseline.
struct RunRecord {
  std::string mode;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  int fallback_count = 0;
  int refined_count = 0;
  int initially_defective = 0;
  double seconds = 0.0;
};

struct ModeSummary {
  std::string mode;
  double mean = 0.0;
  std::optional<double> stddev;  ///< sample std over >= 2 seeds
  int runs = 0;
};

struct EvalReport {
  std::vector<RunRecord> runs;
  std::vector<ModeSummary> summaries;
  nlohmann::json config;
  std::string architecture_note;

  /// Deterministic content only; wall-clock timings go to timings_json().
  nlohmann::json to_json() const;
  nlohmann::json timings_json() const;
  static EvalReport from_json(const nlohmann::json& j);
  /// mode,seed,accuracy,fallback_count
  std::string to_csv() const;
  /// Fixed-width table of the summaries.
  std::string summary_table() const;
  const ModeSummary* summary(const std::string& mode) const;
  std::optional<double> accuracy(const std::string& mode, std::uint64_t seed) const;
};

/// Mean and sample standard deviation, in input order.
ModeSummary summarize(const std::string& mode, std::span<const double> values);

/// Downstream training stream for a seed; shared by every mode so runs differ only in their data.
SeededRng downstream_stream(std::uint64_t seed);

/// distill + train_downstream + evaluate for every (mode, seed), plus the
/// random-real-subset baseline per seed when `random_baseline` is set.
EvalReport run_ablation(const PipelineInputs& inputs, std::span<const SelectionMode> modes,
                        std::span<const std::uint64_t> seeds, bool random_baseline = true);

struct SensitivityRow {
  int top_k = 0;
  double beta = 0.0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  int refined = 0;
  int fallback = 0;
  int initially_defective = 0;
};

struct SensitivityReport {
  std::vector<SensitivityRow> rows;
  /// Candidate batches checked for the nested-filter property, and failures.
  long monotone_checks = 0;
  long monotone_violations = 0;

  /// top_k,beta,seed,accuracy,refined,fallback,initially_defective
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

/// True when raising beta never adds a candidate to the passing set, across every pair in `betas`.
bool filter_is_monotone(std::span<const SyntheticSample> candidates, std::span<const double> betas);

/// tplus_s distillation over the (top_k, beta) grid. Every candidate batch
/// seen during the sweep is checked with filter_is_monotone over all betas.
SensitivityReport run_sensitivity(const PipelineInputs& inputs, std::span<const int> top_ks,
                                  std::span<const double> betas, std::span<const std::uint64_t> seeds);

/// Runs fn(i) for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace dgd
