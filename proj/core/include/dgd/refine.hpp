#pragma once

#include <cstdint>
#include <functional>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dgd/detector.hpp"
#include "dgd/prototypes.hpp"

namespace dgd {

enum class SampleStatus { normal, refined, fallback };
enum class SelectionMode { base, top1, sim, tplus_s };
enum class FallbackPolicy { best_confidence, keep_original };
enum class Verdict { accept, defective };

std::string to_string(SampleStatus s);
std::string to_string(SelectionMode m);
std::string to_string(FallbackPolicy p);
SelectionMode selection_mode_from_string(const std::string& s);
FallbackPolicy fallback_policy_from_string(const std::string& s);

struct SampleProvenance {
  int class_id = 0;
  int cluster_index = 0;
  /// 0 for the initial generation, 1..num_candidates for refinement candidates.
  int candidate_index = 0;
  std::uint64_t seed = 0;
};

struct SyntheticSample {
  Tensor image;
  std::vector<float> latent;
  int intended_label = 0;
  int predicted_label = 0;
  double confidence = 0.0;
  std::vector<float> feature;
  SampleStatus status = SampleStatus::normal;
  SampleProvenance provenance;
};

/// Per-class feature vectors of accepted samples.
class NormalPool {
 public:
  explicit NormalPool(int num_classes = 0) : pools_(static_cast<std::size_t>(num_classes)) {}

  void add(int cls, std::vector<float> feature) { pools_.at(static_cast<std::size_t>(cls)).push_back(std::move(feature)); }
  std::span<const std::vector<float>> features(int cls) const { return pools_.at(static_cast<std::size_t>(cls)); }
  std::size_t size(int cls) const { return pools_.at(static_cast<std::size_t>(cls)).size(); }
  int num_classes() const { return static_cast<int>(pools_.size()); }

  /// Every feature multiplied by `factor`.
  NormalPool scaled(float factor) const;

 private:
  std::vector<std::vector<std::vector<float>>> pools_;
};

struct DistillConfig {
  int ipc = 10;
  double beta = 0.9;
  int top_k = 2;
  int num_candidates = 20;
  double guidance_scale = 10.0;
  double strength = 0.7;
  std::uint64_t seed = 0;
  SelectionMode mode = SelectionMode::tplus_s;
  FallbackPolicy fallback = FallbackPolicy::best_confidence;
  KmeansOptions kmeans;

  void validate() const;
  nlohmann::json to_json() const;
  static DistillConfig from_json(const nlohmann::json& j, const std::string& section);
};

struct GeneratedImage {
  Tensor image;
  std::vector<float> latent;
};

/// Produces an image (and its latent) from a prototype and label. Must be
/// deterministic for a given rng stream.
class CandidateGenerator {
 public:
  virtual ~CandidateGenerator() = default;
  virtual GeneratedImage generate(const Prototype& proto, int label, SeededRng& rng) const = 0;
  /// One output per rng. The default calls generate() in order.
  virtual std::vector<GeneratedImage> generate_batch(const Prototype& proto, int label,
                                                     std::span<SeededRng> rngs) const;
};

/// accept iff predicted == label and confidence > beta.
Verdict classify_prediction(int predicted_label, double confidence, int label, double beta);
Verdict classify_sample(const ImageClassifier& det, const Tensor& image, int label, double beta);

/// Sum of cosine similarities between `feature` and every pool entry of `cls`; 0 for an empty pool.
double cumulative_similarity(std::span<const float> feature, const NormalPool& pool, int cls);

/// Indices of candidates with predicted == intended and confidence > beta.
std::vector<std::size_t> passing_candidates(std::span<const SyntheticSample> candidates, double beta);

/// Gate on label and beta, keep the k most confident (ties to the lower
/// index), return the one with the lowest cumulative similarity (ties to
/// higher confidence, then lower index). None when nothing passes the gate.
std::optional<std::size_t> select_replacement(std::span<const SyntheticSample> candidates, const NormalPool& pool,
                                              int k, double beta);

/// Mode-specific choice. top1: most confident label-matching candidate.
/// sim: least similar label-matching candidate. tplus_s: select_replacement.
std::optional<std::size_t> select_for_mode(SelectionMode mode, std::span<const SyntheticSample> candidates,
                                           const NormalPool& pool, int k, double beta);

/// Fills predicted label, confidence and feature from the detector.
void evaluate_samples(const ImageClassifier& det, std::span<SyntheticSample> samples);

struct DistillHooks {
  /// Called with every evaluated candidate batch, before selection.
  std::function<void(int cls, int cluster, std::span<const SyntheticSample>)> on_candidates;
};

/// Regenerates num_candidates samples from the same prototype with
/// independent streams rng.fork({class, cluster, i}), i = 1..num_candidates,
/// and picks a replacement. A refined pick is appended to the pool;
/// fallbacks are not.
SyntheticSample refine_defective(const Prototype& proto, int label, const CandidateGenerator& gen,
                                 const ImageClassifier& det, NormalPool& pool, const DistillConfig& cfg,
                                 const SeededRng& rng, const SyntheticSample& original,
                                 const DistillHooks& hooks = {});

struct SlotRecord {
  int class_id = 0;
  int cluster_index = 0;
  SampleStatus status = SampleStatus::normal;
  bool initially_defective = false;
  int predicted_label = 0;
  double confidence = 0.0;
  int candidate_index = 0;
  std::uint64_t seed = 0;
};

struct DistillReport {
  int normal = 0;
  int refined = 0;
  int fallback = 0;
  int initially_defective = 0;
  std::vector<SlotRecord> slots;
  nlohmann::json config;

  nlohmann::json to_json() const;
  static DistillReport from_json(const nlohmann::json& j);
};

struct DistillResult {
  LabeledDataset dataset;
  std::vector<SyntheticSample> samples;
  NormalPool pool;
  DistillReport report;
  PrototypeSet prototypes;
};

/// The full pipeline on precomputed prototypes: one generation per prototype,
/// detector screening, pool initialisation from accepted samples, then one
/// refinement pass over defective slots in (class, cluster) order.
DistillResult distill_from_prototypes(const PrototypeSet& prototypes, const CandidateGenerator& gen,
                                      const ImageClassifier& det, const DistillConfig& cfg,
                                      const DistillHooks& hooks = {});

/// Prototype extraction followed by distill_from_prototypes().
DistillResult distill(const LabeledDataset& train, const Autoencoder& encoder, const CandidateGenerator& gen,
                      const ImageClassifier& det, const DistillConfig& cfg, const DistillHooks& hooks = {});

/// Stream roots derived from the distillation seed.
SeededRng prototype_stream(const DistillConfig& cfg);
SeededRng generation_stream(const DistillConfig& cfg);

}  // namespace dgd
