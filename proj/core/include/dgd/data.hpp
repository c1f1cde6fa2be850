#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <utility>
#include <vector>

#include "dgd/numerics.hpp"

namespace dgd {

/// Images with integer class labels. Used for the real source set and for
/// distilled sets alike. `image_shape` is (channels, height, width) and is
/// kept even when the set is empty.
struct LabeledDataset {
  Shape image_shape;
  std::vector<Tensor> images;
  std::vector<int> labels;
  int num_classes = 0;
  std::vector<std::string> class_names;
  nlohmann::json provenance = nlohmann::json::object();

  std::size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }
  std::vector<std::size_t> indices_of_class(int c) const;
  void add(Tensor image, int label);
  /// Throws InvalidArgument when an invariant does not hold.
  void validate() const;

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

struct GratingPattern {
  double orientation_deg = 0.0;
  double frequency = 2.0;  ///< cycles across the image width

  friend bool operator==(const GratingPattern&, const GratingPattern&) = default;
};

/// Procedural stand-in for a natural-image benchmark: one oriented sinusoidal
/// grating family per class.
struct ToyDataSpec {
  int num_classes = 5;
  int train_per_class = 500;
  int test_per_class = 100;
  int channels = 1;
  int height = 16;
  int width = 16;
  /// Empty means default_patterns(num_classes).
  std::vector<GratingPattern> patterns;
  double amplitude_jitter = 0.2;
  double noise_std = 0.05;
  std::uint64_t seed = 7;

  std::vector<GratingPattern> resolved_patterns() const;
  Shape image_shape() const;
  void validate() const;
  nlohmann::json to_json() const;
  /// Strict: unknown keys are rejected.
  static ToyDataSpec from_json(const nlohmann::json& j);
  std::string fingerprint() const;
};

/// Evenly spaced orientations in [0, 180) with alternating frequencies 2 and 3.
std::vector<GratingPattern> default_patterns(int num_classes);

/// One grating image. Pixels are 0.5 + 0.4 * amplitude * sin(phase + ...)
/// plus Gaussian noise drawn from `rng`, clamped to [0, 1].
Tensor render_grating(const ToyDataSpec& spec, const GratingPattern& pattern, double phase, double amplitude,
                      SeededRng& rng);

/// Train and test sets from independent forks of `rng`.
std::pair<LabeledDataset, LabeledDataset> synthesize_toy_dataset(const ToyDataSpec& spec, SeededRng& rng);

/// Uniformly chosen `per_class` images of every class, without replacement.
LabeledDataset random_class_subset(const LabeledDataset& ds, int per_class, SeededRng& rng);

}  // namespace dgd
