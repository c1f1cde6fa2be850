#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <span>
#include <vector>

#include "dgd/checkpoint.hpp"
#include "dgd/data.hpp"
#include "dgd/mlp.hpp"

namespace dgd {

struct TrainConfig {
  int epochs = 50;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double cutmix_alpha = 1.0;
  std::vector<int> hidden = {128, 64};
  std::uint64_t seed = 1;

  void validate() const;
  AdamConfig adam() const { return {learning_rate, beta1, beta2, 1e-8}; }
  nlohmann::json to_json() const;
  /// Strict: unknown keys raise InvalidArgument naming `section.key`.
  static TrainConfig from_json(const nlohmann::json& j, const std::string& section);
};

/// Classifier contract used by refinement and evaluation. Implementations are
/// immutable after construction and safe to call concurrently.
class ImageClassifier {
 public:
  struct Output {
    std::vector<float> logits;
    std::vector<float> features;
  };

  virtual ~ImageClassifier() = default;
  virtual const Shape& input_shape() const = 0;
  virtual int num_classes() const = 0;
  virtual std::size_t feature_dim() const = 0;
  /// Logits and penultimate features for each image.
  virtual std::vector<Output> run(std::span<const Tensor> images) const = 0;
};

struct Prediction {
  int label = 0;
  double confidence = 0.0;
  std::vector<float> logits;
};

/// argmax with ties to the lowest index; confidence = max softmax.
Prediction prediction_from_logits(std::span<const float> logits);
Prediction predict(const ImageClassifier& clf, const Tensor& image);
std::vector<float> extract_features(const ImageClassifier& clf, const Tensor& image);

struct TrainingInfo {
  int epochs = 0;
  std::uint64_t seed = 0;
  std::vector<double> epoch_loss;

  double final_loss() const { return epoch_loss.empty() ? 0.0 : epoch_loss.back(); }
};

/// MLP over flattened images: hidden layers with ReLU, linear logits.
class Detector final : public ImageClassifier {
 public:
  static constexpr const char* kArchitecture = "detector-v1";

  Detector(Shape input_shape, int num_classes, Mlp<float> net, TrainingInfo info = {});

  const Shape& input_shape() const override { return shape_; }
  int num_classes() const override { return classes_; }
  std::size_t feature_dim() const override;
  std::vector<Output> run(std::span<const Tensor> images) const override;

  const Mlp<float>& network() const { return net_; }
  const TrainingInfo& info() const { return info_; }

  Checkpoint to_checkpoint() const;
  static Detector from_checkpoint(const Checkpoint& ckpt);

 private:
  Shape shape_;
  int classes_;
  Mlp<float> net_;
  TrainingInfo info_;
};

/// Columns are flattened images.
Mat<float> images_to_matrix(std::span<const Tensor> images, const Shape& expected);

/// CutMix-augmented soft-label training; every sample gets a fresh partner and lambda.
Detector train_detector(const LabeledDataset& train, const TrainConfig& cfg, SeededRng& rng);
/// Plain one-hot cross-entropy training with the same architecture.
Detector train_classifier(const LabeledDataset& train, const TrainConfig& cfg, SeededRng& rng);

/// Fraction of samples whose argmax prediction equals the label.
double accuracy(const ImageClassifier& clf, const LabeledDataset& ds);

}  // namespace dgd
