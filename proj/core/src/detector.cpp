#include "dgd/detector.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "dgd/cutmix.hpp"

namespace dgd {

void TrainConfig::validate() const {
  if (epochs < 1) throw InvalidArgument("train config: epochs must be >= 1");
  if (batch_size < 1) throw InvalidArgument("train config: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw InvalidArgument("train config: learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw InvalidArgument("train config: moment coefficients must lie in [0, 1)");
  if (!(cutmix_alpha > 0.0)) throw InvalidArgument("train config: cutmix_alpha must be > 0");
  if (hidden.empty()) throw InvalidArgument("train config: need at least one hidden layer");
  for (int h : hidden)
    if (h <= 0) throw InvalidArgument("train config: hidden widths must be positive");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs}, {"batch_size", batch_size}, {"learning_rate", learning_rate},
          {"beta1", beta1},   {"beta2", beta2},           {"cutmix_alpha", cutmix_alpha},
          {"hidden", hidden}, {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, const std::string& section) {
  TrainConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "epochs") c.epochs = value.get<int>();
    else if (key == "batch_size") c.batch_size = value.get<int>();
    else if (key == "learning_rate") c.learning_rate = value.get<double>();
    else if (key == "beta1") c.beta1 = value.get<double>();
    else if (key == "beta2") c.beta2 = value.get<double>();
    else if (key == "cutmix_alpha") c.cutmix_alpha = value.get<double>();
    else if (key == "hidden") c.hidden = value.get<std::vector<int>>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else throw InvalidArgument("unknown key '" + section + "." + key + "'");
  }
  return c;
}

Prediction prediction_from_logits(std::span<const float> logits) {
  const auto probs = softmax(logits);
  Prediction p;
  p.label = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  p.confidence = *std::max_element(probs.begin(), probs.end());
  p.logits.assign(logits.begin(), logits.end());
  return p;
}

Prediction predict(const ImageClassifier& clf, const Tensor& image) {
  auto out = clf.run(std::span<const Tensor>(&image, 1));
  return prediction_from_logits(out.front().logits);
}

std::vector<float> extract_features(const ImageClassifier& clf, const Tensor& image) {
  return std::move(clf.run(std::span<const Tensor>(&image, 1)).front().features);
}

Mat<float> images_to_matrix(std::span<const Tensor> images, const Shape& expected) {
  const auto dim = static_cast<Eigen::Index>(shape_size(expected));
  Mat<float> x(dim, static_cast<Eigen::Index>(images.size()));
  for (std::size_t j = 0; j < images.size(); ++j) {
    if (images[j].shape() != expected) throw InvalidArgument("image shape does not match the model input shape");
    std::copy(images[j].data().begin(), images[j].data().end(), x.col(static_cast<Eigen::Index>(j)).data());
  }
  return x;
}

Detector::Detector(Shape input_shape, int num_classes, Mlp<float> net, TrainingInfo info)
    : shape_(std::move(input_shape)), classes_(num_classes), net_(std::move(net)), info_(std::move(info)) {
  if (net_.num_layers() < 2) throw InvalidArgument("Detector: need at least one hidden layer");
  if (net_.input_dim() != static_cast<int>(shape_size(shape_)) || net_.output_dim() != classes_)
    throw InvalidArgument("Detector: network dimensions do not match shape/classes");
}

std::size_t Detector::feature_dim() const {
  return static_cast<std::size_t>(net_.layers().back().weight.cols());
}

std::vector<ImageClassifier::Output> Detector::run(std::span<const Tensor> images) const {
  if (images.empty()) return {};
  MlpTrace<float> trace;
  const Mat<float> logits = net_.forward(images_to_matrix(images, shape_), &trace);
  const Mat<float>& feats = trace.inputs.back();
  std::vector<Output> out(images.size());
  for (std::size_t j = 0; j < images.size(); ++j) {
    const auto c = static_cast<Eigen::Index>(j);
    out[j].logits.assign(logits.col(c).data(), logits.col(c).data() + logits.rows());
    out[j].features.assign(feats.col(c).data(), feats.col(c).data() + feats.rows());
  }
  return out;
}

Checkpoint Detector::to_checkpoint() const {
  Checkpoint c;
  c.descriptor = {{"architecture", kArchitecture},
                  {"input_shape", shape_},
                  {"num_classes", classes_},
                  {"network", net_.descriptor()},
                  {"training", {{"epochs", info_.epochs}, {"seed", info_.seed}, {"epoch_loss", info_.epoch_loss}}}};
  auto net = net_;
  append_parameters(net, c.parameters);
  return c;
}

Detector Detector::from_checkpoint(const Checkpoint& ckpt) {
  require_architecture(ckpt, kArchitecture);
  try {
    const auto& d = ckpt.descriptor;
    auto net = Mlp<float>::from_descriptor(d.at("network"));
    std::size_t offset = 0;
    load_parameters(net, ckpt.parameters, &offset);
    if (offset != ckpt.parameters.size()) throw FormatError("field 'parameters' is longer than the network");
    TrainingInfo info;
    const auto& t = d.at("training");
    info.epochs = t.at("epochs").get<int>();
    info.seed = t.at("seed").get<std::uint64_t>();
    info.epoch_loss = t.at("epoch_loss").get<std::vector<double>>();
    return Detector(d.at("input_shape").get<Shape>(), d.at("num_classes").get<int>(), std::move(net),
                    std::move(info));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("detector descriptor: ") + e.what());
  }
}

namespace {

Detector train_impl(const LabeledDataset& train, const TrainConfig& cfg, SeededRng& rng, bool use_cutmix) {
  cfg.validate();
  train.validate();
  if (train.empty()) throw InvalidArgument("train_detector: dataset is empty");
  if (std::set<int>(train.labels.begin(), train.labels.end()).size() < 2 || train.num_classes < 2)
    throw InvalidArgument("train_detector: need at least two classes");

  std::vector<int> widths{static_cast<int>(shape_size(train.image_shape))};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(train.num_classes);
  SeededRng init_rng = rng.fork({0x1a17});
  Mlp<float> net(widths, Activation::relu, Activation::identity, init_rng);
  Adam<float> opt(cfg.adam());

  const std::size_t n = train.size();
  const auto in_dim = static_cast<Eigen::Index>(widths.front());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  TrainingInfo info{cfg.epochs, rng.seed(), {}};

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      const auto b = static_cast<Eigen::Index>(stop - start);
      Mat<float> x(in_dim, b);
      Mat<float> y = Mat<float>::Zero(train.num_classes, b);
      for (std::size_t k = start; k < stop; ++k) {
        const auto col = static_cast<Eigen::Index>(k - start);
        const std::size_t idx = order[k];
        if (use_cutmix) {
          const std::size_t partner = rng.below(n);
          const double lambda = sample_mix_ratio(cfg.cutmix_alpha, rng);
          auto mixed = cutmix(train.images[idx], train.labels[idx], train.images[partner], train.labels[partner],
                              train.num_classes, lambda, rng);
          std::copy(mixed.image.data().begin(), mixed.image.data().end(), x.col(col).data());
          for (int c = 0; c < train.num_classes; ++c) y(c, col) = static_cast<float>(mixed.soft_label[c]);
        } else {
          std::copy(train.images[idx].data().begin(), train.images[idx].data().end(), x.col(col).data());
          y(train.labels[idx], col) = 1.0f;
        }
      }
      MlpTrace<float> trace;
      const Mat<float> logits = net.forward(x, &trace);
      Mat<float> dlogits;
      const double loss = soft_cross_entropy(logits, y, &dlogits);
      if (!std::isfinite(loss)) throw NumericError("train_detector: loss diverged");
      auto grad = net.backward(trace, dlogits);
      opt.step(net.parameters(), grad.spans());
      epoch_loss += loss * static_cast<double>(b);
    }
    info.epoch_loss.push_back(epoch_loss / static_cast<double>(n));
  }
  return Detector(train.image_shape, train.num_classes, std::move(net), std::move(info));
}

}  // namespace

Detector train_detector(const LabeledDataset& train, const TrainConfig& cfg, SeededRng& rng) {
  return train_impl(train, cfg, rng, true);
}

Detector train_classifier(const LabeledDataset& train, const TrainConfig& cfg, SeededRng& rng) {
  return train_impl(train, cfg, rng, false);
}

double accuracy(const ImageClassifier& clf, const LabeledDataset& ds) {
  if (ds.empty()) throw InvalidArgument("accuracy: empty test set");
  std::size_t correct = 0;
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < ds.size(); start += kChunk) {
    const std::size_t stop = std::min(ds.size(), start + kChunk);
    const auto outs = clf.run(std::span<const Tensor>(ds.images).subspan(start, stop - start));
    for (std::size_t k = 0; k < outs.size(); ++k)
      if (prediction_from_logits(outs[k].logits).label == ds.labels[start + k]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

}  // namespace dgd
