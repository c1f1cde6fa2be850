#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "dgd/error.hpp"
#include "dgd/rng.hpp"

namespace dgd {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

enum class Activation { identity, relu, tanh, silu, sigmoid };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

template <typename T>
struct DenseLayer {
  Mat<T> weight;  ///< out x in
  Vec<T> bias;
  Activation activation = Activation::identity;
};

/// Per-layer values saved by forward() for backward(). Samples are columns.
template <typename T>
struct MlpTrace {
  std::vector<Mat<T>> inputs;  ///< inputs[l] feeds layer l
  std::vector<Mat<T>> pre;     ///< W x + b of layer l
  Mat<T> output;
};

template <typename T>
struct MlpGrad {
  std::vector<Mat<T>> weight;
  std::vector<Vec<T>> bias;

  /// Same ordering as Mlp::parameters().
  std::vector<std::span<T>> spans() {
    std::vector<std::span<T>> out;
    for (std::size_t l = 0; l < weight.size(); ++l) {
      out.emplace_back(weight[l].data(), static_cast<std::size_t>(weight[l].size()));
      out.emplace_back(bias[l].data(), static_cast<std::size_t>(bias[l].size()));
    }
    return out;
  }
};

namespace detail {

template <typename T>
Mat<T> activate(const Mat<T>& a, Activation act) {
  switch (act) {
    case Activation::identity: return a;
    case Activation::relu: return a.cwiseMax(T(0));
    case Activation::tanh: return a.array().tanh().matrix();
    case Activation::sigmoid: return (T(1) / (T(1) + (-a.array()).exp())).matrix();
    case Activation::silu: return (a.array() / (T(1) + (-a.array()).exp())).matrix();
  }
  return a;
}

/// d(act)/d(pre), evaluated from the pre-activation `a` and output `y`.
template <typename T>
Mat<T> activation_grad(const Mat<T>& a, const Mat<T>& y, Activation act) {
  switch (act) {
    case Activation::identity: return Mat<T>::Ones(a.rows(), a.cols());
    case Activation::relu: return (a.array() > T(0)).template cast<T>().matrix();
    case Activation::tanh: return (T(1) - y.array().square()).matrix();
    case Activation::sigmoid: return (y.array() * (T(1) - y.array())).matrix();
    case Activation::silu: {
      auto s = (T(1) / (T(1) + (-a.array()).exp()));
      return (s * (T(1) + a.array() * (T(1) - s))).matrix();
    }
  }
  return Mat<T>::Ones(a.rows(), a.cols());
}

}  // namespace detail

/// Fully connected network with hand-derived backpropagation.
template <typename T>
class Mlp {
 public:
  Mlp() = default;

  /// widths = {in, hidden..., out}. He-style init for rectifiers, 1/fan_in otherwise.
  Mlp(const std::vector<int>& widths, Activation hidden, Activation output, SeededRng& rng) {
    if (widths.size() < 2) throw InvalidArgument("Mlp: need at least input and output widths");
    for (int w : widths)
      if (w <= 0) throw InvalidArgument("Mlp: widths must be positive");
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      DenseLayer<T> layer;
      layer.activation = l + 2 == widths.size() ? output : hidden;
      const int fan_in = widths[l];
      const bool rectifier = hidden == Activation::relu || hidden == Activation::silu;
      const double scale = std::sqrt((rectifier ? 2.0 : 1.0) / fan_in);
      layer.weight.resize(widths[l + 1], fan_in);
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
        for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
          layer.weight(i, j) = static_cast<T>(scale * rng.normal());
      layer.bias = Vec<T>::Zero(widths[l + 1]);
      layers_.push_back(std::move(layer));
    }
  }

  explicit Mlp(std::vector<DenseLayer<T>> layers) : layers_(std::move(layers)) {}

  int input_dim() const { return static_cast<int>(layers_.front().weight.cols()); }
  int output_dim() const { return static_cast<int>(layers_.back().weight.rows()); }
  std::size_t num_layers() const { return layers_.size(); }
  const std::vector<DenseLayer<T>>& layers() const { return layers_; }
  std::vector<DenseLayer<T>>& layers() { return layers_; }

  std::vector<int> widths() const {
    std::vector<int> w{input_dim()};
    for (const auto& l : layers_) w.push_back(static_cast<int>(l.weight.rows()));
    return w;
  }

  Mat<T> forward(const Mat<T>& x, MlpTrace<T>* trace = nullptr) const {
    if (x.rows() != input_dim()) throw InvalidArgument("Mlp::forward: input dimension mismatch");
    if (trace) {
      trace->inputs.clear();
      trace->pre.clear();
    }
    Mat<T> h = x;
    for (const auto& layer : layers_) {
      Mat<T> a = layer.weight * h;
      a.colwise() += layer.bias;
      Mat<T> y = detail::activate(a, layer.activation);
      if (trace) {
        trace->inputs.push_back(std::move(h));
        trace->pre.push_back(std::move(a));
      }
      h = std::move(y);
    }
    if (trace) trace->output = h;
    return h;
  }

  /// Activation feeding the final layer, one column per sample.
  Mat<T> penultimate(const Mat<T>& x) const {
    MlpTrace<T> trace;
    forward(x, &trace);
    return trace.inputs.back();
  }

  /// Gradients for dLoss/dOutput = grad_out. Optionally returns dLoss/dInput.
  MlpGrad<T> backward(const MlpTrace<T>& trace, const Mat<T>& grad_out, Mat<T>* grad_in = nullptr) const {
    MlpGrad<T> g;
    g.weight.resize(layers_.size());
    g.bias.resize(layers_.size());
    Mat<T> delta = grad_out;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const auto& layer = layers_[l];
      const Mat<T>& y = l + 1 < layers_.size() ? trace.inputs[l + 1] : trace.output;
      delta = delta.cwiseProduct(detail::activation_grad(trace.pre[l], y, layer.activation));
      g.weight[l] = delta * trace.inputs[l].transpose();
      g.bias[l] = delta.rowwise().sum();
      if (l > 0 || grad_in) delta = layer.weight.transpose() * delta;
    }
    if (grad_in) *grad_in = std::move(delta);
    return g;
  }

  /// Weight then bias of each layer, weights column-major.
  std::vector<std::span<T>> parameters() {
    std::vector<std::span<T>> out;
    for (auto& l : layers_) {
      out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
      out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  template <typename U>
  Mlp<U> cast() const {
    std::vector<DenseLayer<U>> out;
    for (const auto& l : layers_)
      out.push_back({l.weight.template cast<U>(), l.bias.template cast<U>(), l.activation});
    return Mlp<U>(std::move(out));
  }

  nlohmann::json descriptor() const {
    nlohmann::json acts = nlohmann::json::array();
    for (const auto& l : layers_) acts.push_back(to_string(l.activation));
    return {{"widths", widths()}, {"activations", acts}};
  }

  /// Zero-initialised network matching a descriptor().
  static Mlp from_descriptor(const nlohmann::json& d) {
    const auto widths = d.at("widths").get<std::vector<int>>();
    const auto acts = d.at("activations").get<std::vector<std::string>>();
    if (widths.size() < 2 || acts.size() + 1 != widths.size())
      throw FormatError("network descriptor: widths/activations disagree");
    std::vector<DenseLayer<T>> layers;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l)
      layers.push_back({Mat<T>::Zero(widths[l + 1], widths[l]), Vec<T>::Zero(widths[l + 1]),
                        activation_from_string(acts[l])});
    return Mlp(std::move(layers));
  }

 private:
  std::vector<DenseLayer<T>> layers_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment optimizer over a fixed list of parameter blocks.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  void step(const std::vector<std::span<T>>& params, const std::vector<std::span<T>>& grads) {
    if (params.size() != grads.size()) throw InvalidArgument("Adam::step: block count mismatch");
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t b = 0; b < params.size(); ++b) {
      auto p = params[b];
      auto g = grads[b];
      if (p.size() != g.size() || p.size() != m_[b].size()) throw InvalidArgument("Adam::step: block size mismatch");
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        m_[b][i] = cfg_.beta1 * m_[b][i] + (1.0 - cfg_.beta1) * gi;
        v_[b][i] = cfg_.beta2 * v_[b][i] + (1.0 - cfg_.beta2) * gi * gi;
        const double update = cfg_.learning_rate * (m_[b][i] / c1) / (std::sqrt(v_[b][i] / c2) + cfg_.epsilon);
        p[i] = static_cast<T>(static_cast<double>(p[i]) - update);
      }
    }
  }

 private:
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

/// Mean over the batch of -sum_c target_c * log softmax(logits)_c.
/// Columns are samples. Writes dLoss/dLogits into `grad` when given.
template <typename T>
double soft_cross_entropy(const Mat<T>& logits, const Mat<T>& targets, Mat<T>* grad) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols())
    throw InvalidArgument("soft_cross_entropy: shape mismatch");
  const auto batch = logits.cols();
  double loss = 0.0;
  if (grad) grad->resize(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < batch; ++j) {
    const double max = static_cast<double>(logits.col(j).maxCoeff());
    double sum = 0.0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) sum += std::exp(static_cast<double>(logits(i, j)) - max);
    const double log_z = max + std::log(sum);
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      const double log_p = static_cast<double>(logits(i, j)) - log_z;
      loss -= static_cast<double>(targets(i, j)) * log_p;
      if (grad) (*grad)(i, j) = static_cast<T>((std::exp(log_p) - static_cast<double>(targets(i, j))) / batch);
    }
  }
  return loss / static_cast<double>(batch);
}

/// Mean over all elements of (pred - target)^2.
template <typename T>
double mean_squared_error(const Mat<T>& pred, const Mat<T>& target, Mat<T>* grad) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw InvalidArgument("mean_squared_error: shape mismatch");
  const double n = static_cast<double>(pred.size());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred(i)) - static_cast<double>(target(i));
    loss += d * d;
  }
  if (grad) *grad = (pred - target) * static_cast<T>(2.0 / n);
  return loss / n;
}

}  // namespace dgd
