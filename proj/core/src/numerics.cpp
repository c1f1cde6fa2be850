#include "dgd/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>

#include "dgd/rng.hpp"

namespace dgd {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_), 0.0f) {
  for (auto d : shape_)
    if (d == 0) throw InvalidArgument("Tensor: shape dimensions must be positive");
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto d : shape_)
    if (d == 0) throw InvalidArgument("Tensor: shape dimensions must be positive");
  if (data_.size() != shape_size(shape_))
    throw InvalidArgument("Tensor: data length " + std::to_string(data_.size()) +
                          " does not match shape product " + std::to_string(shape_size(shape_)));
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) throw InvalidArgument("Tensor::reshaped: element count changes");
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float x) { return std::isfinite(x); });
}

namespace {

template <typename T>
std::vector<double> softmax_impl(std::span<const T> logits) {
  if (logits.empty()) throw InvalidArgument("softmax: empty input");
  double max = -std::numeric_limits<double>::infinity();
  for (T x : logits) {
    if (!std::isfinite(static_cast<double>(x))) throw InvalidArgument("softmax: non-finite logit");
    max = std::max(max, static_cast<double>(x));
  }
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(static_cast<double>(logits[i]) - max);
    sum += out[i];
  }
  for (double& p : out) p /= sum;
  return out;
}

}  // namespace

std::vector<double> softmax(std::span<const double> logits) { return softmax_impl(logits); }
std::vector<double> softmax(std::span<const float> logits) { return softmax_impl(logits); }

double cosine_similarity(std::span<const float> u, std::span<const float> v) {
  if (u.size() != v.size())
    throw InvalidArgument("cosine_similarity: length mismatch (" + std::to_string(u.size()) + " vs " +
                          std::to_string(v.size()) + ")");
  if (u.empty()) throw InvalidArgument("cosine_similarity: empty vectors");
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = u[i], b = v[i];
    dot += a * b;
    uu += a * a;
    vv += b * b;
  }
  if (uu == 0.0 || vv == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

Tensor gaussian(SeededRng& rng, const Shape& shape) {
  Tensor t(shape);
  for (auto& x : t.data()) x = static_cast<float>(rng.normal());
  return t;
}

void require_finite(std::span<const float> values, const char* what) {
  for (float x : values)
    if (!std::isfinite(x)) throw NumericError(std::string(what) + ": non-finite value");
}

}  // namespace dgd
