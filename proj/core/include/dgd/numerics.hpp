#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dgd/error.hpp"

namespace dgd {

class SeededRng;

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);

/// Dense row-major float32 array.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<float> data);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  const std::vector<float>& values() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  Tensor reshaped(Shape shape) const;
  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

/// Numerically stable softmax; accumulates in double.
std::vector<double> softmax(std::span<const double> logits);
std::vector<double> softmax(std::span<const float> logits);

/// Cosine similarity with 64-bit accumulation. A zero-norm argument yields 0.
double cosine_similarity(std::span<const float> u, std::span<const float> v);

/// I.i.d. standard normal draws.
Tensor gaussian(SeededRng& rng, const Shape& shape);

/// Throws NumericError naming `what` if any element is NaN or infinite.
void require_finite(std::span<const float> values, const char* what);

}  // namespace dgd
