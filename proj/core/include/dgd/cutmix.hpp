#pragma once

#include <cstddef>
#include <vector>

#include "dgd/numerics.hpp"

namespace dgd {

class SeededRng;

/// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct CutBox {
  std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  std::size_t area() const { return (x1 - x0) * (y1 - y0); }
  bool contains(std::size_t x, std::size_t y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

struct MixedSample {
  Tensor image;
  std::vector<double> soft_label;
  /// Fraction of pixels kept from the base image, recomputed after clipping.
  double mix_ratio = 1.0;
  CutBox box;
};

/// lambda ~ Beta(alpha, alpha).
double sample_mix_ratio(double alpha, SeededRng& rng);

/// Box of side (W * sqrt(1 - lambda), H * sqrt(1 - lambda)) centred at
/// (cx, cy), clipped to the image.
CutBox cutmix_box(std::size_t height, std::size_t width, double lambda, std::size_t cx, std::size_t cy);

/// Pastes `box` of `patch` into `base` across all channels. mix_ratio is
/// (H*W - area) / (H*W); the soft label puts that weight on base_label and
/// the rest on patch_label.
MixedSample cutmix_with_box(const Tensor& base, int base_label, const Tensor& patch, int patch_label,
                            int num_classes, const CutBox& box);

/// CutMix with a uniformly drawn box centre.
MixedSample cutmix(const Tensor& base, int base_label, const Tensor& patch, int patch_label, int num_classes,
                   double lambda, SeededRng& rng);

}  // namespace dgd
