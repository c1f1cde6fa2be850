#include "dgd/cutmix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dgd/rng.hpp"

namespace dgd {
namespace {

void check_image(const Tensor& t, const char* what) {
  if (t.rank() != 3) throw InvalidArgument(std::string("cutmix: ") + what + " must be (C, H, W)");
}

std::size_t clip_span(long lo, long hi, long limit, long* out_lo) {
  *out_lo = std::clamp(lo, 0L, limit);
  return static_cast<std::size_t>(std::clamp(hi, 0L, limit));
}

}  // namespace

double sample_mix_ratio(double alpha, SeededRng& rng) {
  if (!(alpha > 0.0)) throw InvalidArgument("sample_mix_ratio: alpha must be positive");
  return rng.beta(alpha, alpha);
}

CutBox cutmix_box(std::size_t height, std::size_t width, double lambda, std::size_t cx, std::size_t cy) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidArgument("cutmix: lambda must lie in [0, 1]");
  const double cut = std::sqrt(1.0 - lambda);
  const long cut_w = static_cast<long>(std::floor(static_cast<double>(width) * cut));
  const long cut_h = static_cast<long>(std::floor(static_cast<double>(height) * cut));
  const long x_lo = static_cast<long>(cx) - cut_w / 2;
  const long y_lo = static_cast<long>(cy) - cut_h / 2;
  CutBox box;
  long x0, y0;
  box.x1 = clip_span(x_lo, x_lo + cut_w, static_cast<long>(width), &x0);
  box.y1 = clip_span(y_lo, y_lo + cut_h, static_cast<long>(height), &y0);
  box.x0 = static_cast<std::size_t>(x0);
  box.y0 = static_cast<std::size_t>(y0);
  return box;
}

MixedSample cutmix_with_box(const Tensor& base, int base_label, const Tensor& patch, int patch_label,
                            int num_classes, const CutBox& box) {
  check_image(base, "base");
  check_image(patch, "patch");
  if (base.shape() != patch.shape()) throw InvalidArgument("cutmix: image shapes differ");
  if (base_label < 0 || base_label >= num_classes || patch_label < 0 || patch_label >= num_classes)
    throw InvalidArgument("cutmix: label out of range");
  const std::size_t channels = base.shape()[0], height = base.shape()[1], width = base.shape()[2];
  if (box.x1 > width || box.y1 > height || box.x0 > box.x1 || box.y0 > box.y1)
    throw InvalidArgument("cutmix: box outside image");

  MixedSample out;
  out.image = base;
  out.box = box;
  auto dst = out.image.data();
  auto src = patch.data();
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t y = box.y0; y < box.y1; ++y)
      for (std::size_t x = box.x0; x < box.x1; ++x) {
        const std::size_t i = (c * height + y) * width + x;
        dst[i] = src[i];
      }

  const std::size_t total = height * width;
  out.mix_ratio = static_cast<double>(total - box.area()) / static_cast<double>(total);
  out.soft_label.assign(num_classes, 0.0);
  out.soft_label[base_label] += out.mix_ratio;
  out.soft_label[patch_label] += 1.0 - out.mix_ratio;
  return out;
}

MixedSample cutmix(const Tensor& base, int base_label, const Tensor& patch, int patch_label, int num_classes,
                   double lambda, SeededRng& rng) {
  check_image(base, "base");
  const std::size_t height = base.shape()[1], width = base.shape()[2];
  const std::size_t cx = rng.below(width);
  const std::size_t cy = rng.below(height);
  return cutmix_with_box(base, base_label, patch, patch_label, num_classes,
                         cutmix_box(height, width, lambda, cx, cy));
}

}  // namespace dgd
