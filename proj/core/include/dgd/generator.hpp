#pragma once

#include "dgd/autoencoder.hpp"
#include "dgd/diffusion.hpp"
#include "dgd/refine.hpp"

namespace dgd {

/// Prototype-conditioned img2img through the denoiser, decoded by the
/// autoencoder and clamped to the [0, 1] pixel range.
class DiffusionGenerator final : public CandidateGenerator {
 public:
  DiffusionGenerator(const Denoiser& denoiser, const Autoencoder& autoencoder, double strength,
                     double guidance_scale);

  GeneratedImage generate(const Prototype& proto, int label, SeededRng& rng) const override;
  std::vector<GeneratedImage> generate_batch(const Prototype& proto, int label,
                                             std::span<SeededRng> rngs) const override;

 private:
  const Denoiser& denoiser_;
  const Autoencoder& autoencoder_;
  double strength_;
  double guidance_;
};

}  // namespace dgd
