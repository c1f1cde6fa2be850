#include "dgd/generator.hpp"

namespace dgd {

DiffusionGenerator::DiffusionGenerator(const Denoiser& denoiser, const Autoencoder& autoencoder, double strength,
                                       double guidance_scale)
    : denoiser_(denoiser), autoencoder_(autoencoder), strength_(strength), guidance_(guidance_scale) {
  if (static_cast<std::size_t>(denoiser.latent_dim()) != autoencoder.latent_dim())
    throw InvalidArgument("DiffusionGenerator: denoiser and autoencoder latent sizes differ");
}

GeneratedImage DiffusionGenerator::generate(const Prototype& proto, int label, SeededRng& rng) const {
  return std::move(generate_batch(proto, label, std::span<SeededRng>(&rng, 1)).front());
}

std::vector<GeneratedImage> DiffusionGenerator::generate_batch(const Prototype& proto, int label,
                                                               std::span<SeededRng> rngs) const {
  const auto n = static_cast<Eigen::Index>(rngs.size());
  if (proto.latent.size() != static_cast<std::size_t>(denoiser_.latent_dim()))
    throw InvalidArgument("DiffusionGenerator: prototype dimension mismatch");
  Mat<float> protos(denoiser_.latent_dim(), n);
  for (Eigen::Index j = 0; j < n; ++j) std::copy(proto.latent.begin(), proto.latent.end(), protos.col(j).data());
  const std::vector<int> labels(static_cast<std::size_t>(n), label);
  const Mat<float> z = sample_img2img_batch(denoiser_, denoiser_.schedule(), protos, labels, strength_, guidance_, rngs);
  auto images = autoencoder_.decode_batch(z);
  std::vector<GeneratedImage> out(images.size());
  for (std::size_t j = 0; j < images.size(); ++j) {
    for (auto& px : images[j].data()) px = std::clamp(px, 0.0f, 1.0f);
    out[j].image = std::move(images[j]);
    const auto col = z.col(static_cast<Eigen::Index>(j));
    out[j].latent.assign(col.data(), col.data() + col.size());
  }
  return out;
}

}  // namespace dgd
