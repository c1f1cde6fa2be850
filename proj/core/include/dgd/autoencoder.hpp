#pragma once

#include <optional>
#include <vector>

#include "dgd/checkpoint.hpp"
#include "dgd/data.hpp"
#include "dgd/detector.hpp"
#include "dgd/mlp.hpp"

namespace dgd {

struct AutoencoderConfig {
  /// When set, encode = flatten and decode = reshape; otherwise a learned
  /// latent_dim-dimensional MLP autoencoder.
  bool identity = false;
  int latent_dim = 32;
  int hidden = 128;
  TrainConfig train{.epochs = 60, .batch_size = 64, .learning_rate = 1e-3};

  void validate() const;
  nlohmann::json to_json() const;
  static AutoencoderConfig from_json(const nlohmann::json& j, const std::string& section);
};

/// Image <-> latent maps. The MLP variant uses ReLU hidden layers, a linear
/// latent and a sigmoid output so reconstructions stay in [0, 1].
class Autoencoder {
 public:
  static constexpr const char* kArchitecture = "autoencoder-v1";

  static Autoencoder identity(Shape image_shape);
  Autoencoder(Shape image_shape, Mlp<float> encoder, Mlp<float> decoder, TrainingInfo info = {});

  bool is_identity() const { return !encoder_.has_value(); }
  const Shape& image_shape() const { return shape_; }
  std::size_t latent_dim() const;

  std::vector<float> encode(const Tensor& image) const;
  Tensor decode(std::span<const float> latent) const;
  /// Batched forms; latents are columns.
  Mat<float> encode_batch(std::span<const Tensor> images) const;
  std::vector<Tensor> decode_batch(const Mat<float>& latents) const;

  const Mlp<float>& encoder() const { return *encoder_; }
  const Mlp<float>& decoder() const { return *decoder_; }
  const TrainingInfo& info() const { return info_; }

  Checkpoint to_checkpoint() const;
  static Autoencoder from_checkpoint(const Checkpoint& ckpt);

 private:
  Autoencoder() = default;
  Shape shape_;
  std::optional<Mlp<float>> encoder_;
  std::optional<Mlp<float>> decoder_;
  TrainingInfo info_;
};

/// Reconstruction loss and gradients for a batch of flattened images.
template <typename T>
double autoencoder_loss(const Mlp<T>& encoder, const Mlp<T>& decoder, const Mat<T>& x, MlpGrad<T>* encoder_grad,
                        MlpGrad<T>* decoder_grad) {
  MlpTrace<T> enc_trace, dec_trace;
  const Mat<T> z = encoder.forward(x, &enc_trace);
  const Mat<T> recon = decoder.forward(z, &dec_trace);
  Mat<T> dout;
  const double loss = mean_squared_error(recon, x, &dout);
  if (encoder_grad || decoder_grad) {
    Mat<T> dz;
    auto gd = decoder.backward(dec_trace, dout, &dz);
    if (decoder_grad) *decoder_grad = std::move(gd);
    if (encoder_grad) *encoder_grad = encoder.backward(enc_trace, dz);
  }
  return loss;
}

/// Identity mode returns immediately; otherwise minimises mean squared
/// reconstruction error with Adam.
Autoencoder train_autoencoder(const LabeledDataset& train, const AutoencoderConfig& cfg, SeededRng& rng);

/// Mean per-pixel squared reconstruction error over `ds`.
double reconstruction_error(const Autoencoder& ae, const LabeledDataset& ds);

}  // namespace dgd
