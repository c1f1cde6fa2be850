#include "dgd/autoencoder.hpp"

#include <numeric>

namespace dgd {

void AutoencoderConfig::validate() const {
  if (!identity) {
    if (latent_dim <= 0 || hidden <= 0) throw InvalidArgument("autoencoder config: widths must be positive");
  }
  train.validate();
}

nlohmann::json AutoencoderConfig::to_json() const {
  return {{"identity", identity}, {"latent_dim", latent_dim}, {"hidden", hidden}, {"train", train.to_json()}};
}

AutoencoderConfig AutoencoderConfig::from_json(const nlohmann::json& j, const std::string& section) {
  AutoencoderConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "identity") c.identity = value.get<bool>();
    else if (key == "latent_dim") c.latent_dim = value.get<int>();
    else if (key == "hidden") c.hidden = value.get<int>();
    else if (key == "train") c.train = TrainConfig::from_json(value, section + ".train");
    else throw InvalidArgument("unknown key '" + section + "." + key + "'");
  }
  return c;
}

Autoencoder Autoencoder::identity(Shape image_shape) {
  Autoencoder ae;
  ae.shape_ = std::move(image_shape);
  return ae;
}

Autoencoder::Autoencoder(Shape image_shape, Mlp<float> encoder, Mlp<float> decoder, TrainingInfo info)
    : shape_(std::move(image_shape)), encoder_(std::move(encoder)), decoder_(std::move(decoder)),
      info_(std::move(info)) {
  const int pixels = static_cast<int>(shape_size(shape_));
  if (encoder_->input_dim() != pixels || decoder_->output_dim() != pixels ||
      encoder_->output_dim() != decoder_->input_dim())
    throw InvalidArgument("Autoencoder: encoder/decoder dimensions do not match the image shape");
}

std::size_t Autoencoder::latent_dim() const {
  return is_identity() ? shape_size(shape_) : static_cast<std::size_t>(encoder_->output_dim());
}

std::vector<float> Autoencoder::encode(const Tensor& image) const {
  const Mat<float> z = encode_batch(std::span<const Tensor>(&image, 1));
  return {z.data(), z.data() + z.size()};
}

Tensor Autoencoder::decode(std::span<const float> latent) const {
  if (latent.size() != latent_dim()) throw InvalidArgument("Autoencoder::decode: latent dimension mismatch");
  Mat<float> z(static_cast<Eigen::Index>(latent.size()), 1);
  std::copy(latent.begin(), latent.end(), z.data());
  return std::move(decode_batch(z).front());
}

Mat<float> Autoencoder::encode_batch(std::span<const Tensor> images) const {
  Mat<float> x = images_to_matrix(images, shape_);
  if (is_identity()) return x;
  return encoder_->forward(x);
}

std::vector<Tensor> Autoencoder::decode_batch(const Mat<float>& latents) const {
  if (latents.rows() != static_cast<Eigen::Index>(latent_dim()))
    throw InvalidArgument("Autoencoder::decode: latent dimension mismatch");
  const Mat<float> x = is_identity() ? latents : decoder_->forward(latents);
  std::vector<Tensor> out;
  out.reserve(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    out.emplace_back(shape_, std::vector<float>(x.col(j).data(), x.col(j).data() + x.rows()));
  return out;
}

Checkpoint Autoencoder::to_checkpoint() const {
  Checkpoint c;
  c.descriptor = {{"architecture", kArchitecture}, {"image_shape", shape_}, {"identity", is_identity()}};
  if (!is_identity()) {
    c.descriptor["encoder"] = encoder_->descriptor();
    c.descriptor["decoder"] = decoder_->descriptor();
    c.descriptor["training"] = {{"epochs", info_.epochs}, {"seed", info_.seed}, {"epoch_loss", info_.epoch_loss}};
    auto enc = *encoder_;
    auto dec = *decoder_;
    append_parameters(enc, c.parameters);
    append_parameters(dec, c.parameters);
  }
  return c;
}

Autoencoder Autoencoder::from_checkpoint(const Checkpoint& ckpt) {
  require_architecture(ckpt, kArchitecture);
  try {
    const auto& d = ckpt.descriptor;
    auto shape = d.at("image_shape").get<Shape>();
    if (d.at("identity").get<bool>()) {
      if (!ckpt.parameters.empty()) throw FormatError("identity autoencoder carries parameters");
      return identity(std::move(shape));
    }
    auto enc = Mlp<float>::from_descriptor(d.at("encoder"));
    auto dec = Mlp<float>::from_descriptor(d.at("decoder"));
    std::size_t offset = 0;
    load_parameters(enc, ckpt.parameters, &offset);
    load_parameters(dec, ckpt.parameters, &offset);
    if (offset != ckpt.parameters.size()) throw FormatError("field 'parameters' is longer than the network");
    TrainingInfo info;
    const auto& t = d.at("training");
    info.epochs = t.at("epochs").get<int>();
    info.seed = t.at("seed").get<std::uint64_t>();
    info.epoch_loss = t.at("epoch_loss").get<std::vector<double>>();
    return Autoencoder(std::move(shape), std::move(enc), std::move(dec), std::move(info));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("autoencoder descriptor: ") + e.what());
  }
}

Autoencoder train_autoencoder(const LabeledDataset& train, const AutoencoderConfig& cfg, SeededRng& rng) {
  cfg.validate();
  train.validate();
  if (train.empty()) throw InvalidArgument("train_autoencoder: dataset is empty");
  if (cfg.identity) return Autoencoder::identity(train.image_shape);

  const int pixels = static_cast<int>(shape_size(train.image_shape));
  SeededRng init_rng = rng.fork({0xae});
  Mlp<float> enc({pixels, cfg.hidden, cfg.latent_dim}, Activation::relu, Activation::identity, init_rng);
  Mlp<float> dec({cfg.latent_dim, cfg.hidden, pixels}, Activation::relu, Activation::sigmoid, init_rng);
  Adam<float> enc_opt(cfg.train.adam());
  Adam<float> dec_opt(cfg.train.adam());

  const std::size_t n = train.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  TrainingInfo info{cfg.train.epochs, rng.seed(), {}};
  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.train.batch_size) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.train.batch_size));
      Mat<float> x(pixels, static_cast<Eigen::Index>(stop - start));
      for (std::size_t k = start; k < stop; ++k) {
        const auto& img = train.images[order[k]];
        std::copy(img.data().begin(), img.data().end(), x.col(static_cast<Eigen::Index>(k - start)).data());
      }
      MlpGrad<float> ge, gd;
      const double loss = autoencoder_loss(enc, dec, x, &ge, &gd);
      if (!std::isfinite(loss)) throw NumericError("train_autoencoder: loss diverged");
      enc_opt.step(enc.parameters(), ge.spans());
      dec_opt.step(dec.parameters(), gd.spans());
      epoch_loss += loss * static_cast<double>(stop - start);
    }
    info.epoch_loss.push_back(epoch_loss / static_cast<double>(n));
  }
  return Autoencoder(train.image_shape, std::move(enc), std::move(dec), std::move(info));
}

double reconstruction_error(const Autoencoder& ae, const LabeledDataset& ds) {
  if (ds.empty()) throw InvalidArgument("reconstruction_error: empty dataset");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t start = 0; start < ds.size(); start += 256) {
    const std::size_t stop = std::min(ds.size(), start + 256);
    auto batch = std::span<const Tensor>(ds.images).subspan(start, stop - start);
    const auto recon = ae.decode_batch(ae.encode_batch(batch));
    for (std::size_t k = 0; k < recon.size(); ++k)
      for (std::size_t i = 0; i < recon[k].size(); ++i) {
        const double d = static_cast<double>(recon[k][i]) - batch[k][i];
        total += d * d;
        ++count;
      }
  }
  return total / static_cast<double>(count);
}

}  // namespace dgd
