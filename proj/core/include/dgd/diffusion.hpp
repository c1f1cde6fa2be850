#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

#include "dgd/checkpoint.hpp"
#include "dgd/detector.hpp"
#include "dgd/mlp.hpp"

namespace dgd {

/// Linear beta schedule. Timesteps are 1-based: beta(t), alpha_bar(t) for t in [1, T].
struct DiffusionSchedule {
  int timesteps = 0;
  double beta_start = 0.0;
  double beta_end = 0.0;
  std::vector<double> betas;
  std::vector<double> alpha_bars;

  double beta(int t) const { return betas.at(static_cast<std::size_t>(t - 1)); }
  double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bars.at(static_cast<std::size_t>(t - 1)); }
  /// beta_t (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t)
  double posterior_variance(int t) const;
};

DiffusionSchedule build_schedule(int timesteps, double beta_start, double beta_end);

/// z_t = sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) eps.
std::vector<float> forward_noise(std::span<const float> z0, int t, std::span<const float> eps,
                                 const DiffusionSchedule& sched);

/// (1 - w) eps_null + w eps_cond, i.e. eps_null + w (eps_cond - eps_null),
/// written so w = 0 and w = 1 reproduce the two inputs exactly.
template <typename T>
Mat<T> guided_noise(const Mat<T>& eps_null, const Mat<T>& eps_cond, double w) {
  return eps_null * static_cast<T>(1.0 - w) + eps_cond * static_cast<T>(w);
}

/// Fixed sinusoidal embedding of integer timesteps, one column per entry.
template <typename T>
Mat<T> timestep_embedding(std::span<const int> timesteps, int dim) {
  Mat<T> out(dim, static_cast<Eigen::Index>(timesteps.size()));
  const int half = dim / 2;
  for (std::size_t j = 0; j < timesteps.size(); ++j) {
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * i / std::max(1, half));
      const double a = timesteps[j] * freq;
      out(i, static_cast<Eigen::Index>(j)) = static_cast<T>(std::sin(a));
      out(half + i, static_cast<Eigen::Index>(j)) = static_cast<T>(std::cos(a));
    }
    if (dim % 2 == 1) out(dim - 1, static_cast<Eigen::Index>(j)) = T(0);
  }
  return out;
}

/// Noise-prediction network: MLP over [z_t ; time embedding ; label embedding].
/// The label table has num_classes + 1 columns; the last is the null token.
template <typename T>
struct DenoiserNet {
  Mlp<T> mlp;
  Mat<T> label_table;  ///< label_dim x (num_classes + 1)
  int latent_dim = 0;
  int time_dim = 0;
  int num_classes = 0;

  int null_label() const { return num_classes; }
  int label_dim() const { return static_cast<int>(label_table.rows()); }

  Mat<T> assemble(const Mat<T>& z_t, std::span<const int> t, std::span<const int> labels) const {
    const auto b = z_t.cols();
    Mat<T> x(latent_dim + time_dim + label_dim(), b);
    x.topRows(latent_dim) = z_t;
    x.middleRows(latent_dim, time_dim) = timestep_embedding<T>(t, time_dim);
    for (Eigen::Index j = 0; j < b; ++j) x.col(j).bottomRows(label_dim()) = label_table.col(labels[j]);
    return x;
  }

  Mat<T> predict(const Mat<T>& z_t, std::span<const int> t, std::span<const int> labels) const {
    return mlp.forward(assemble(z_t, t, labels));
  }

  template <typename U>
  DenoiserNet<U> cast() const {
    return {mlp.template cast<U>(), label_table.template cast<U>(), latent_dim, time_dim, num_classes};
  }
};

template <typename T>
struct DenoiserGrad {
  MlpGrad<T> mlp;
  Mat<T> label_table;

  std::vector<std::span<T>> spans() {
    auto out = mlp.spans();
    out.emplace_back(label_table.data(), static_cast<std::size_t>(label_table.size()));
    return out;
  }
};

/// Mean squared error between predicted and true noise for a batch, with
/// gradients for the MLP and the label table.
template <typename T>
double denoiser_loss(const DenoiserNet<T>& net, const Mat<T>& z_t, std::span<const int> t,
                     std::span<const int> labels, const Mat<T>& eps, DenoiserGrad<T>* grad) {
  MlpTrace<T> trace;
  const Mat<T> pred = net.mlp.forward(net.assemble(z_t, t, labels), &trace);
  Mat<T> dpred;
  const double loss = mean_squared_error(pred, eps, grad ? &dpred : nullptr);
  if (grad) {
    Mat<T> dx;
    grad->mlp = net.mlp.backward(trace, dpred, &dx);
    grad->label_table = Mat<T>::Zero(net.label_table.rows(), net.label_table.cols());
    const auto off = net.latent_dim + net.time_dim;
    for (Eigen::Index j = 0; j < dx.cols(); ++j)
      grad->label_table.col(labels[j]) += dx.col(j).segment(off, net.label_dim());
  }
  return loss;
}

struct DenoiserConfig {
  int timesteps = 200;
  double beta_start = 1e-4;
  double beta_end = 0.05;
  int time_embed_dim = 32;
  int label_embed_dim = 32;
  std::vector<int> hidden = {256, 256};
  double label_dropout = 0.1;
  /// Clamp the predicted clean latent to the training range at every reverse step.
  bool clip_denoised = true;
  TrainConfig train{.epochs = 200, .batch_size = 64, .learning_rate = 1e-3};

  void validate() const;
  DiffusionSchedule schedule() const { return build_schedule(timesteps, beta_start, beta_end); }
  nlohmann::json to_json() const;
  static DenoiserConfig from_json(const nlohmann::json& j, const std::string& section);
};

/// Trained conditional denoiser. Latents are standardised internally with a
/// global offset/scale fitted on the training latents.
class Denoiser {
 public:
  static constexpr const char* kArchitecture = "denoiser-v1";

  Denoiser(DenoiserNet<float> net, DiffusionSchedule sched, double latent_offset, double latent_scale,
           double clip_lo, double clip_hi, bool clip_denoised, bool unconditional, TrainingInfo info = {});

  int latent_dim() const { return net_.latent_dim; }
  int num_classes() const { return net_.num_classes; }
  int null_label() const { return net_.null_label(); }
  bool unconditional() const { return unconditional_; }
  const DiffusionSchedule& schedule() const { return sched_; }
  const DenoiserNet<float>& net() const { return net_; }
  const TrainingInfo& info() const { return info_; }
  double latent_offset() const { return offset_; }
  double latent_scale() const { return scale_; }

  /// Noise prediction on standardised latents (columns). Labels may be null_label().
  Mat<float> predict_noise(const Mat<float>& z_t, std::span<const int> timesteps, std::span<const int> labels) const;

  Mat<float> normalize(const Mat<float>& latents) const;
  Mat<float> denormalize(const Mat<float>& latents) const;
  float clip_lo() const { return static_cast<float>(clip_lo_); }
  float clip_hi() const { return static_cast<float>(clip_hi_); }
  bool clip_denoised() const { return clip_denoised_; }

  /// Test hook: called with every label-table column read during prediction.
  void set_embedding_observer(std::function<void(int)> observer) { observer_ = std::move(observer); }

  Checkpoint to_checkpoint() const;
  static Denoiser from_checkpoint(const Checkpoint& ckpt);

 private:
  DenoiserNet<float> net_;
  DiffusionSchedule sched_;
  double offset_, scale_, clip_lo_, clip_hi_;
  bool clip_denoised_, unconditional_;
  TrainingInfo info_;
  std::function<void(int)> observer_;
};

/// Latents are columns; labels in [0, num_classes).
Denoiser train_denoiser(const Mat<float>& latents, std::span<const int> labels, int num_classes,
                        const DenoiserConfig& cfg, SeededRng& rng);

/// Partial-noising img2img. t_start = floor(strength * T); t_start = 0 returns
/// the prototype unchanged. Otherwise the prototype is noised to t_start and
/// the ancestral reverse process runs down to t = 1 with the guided estimate.
std::vector<float> sample_img2img(const Denoiser& den, const DiffusionSchedule& sched,
                                  std::span<const float> prototype, int label, double strength,
                                  double guidance_scale, SeededRng& rng);

/// Batched form: column j uses prototypes.col(j), labels[j] and rngs[j], and
/// draws exactly the same noise as the single-sample call with that rng.
Mat<float> sample_img2img_batch(const Denoiser& den, const DiffusionSchedule& sched, const Mat<float>& prototypes,
                                std::span<const int> labels, double strength, double guidance_scale,
                                std::span<SeededRng> rngs);

int start_timestep(double strength, int timesteps);

}  // namespace dgd
