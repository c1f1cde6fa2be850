#include "dgd/diffusion.hpp"

#include <algorithm>
#include <numeric>

namespace dgd {

double DiffusionSchedule::posterior_variance(int t) const {
  return beta(t) * (1.0 - alpha_bar(t - 1)) / (1.0 - alpha_bar(t));
}

DiffusionSchedule build_schedule(int timesteps, double beta_start, double beta_end) {
  if (timesteps < 1) throw InvalidArgument("build_schedule: need at least one timestep");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
    throw InvalidArgument("build_schedule: need 0 < beta_start <= beta_end < 1");
  DiffusionSchedule s;
  s.timesteps = timesteps;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  double prod = 1.0;
  for (int i = 0; i < timesteps; ++i) {
    const double b = timesteps == 1 ? beta_start
                                    : beta_start + (beta_end - beta_start) * i / static_cast<double>(timesteps - 1);
    prod *= 1.0 - b;
    s.betas.push_back(b);
    s.alpha_bars.push_back(prod);
  }
  return s;
}

std::vector<float> forward_noise(std::span<const float> z0, int t, std::span<const float> eps,
                                 const DiffusionSchedule& sched) {
  if (t < 1 || t > sched.timesteps) throw InvalidArgument("forward_noise: timestep out of range");
  if (z0.size() != eps.size()) throw InvalidArgument("forward_noise: latent and noise sizes differ");
  const double a = std::sqrt(sched.alpha_bar(t));
  const double s = std::sqrt(1.0 - sched.alpha_bar(t));
  std::vector<float> out(z0.size());
  for (std::size_t i = 0; i < z0.size(); ++i) out[i] = static_cast<float>(a * z0[i] + s * eps[i]);
  return out;
}

int start_timestep(double strength, int timesteps) {
  return static_cast<int>(std::floor(strength * timesteps));
}

void DenoiserConfig::validate() const {
  build_schedule(timesteps, beta_start, beta_end);
  if (time_embed_dim < 2 || label_embed_dim < 1) throw InvalidArgument("denoiser config: embedding dims too small");
  if (hidden.empty()) throw InvalidArgument("denoiser config: need at least one hidden layer");
  for (int h : hidden)
    if (h <= 0) throw InvalidArgument("denoiser config: hidden widths must be positive");
  if (!(label_dropout >= 0.0 && label_dropout <= 1.0))
    throw InvalidArgument("denoiser config: label_dropout must lie in [0, 1]");
  train.validate();
}

nlohmann::json DenoiserConfig::to_json() const {
  return {{"timesteps", timesteps},
          {"beta_start", beta_start},
          {"beta_end", beta_end},
          {"time_embed_dim", time_embed_dim},
          {"label_embed_dim", label_embed_dim},
          {"hidden", hidden},
          {"label_dropout", label_dropout},
          {"clip_denoised", clip_denoised},
          {"train", train.to_json()}};
}

DenoiserConfig DenoiserConfig::from_json(const nlohmann::json& j, const std::string& section) {
  DenoiserConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "timesteps") c.timesteps = value.get<int>();
    else if (key == "beta_start") c.beta_start = value.get<double>();
    else if (key == "beta_end") c.beta_end = value.get<double>();
    else if (key == "time_embed_dim") c.time_embed_dim = value.get<int>();
    else if (key == "label_embed_dim") c.label_embed_dim = value.get<int>();
    else if (key == "hidden") c.hidden = value.get<std::vector<int>>();
    else if (key == "label_dropout") c.label_dropout = value.get<double>();
    else if (key == "clip_denoised") c.clip_denoised = value.get<bool>();
    else if (key == "train") c.train = TrainConfig::from_json(value, section + ".train");
    else throw InvalidArgument("unknown key '" + section + "." + key + "'");
  }
  return c;
}

Denoiser::Denoiser(DenoiserNet<float> net, DiffusionSchedule sched, double latent_offset, double latent_scale,
                   double clip_lo, double clip_hi, bool clip_denoised, bool unconditional, TrainingInfo info)
    : net_(std::move(net)), sched_(std::move(sched)), offset_(latent_offset), scale_(latent_scale),
      clip_lo_(clip_lo), clip_hi_(clip_hi), clip_denoised_(clip_denoised), unconditional_(unconditional),
      info_(std::move(info)) {
  if (net_.mlp.input_dim() != net_.latent_dim + net_.time_dim + net_.label_dim() ||
      net_.mlp.output_dim() != net_.latent_dim || net_.label_table.cols() != net_.num_classes + 1)
    throw InvalidArgument("Denoiser: network dimensions are inconsistent");
  if (!(scale_ > 0.0) || !(clip_lo_ <= clip_hi_)) throw InvalidArgument("Denoiser: invalid latent normalisation");
}

Mat<float> Denoiser::predict_noise(const Mat<float>& z_t, std::span<const int> timesteps,
                                   std::span<const int> labels) const {
  if (z_t.rows() != net_.latent_dim) throw InvalidArgument("Denoiser: latent dimension mismatch");
  if (timesteps.size() != static_cast<std::size_t>(z_t.cols()) || labels.size() != timesteps.size())
    throw InvalidArgument("Denoiser: batch size mismatch");
  std::vector<int> effective(labels.begin(), labels.end());
  for (auto& l : effective) {
    if (l < 0 || l > net_.null_label()) throw InvalidArgument("Denoiser: unknown label " + std::to_string(l));
    if (unconditional_) l = net_.null_label();
    if (observer_) observer_(l);
  }
  return net_.predict(z_t, timesteps, effective);
}

Mat<float> Denoiser::normalize(const Mat<float>& latents) const {
  return ((latents.array() - static_cast<float>(offset_)) * static_cast<float>(scale_)).matrix();
}

Mat<float> Denoiser::denormalize(const Mat<float>& latents) const {
  return (latents.array() / static_cast<float>(scale_) + static_cast<float>(offset_)).matrix();
}

Checkpoint Denoiser::to_checkpoint() const {
  Checkpoint c;
  c.descriptor = {
      {"architecture", kArchitecture},
      {"network", net_.mlp.descriptor()},
      {"latent_dim", net_.latent_dim},
      {"time_embed_dim", net_.time_dim},
      {"label_embed_dim", net_.label_dim()},
      {"num_classes", net_.num_classes},
      {"schedule", {{"timesteps", sched_.timesteps}, {"beta_start", sched_.beta_start}, {"beta_end", sched_.beta_end}}},
      {"normalization", {{"offset", offset_}, {"scale", scale_}, {"clip_lo", clip_lo_}, {"clip_hi", clip_hi_}}},
      {"clip_denoised", clip_denoised_},
      {"unconditional", unconditional_},
      {"training", {{"epochs", info_.epochs}, {"seed", info_.seed}, {"epoch_loss", info_.epoch_loss}}}};
  auto mlp = net_.mlp;
  append_parameters(mlp, c.parameters);
  c.parameters.insert(c.parameters.end(), net_.label_table.data(), net_.label_table.data() + net_.label_table.size());
  return c;
}

Denoiser Denoiser::from_checkpoint(const Checkpoint& ckpt) {
  require_architecture(ckpt, kArchitecture);
  try {
    const auto& d = ckpt.descriptor;
    DenoiserNet<float> net;
    net.mlp = Mlp<float>::from_descriptor(d.at("network"));
    net.latent_dim = d.at("latent_dim").get<int>();
    net.time_dim = d.at("time_embed_dim").get<int>();
    net.num_classes = d.at("num_classes").get<int>();
    net.label_table = Mat<float>::Zero(d.at("label_embed_dim").get<int>(), net.num_classes + 1);
    std::size_t offset = 0;
    load_parameters(net.mlp, ckpt.parameters, &offset);
    if (offset + static_cast<std::size_t>(net.label_table.size()) != ckpt.parameters.size())
      throw FormatError("field 'parameters' does not match the denoiser size");
    std::copy(ckpt.parameters.begin() + static_cast<std::ptrdiff_t>(offset), ckpt.parameters.end(),
              net.label_table.data());
    const auto& s = d.at("schedule");
    auto sched = build_schedule(s.at("timesteps").get<int>(), s.at("beta_start").get<double>(),
                                s.at("beta_end").get<double>());
    const auto& n = d.at("normalization");
    TrainingInfo info;
    const auto& t = d.at("training");
    info.epochs = t.at("epochs").get<int>();
    info.seed = t.at("seed").get<std::uint64_t>();
    info.epoch_loss = t.at("epoch_loss").get<std::vector<double>>();
    return Denoiser(std::move(net), std::move(sched), n.at("offset").get<double>(), n.at("scale").get<double>(),
                    n.at("clip_lo").get<double>(), n.at("clip_hi").get<double>(), d.at("clip_denoised").get<bool>(),
                    d.at("unconditional").get<bool>(), std::move(info));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("denoiser descriptor: ") + e.what());
  }
}

Denoiser train_denoiser(const Mat<float>& latents, std::span<const int> labels, int num_classes,
                        const DenoiserConfig& cfg, SeededRng& rng) {
  cfg.validate();
  if (latents.cols() == 0) throw InvalidArgument("train_denoiser: no latents");
  if (labels.size() != static_cast<std::size_t>(latents.cols()))
    throw InvalidArgument("train_denoiser: labels and latents are not aligned");
  if (num_classes < 1) throw InvalidArgument("train_denoiser: num_classes must be positive");
  for (int l : labels)
    if (l < 0 || l >= num_classes) throw InvalidArgument("train_denoiser: label out of range");
  require_finite(std::span<const float>(latents.data(), static_cast<std::size_t>(latents.size())),
                 "train_denoiser: latents");

  const auto sched = cfg.schedule();
  double sum = 0.0, sq = 0.0;
  for (Eigen::Index i = 0; i < latents.size(); ++i) {
    sum += latents(i);
    sq += static_cast<double>(latents(i)) * latents(i);
  }
  const double count = static_cast<double>(latents.size());
  const double offset = sum / count;
  const double var = std::max(sq / count - offset * offset, 1e-12);
  const double scale = 1.0 / std::sqrt(var);
  const double clip_lo = (latents.minCoeff() - offset) * scale;
  const double clip_hi = (latents.maxCoeff() - offset) * scale;
  const Mat<float> z0_all = ((latents.array() - static_cast<float>(offset)) * static_cast<float>(scale)).matrix();

  const int d = static_cast<int>(latents.rows());
  SeededRng init_rng = rng.fork({0xd1f});
  DenoiserNet<float> net;
  net.latent_dim = d;
  net.time_dim = cfg.time_embed_dim;
  net.num_classes = num_classes;
  std::vector<int> widths{d + cfg.time_embed_dim + cfg.label_embed_dim};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(d);
  net.mlp = Mlp<float>(widths, Activation::silu, Activation::identity, init_rng);
  net.label_table.resize(cfg.label_embed_dim, num_classes + 1);
  for (Eigen::Index j = 0; j < net.label_table.cols(); ++j)
    for (Eigen::Index i = 0; i < net.label_table.rows(); ++i)
      net.label_table(i, j) = static_cast<float>(init_rng.normal());

  Adam<float> opt(cfg.train.adam());
  const std::size_t n = static_cast<std::size_t>(latents.cols());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  TrainingInfo info{cfg.train.epochs, rng.seed(), {}};
  const bool unconditional = cfg.label_dropout >= 1.0;

  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.train.batch_size) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.train.batch_size));
      const auto b = static_cast<Eigen::Index>(stop - start);
      Mat<float> zt(d, b), eps(d, b);
      std::vector<int> ts(b), ls(b);
      for (Eigen::Index j = 0; j < b; ++j) {
        const std::size_t idx = order[start + static_cast<std::size_t>(j)];
        const int t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(sched.timesteps)));
        const bool drop = unconditional || rng.uniform() < cfg.label_dropout;
        ts[j] = t;
        ls[j] = drop ? num_classes : labels[idx];
        const float a = static_cast<float>(std::sqrt(sched.alpha_bar(t)));
        const float s = static_cast<float>(std::sqrt(1.0 - sched.alpha_bar(t)));
        for (int i = 0; i < d; ++i) {
          const float e = static_cast<float>(rng.normal());
          eps(i, j) = e;
          zt(i, j) = a * z0_all(i, static_cast<Eigen::Index>(idx)) + s * e;
        }
      }
      DenoiserGrad<float> grad;
      const double loss = denoiser_loss(net, zt, ts, ls, eps, &grad);
      if (!std::isfinite(loss)) throw NumericError("train_denoiser: loss diverged");
      auto params = net.mlp.parameters();
      params.emplace_back(net.label_table.data(), static_cast<std::size_t>(net.label_table.size()));
      opt.step(params, grad.spans());
      epoch_loss += loss * static_cast<double>(b);
    }
    info.epoch_loss.push_back(epoch_loss / static_cast<double>(n));
  }
  return Denoiser(std::move(net), sched, offset, scale, clip_lo, clip_hi, cfg.clip_denoised, unconditional,
                  std::move(info));
}

Mat<float> sample_img2img_batch(const Denoiser& den, const DiffusionSchedule& sched, const Mat<float>& prototypes,
                                std::span<const int> labels, double strength, double guidance_scale,
                                std::span<SeededRng> rngs) {
  if (!(strength >= 0.0 && strength <= 1.0)) throw InvalidArgument("sample_img2img: strength must lie in [0, 1]");
  if (!(guidance_scale >= 0.0)) throw InvalidArgument("sample_img2img: guidance scale must be >= 0");
  if (prototypes.rows() != den.latent_dim()) throw InvalidArgument("sample_img2img: prototype dimension mismatch");
  const auto n = prototypes.cols();
  if (labels.size() != static_cast<std::size_t>(n) || rngs.size() != static_cast<std::size_t>(n))
    throw InvalidArgument("sample_img2img: batch size mismatch");
  for (int l : labels)
    if (l < 0 || l >= den.num_classes()) throw InvalidArgument("sample_img2img: unknown label " + std::to_string(l));
  if (sched.timesteps != den.schedule().timesteps) throw InvalidArgument("sample_img2img: schedule mismatch");

  const int t_start = start_timestep(strength, sched.timesteps);
  if (t_start == 0) return prototypes;

  const int d = den.latent_dim();
  Mat<float> x = den.normalize(prototypes);
  {
    const float a = static_cast<float>(std::sqrt(sched.alpha_bar(t_start)));
    const float s = static_cast<float>(std::sqrt(1.0 - sched.alpha_bar(t_start)));
    for (Eigen::Index j = 0; j < n; ++j)
      for (int i = 0; i < d; ++i) x(i, j) = a * x(i, j) + s * static_cast<float>(rngs[j].normal());
  }

  std::vector<int> both_labels(2 * n);
  for (Eigen::Index j = 0; j < n; ++j) {
    both_labels[j] = labels[j];
    both_labels[n + j] = den.null_label();
  }
  std::vector<int> ts(2 * n);
  Mat<float> both(d, 2 * n);
  for (int t = t_start; t >= 1; --t) {
    std::fill(ts.begin(), ts.end(), t);
    both.leftCols(n) = x;
    both.rightCols(n) = x;
    const Mat<float> eps_both = den.predict_noise(both, ts, both_labels);
    const Mat<float> eps = guided_noise<float>(eps_both.rightCols(n), eps_both.leftCols(n), guidance_scale);

    const double ab = sched.alpha_bar(t), ab_prev = sched.alpha_bar(t - 1), beta = sched.beta(t);
    Mat<float> mean;
    if (den.clip_denoised()) {
      Mat<float> x0 = ((x - eps * static_cast<float>(std::sqrt(1.0 - ab))) / static_cast<float>(std::sqrt(ab)));
      x0 = x0.cwiseMax(den.clip_lo()).cwiseMin(den.clip_hi());
      const auto c0 = static_cast<float>(std::sqrt(ab_prev) * beta / (1.0 - ab));
      const auto ct = static_cast<float>(std::sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab));
      mean = x0 * c0 + x * ct;
    } else {
      mean = (x - eps * static_cast<float>(beta / std::sqrt(1.0 - ab))) / static_cast<float>(std::sqrt(1.0 - beta));
    }
    if (t > 1) {
      const auto sigma = static_cast<float>(std::sqrt(sched.posterior_variance(t)));
      for (Eigen::Index j = 0; j < n; ++j)
        for (int i = 0; i < d; ++i) mean(i, j) += sigma * static_cast<float>(rngs[j].normal());
    }
    x = std::move(mean);
  }
  Mat<float> out = den.denormalize(x);
  require_finite(std::span<const float>(out.data(), static_cast<std::size_t>(out.size())), "sample_img2img");
  return out;
}

std::vector<float> sample_img2img(const Denoiser& den, const DiffusionSchedule& sched,
                                  std::span<const float> prototype, int label, double strength,
                                  double guidance_scale, SeededRng& rng) {
  if (prototype.size() != static_cast<std::size_t>(den.latent_dim()))
    throw InvalidArgument("sample_img2img: prototype dimension mismatch");
  Mat<float> p(den.latent_dim(), 1);
  std::copy(prototype.begin(), prototype.end(), p.data());
  const int labels[] = {label};
  const Mat<float> out = sample_img2img_batch(den, sched, p, labels, strength, guidance_scale,
                                              std::span<SeededRng>(&rng, 1));
  return {out.data(), out.data() + out.size()};
}

}  // namespace dgd
