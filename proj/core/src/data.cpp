#include "dgd/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "dgd/hashing.hpp"
#include "dgd/rng.hpp"

namespace dgd {

std::vector<std::size_t> LabeledDataset::indices_of_class(int c) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == c) out.push_back(i);
  return out;
}

void LabeledDataset::add(Tensor image, int label) {
  images.push_back(std::move(image));
  labels.push_back(label);
}

void LabeledDataset::validate() const {
  if (num_classes <= 0) throw InvalidArgument("dataset: num_classes must be positive");
  if (images.size() != labels.size()) throw InvalidArgument("dataset: images and labels differ in length");
  if (!class_names.empty() && class_names.size() != static_cast<std::size_t>(num_classes))
    throw InvalidArgument("dataset: class_names length differs from num_classes");
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].shape() != image_shape)
      throw InvalidArgument("dataset: image " + std::to_string(i) + " has a different shape");
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw InvalidArgument("dataset: label " + std::to_string(i) + " out of range");
  }
}

std::vector<GratingPattern> default_patterns(int num_classes) {
  std::vector<GratingPattern> out;
  for (int c = 0; c < num_classes; ++c)
    out.push_back({180.0 * c / num_classes, c % 2 == 0 ? 2.0 : 3.0});
  return out;
}

std::vector<GratingPattern> ToyDataSpec::resolved_patterns() const {
  return patterns.empty() ? default_patterns(num_classes) : patterns;
}

Shape ToyDataSpec::image_shape() const {
  return {static_cast<std::size_t>(channels), static_cast<std::size_t>(height), static_cast<std::size_t>(width)};
}

void ToyDataSpec::validate() const {
  if (num_classes <= 0) throw InvalidArgument("toy spec: num_classes must be positive");
  if (train_per_class <= 0 || test_per_class <= 0)
    throw InvalidArgument("toy spec: images per class must be positive");
  if (channels <= 0 || height <= 0 || width <= 0) throw InvalidArgument("toy spec: image shape must be positive");
  if (noise_std < 0.0 || amplitude_jitter < 0.0 || amplitude_jitter >= 1.0)
    throw InvalidArgument("toy spec: noise_std must be >= 0 and amplitude_jitter in [0, 1)");
  const auto pats = resolved_patterns();
  if (pats.size() != static_cast<std::size_t>(num_classes))
    throw InvalidArgument("toy spec: need one pattern per class");
  std::set<std::pair<double, double>> seen;
  for (const auto& p : pats)
    if (!seen.insert({p.orientation_deg, p.frequency}).second)
      throw InvalidArgument("toy spec: two classes share an (orientation, frequency) pair");
}

nlohmann::json ToyDataSpec::to_json() const {
  nlohmann::json pats = nlohmann::json::array();
  for (const auto& p : patterns) pats.push_back({{"orientation_deg", p.orientation_deg}, {"frequency", p.frequency}});
  return {{"num_classes", num_classes},   {"train_per_class", train_per_class},
          {"test_per_class", test_per_class}, {"channels", channels},
          {"height", height},             {"width", width},
          {"patterns", pats},             {"amplitude_jitter", amplitude_jitter},
          {"noise_std", noise_std},       {"seed", seed}};
}

ToyDataSpec ToyDataSpec::from_json(const nlohmann::json& j) {
  ToyDataSpec s;
  for (const auto& [key, value] : j.items()) {
    if (key == "num_classes") s.num_classes = value.get<int>();
    else if (key == "train_per_class") s.train_per_class = value.get<int>();
    else if (key == "test_per_class") s.test_per_class = value.get<int>();
    else if (key == "channels") s.channels = value.get<int>();
    else if (key == "height") s.height = value.get<int>();
    else if (key == "width") s.width = value.get<int>();
    else if (key == "amplitude_jitter") s.amplitude_jitter = value.get<double>();
    else if (key == "noise_std") s.noise_std = value.get<double>();
    else if (key == "seed") s.seed = value.get<std::uint64_t>();
    else if (key == "patterns") {
      for (const auto& p : value) {
        GratingPattern g;
        for (const auto& [pk, pv] : p.items()) {
          if (pk == "orientation_deg") g.orientation_deg = pv.get<double>();
          else if (pk == "frequency") g.frequency = pv.get<double>();
          else throw InvalidArgument("unknown key 'data.patterns[]." + pk + "'");
        }
        s.patterns.push_back(g);
      }
    } else {
      throw InvalidArgument("unknown key 'data." + key + "'");
    }
  }
  return s;
}

std::string ToyDataSpec::fingerprint() const { return sha256_hex(to_json().dump()); }

Tensor render_grating(const ToyDataSpec& spec, const GratingPattern& pattern, double phase, double amplitude,
                      SeededRng& rng) {
  Tensor img(spec.image_shape());
  const double theta = pattern.orientation_deg * std::numbers::pi / 180.0;
  const double kx = 2.0 * std::numbers::pi * pattern.frequency * std::cos(theta) / spec.width;
  const double ky = 2.0 * std::numbers::pi * pattern.frequency * std::sin(theta) / spec.width;
  auto data = img.data();
  std::size_t i = 0;
  for (int c = 0; c < spec.channels; ++c)
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x) {
        double v = 0.5 + 0.4 * amplitude * std::sin(kx * x + ky * y + phase);
        if (spec.noise_std > 0.0) v += spec.noise_std * rng.normal();
        data[i++] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
  return img;
}

namespace {

LabeledDataset make_split(const ToyDataSpec& spec, int per_class, SeededRng rng) {
  LabeledDataset ds;
  ds.image_shape = spec.image_shape();
  ds.num_classes = spec.num_classes;
  const auto pats = spec.resolved_patterns();
  for (const auto& p : pats) {
    std::ostringstream name;
    name << "grating_" << p.orientation_deg << "deg_f" << p.frequency;
    ds.class_names.push_back(name.str());
  }
  for (int c = 0; c < spec.num_classes; ++c) {
    for (int i = 0; i < per_class; ++i) {
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double amplitude = 1.0 + spec.amplitude_jitter * rng.uniform(-1.0, 1.0);
      ds.add(render_grating(spec, pats[c], phase, amplitude, rng), c);
    }
  }
  ds.provenance = {{"generator", "toy-gratings"}, {"spec_hash", spec.fingerprint()}, {"seed", rng.seed()}};
  return ds;
}

}  // namespace

std::pair<LabeledDataset, LabeledDataset> synthesize_toy_dataset(const ToyDataSpec& spec, SeededRng& rng) {
  spec.validate();
  auto train = make_split(spec, spec.train_per_class, rng.fork({0}));
  auto test = make_split(spec, spec.test_per_class, rng.fork({1}));
  train.provenance["split"] = "train";
  test.provenance["split"] = "test";
  return {std::move(train), std::move(test)};
}

LabeledDataset random_class_subset(const LabeledDataset& ds, int per_class, SeededRng& rng) {
  LabeledDataset out;
  out.image_shape = ds.image_shape;
  out.num_classes = ds.num_classes;
  out.class_names = ds.class_names;
  for (int c = 0; c < ds.num_classes; ++c) {
    auto idx = ds.indices_of_class(c);
    if (idx.size() < static_cast<std::size_t>(per_class))
      throw InvalidArgument("random_class_subset: class " + std::to_string(c) + " has too few images");
    // Partial Fisher-Yates.
    for (int i = 0; i < per_class; ++i) {
      const auto j = i + rng.below(idx.size() - i);
      std::swap(idx[i], idx[j]);
      out.add(ds.images[idx[i]], c);
    }
  }
  out.provenance = {{"generator", "random-real-subset"}, {"per_class", per_class}, {"seed", rng.seed()}};
  return out;
}

}  // namespace dgd
