#include "dgd/refine.hpp"

#include <algorithm>
#include <numeric>

#include "dgd/rng.hpp"

namespace dgd {

std::string to_string(SampleStatus s) {
  switch (s) {
    case SampleStatus::normal: return "normal";
    case SampleStatus::refined: return "refined";
    case SampleStatus::fallback: return "fallback";
  }
  return "normal";
}

std::string to_string(SelectionMode m) {
  switch (m) {
    case SelectionMode::base: return "base";
    case SelectionMode::top1: return "top1";
    case SelectionMode::sim: return "sim";
    case SelectionMode::tplus_s: return "tplus_s";
  }
  return "tplus_s";
}

std::string to_string(FallbackPolicy p) {
  return p == FallbackPolicy::best_confidence ? "best_confidence" : "keep_original";
}

SelectionMode selection_mode_from_string(const std::string& s) {
  if (s == "base") return SelectionMode::base;
  if (s == "top1") return SelectionMode::top1;
  if (s == "sim") return SelectionMode::sim;
  if (s == "tplus_s") return SelectionMode::tplus_s;
  throw InvalidArgument("unknown selection mode '" + s + "' (expected base, top1, sim or tplus_s)");
}

FallbackPolicy fallback_policy_from_string(const std::string& s) {
  if (s == "best_confidence") return FallbackPolicy::best_confidence;
  if (s == "keep_original") return FallbackPolicy::keep_original;
  throw InvalidArgument("unknown fallback policy '" + s + "'");
}

namespace {

SampleStatus status_from_string(const std::string& s) {
  if (s == "normal") return SampleStatus::normal;
  if (s == "refined") return SampleStatus::refined;
  if (s == "fallback") return SampleStatus::fallback;
  throw FormatError("unknown status '" + s + "'");
}

}  // namespace

NormalPool NormalPool::scaled(float factor) const {
  NormalPool out(num_classes());
  for (int c = 0; c < num_classes(); ++c)
    for (auto f : features(c)) {
      for (auto& x : f) x *= factor;
      out.add(c, std::move(f));
    }
  return out;
}

void DistillConfig::validate() const {
  if (ipc < 1) throw InvalidArgument("distill config: ipc must be >= 1");
  if (!(beta > 0.0 && beta < 1.0)) throw InvalidArgument("distill config: beta must lie in (0, 1)");
  if (num_candidates < 1) throw InvalidArgument("distill config: num_candidates must be >= 1");
  if (top_k < 1 || top_k > num_candidates) throw InvalidArgument("distill config: need 1 <= top_k <= num_candidates");
  if (!(strength >= 0.0 && strength <= 1.0)) throw InvalidArgument("distill config: strength must lie in [0, 1]");
  if (!(guidance_scale >= 0.0)) throw InvalidArgument("distill config: guidance_scale must be >= 0");
  if (kmeans.max_iters < 1 || kmeans.restarts < 1) throw InvalidArgument("distill config: kmeans settings must be >= 1");
}

nlohmann::json DistillConfig::to_json() const {
  return {{"ipc", ipc},
          {"beta", beta},
          {"top_k", top_k},
          {"num_candidates", num_candidates},
          {"guidance_scale", guidance_scale},
          {"strength", strength},
          {"seed", seed},
          {"selection_mode", to_string(mode)},
          {"fallback_policy", to_string(fallback)},
          {"kmeans_max_iters", kmeans.max_iters},
          {"kmeans_restarts", kmeans.restarts}};
}

DistillConfig DistillConfig::from_json(const nlohmann::json& j, const std::string& section) {
  DistillConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "ipc") c.ipc = value.get<int>();
    else if (key == "beta") c.beta = value.get<double>();
    else if (key == "top_k") c.top_k = value.get<int>();
    else if (key == "num_candidates") c.num_candidates = value.get<int>();
    else if (key == "guidance_scale") c.guidance_scale = value.get<double>();
    else if (key == "strength") c.strength = value.get<double>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "selection_mode") c.mode = selection_mode_from_string(value.get<std::string>());
    else if (key == "fallback_policy") c.fallback = fallback_policy_from_string(value.get<std::string>());
    else if (key == "kmeans_max_iters") c.kmeans.max_iters = value.get<int>();
    else if (key == "kmeans_restarts") c.kmeans.restarts = value.get<int>();
    else throw InvalidArgument("unknown key '" + section + "." + key + "'");
  }
  return c;
}

std::vector<GeneratedImage> CandidateGenerator::generate_batch(const Prototype& proto, int label,
                                                               std::span<SeededRng> rngs) const {
  std::vector<GeneratedImage> out;
  out.reserve(rngs.size());
  for (auto& r : rngs) out.push_back(generate(proto, label, r));
  return out;
}

Verdict classify_prediction(int predicted_label, double confidence, int label, double beta) {
  return predicted_label == label && confidence > beta ? Verdict::accept : Verdict::defective;
}

Verdict classify_sample(const ImageClassifier& det, const Tensor& image, int label, double beta) {
  const auto p = predict(det, image);
  return classify_prediction(p.label, p.confidence, label, beta);
}

double cumulative_similarity(std::span<const float> feature, const NormalPool& pool, int cls) {
  double sum = 0.0;
  for (const auto& n : pool.features(cls)) sum += cosine_similarity(feature, n);
  return sum;
}

std::vector<std::size_t> passing_candidates(std::span<const SyntheticSample> candidates, double beta) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    if (classify_prediction(c.predicted_label, c.confidence, c.intended_label, beta) == Verdict::accept)
      out.push_back(i);
  }
  return out;
}

namespace {

/// Confidence descending, index ascending.
void sort_by_confidence(std::vector<std::size_t>& idx, std::span<const SyntheticSample> candidates) {
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return candidates[a].confidence > candidates[b].confidence;
  });
}

std::optional<std::size_t> least_similar(const std::vector<std::size_t>& idx,
                                         std::span<const SyntheticSample> candidates, const NormalPool& pool) {
  std::optional<std::size_t> best;
  double best_sim = 0.0;
  for (std::size_t i : idx) {
    const auto& c = candidates[i];
    const double sim = cumulative_similarity(c.feature, pool, c.intended_label);
    const bool better = !best || sim < best_sim ||
                        (sim == best_sim && (c.confidence > candidates[*best].confidence ||
                                             (c.confidence == candidates[*best].confidence && i < *best)));
    if (better) {
      best = i;
      best_sim = sim;
    }
  }
  return best;
}

std::vector<std::size_t> label_matching(std::span<const SyntheticSample> candidates) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (candidates[i].predicted_label == candidates[i].intended_label) out.push_back(i);
  return out;
}

}  // namespace

std::optional<std::size_t> select_replacement(std::span<const SyntheticSample> candidates, const NormalPool& pool,
                                              int k, double beta) {
  auto idx = passing_candidates(candidates, beta);
  if (idx.empty()) return std::nullopt;
  sort_by_confidence(idx, candidates);
  if (idx.size() > static_cast<std::size_t>(std::max(k, 1))) idx.resize(static_cast<std::size_t>(std::max(k, 1)));
  return least_similar(idx, candidates, pool);
}

std::optional<std::size_t> select_for_mode(SelectionMode mode, std::span<const SyntheticSample> candidates,
                                           const NormalPool& pool, int k, double beta) {
  switch (mode) {
    case SelectionMode::base: return std::nullopt;
    case SelectionMode::tplus_s: return select_replacement(candidates, pool, k, beta);
    case SelectionMode::top1: {
      auto idx = label_matching(candidates);
      if (idx.empty()) return std::nullopt;
      sort_by_confidence(idx, candidates);
      return idx.front();
    }
    case SelectionMode::sim: return least_similar(label_matching(candidates), candidates, pool);
  }
  return std::nullopt;
}

void evaluate_samples(const ImageClassifier& det, std::span<SyntheticSample> samples) {
  std::vector<Tensor> images;
  images.reserve(samples.size());
  for (const auto& s : samples) images.push_back(s.image);
  const auto outs = det.run(images);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto p = prediction_from_logits(outs[i].logits);
    samples[i].predicted_label = p.label;
    samples[i].confidence = p.confidence;
    samples[i].feature = outs[i].features;
  }
}

SyntheticSample refine_defective(const Prototype& proto, int label, const CandidateGenerator& gen,
                                 const ImageClassifier& det, NormalPool& pool, const DistillConfig& cfg,
                                 const SeededRng& rng, const SyntheticSample& original, const DistillHooks& hooks) {
  const auto n = static_cast<std::size_t>(cfg.num_candidates);
  std::vector<SeededRng> streams;
  streams.reserve(n);
  for (std::size_t i = 1; i <= n; ++i)
    streams.push_back(rng.fork({static_cast<std::uint64_t>(proto.class_id),
                                static_cast<std::uint64_t>(proto.cluster_index), i}));
  std::vector<std::uint64_t> seeds;
  for (const auto& s : streams) seeds.push_back(s.seed());

  auto generated = gen.generate_batch(proto, label, streams);
  if (generated.size() != n) throw InvalidArgument("refine_defective: generator returned the wrong batch size");
  std::vector<SyntheticSample> candidates(n);
  for (std::size_t i = 0; i < n; ++i) {
    candidates[i].image = std::move(generated[i].image);
    candidates[i].latent = std::move(generated[i].latent);
    candidates[i].intended_label = label;
    candidates[i].provenance = {proto.class_id, proto.cluster_index, static_cast<int>(i + 1), seeds[i]};
  }
  evaluate_samples(det, candidates);
  if (hooks.on_candidates) hooks.on_candidates(proto.class_id, proto.cluster_index, candidates);

  const auto pick = select_for_mode(cfg.mode, candidates, pool, cfg.top_k, cfg.beta);
  if (pick) {
    SyntheticSample chosen = std::move(candidates[*pick]);
    if (classify_prediction(chosen.predicted_label, chosen.confidence, label, cfg.beta) == Verdict::accept) {
      chosen.status = SampleStatus::refined;
      pool.add(label, chosen.feature);
    } else {
      chosen.status = SampleStatus::fallback;
    }
    return chosen;
  }

  if (cfg.fallback == FallbackPolicy::keep_original) {
    SyntheticSample kept = original;
    kept.status = SampleStatus::fallback;
    return kept;
  }
  auto matching = label_matching(candidates);
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  auto& pool_idx = matching.empty() ? all : matching;
  sort_by_confidence(pool_idx, candidates);
  SyntheticSample chosen = std::move(candidates[pool_idx.front()]);
  chosen.status = SampleStatus::fallback;
  return chosen;
}

SeededRng prototype_stream(const DistillConfig& cfg) { return SeededRng(derive_seed(cfg.seed, {0x9e0})); }
SeededRng generation_stream(const DistillConfig& cfg) { return SeededRng(derive_seed(cfg.seed, {0x6e4})); }

nlohmann::json DistillReport::to_json() const {
  nlohmann::json slots_json = nlohmann::json::array();
  for (const auto& s : slots)
    slots_json.push_back({{"class", s.class_id},
                          {"cluster", s.cluster_index},
                          {"status", to_string(s.status)},
                          {"initially_defective", s.initially_defective},
                          {"predicted_label", s.predicted_label},
                          {"confidence", s.confidence},
                          {"candidate_index", s.candidate_index},
                          {"seed", s.seed}});
  return {{"counts",
           {{"normal", normal}, {"refined", refined}, {"fallback", fallback}, {"initially_defective", initially_defective},
            {"total", static_cast<int>(slots.size())}}},
          {"slots", slots_json},
          {"config", config}};
}

DistillReport DistillReport::from_json(const nlohmann::json& j) {
  DistillReport r;
  try {
    const auto& c = j.at("counts");
    r.normal = c.at("normal").get<int>();
    r.refined = c.at("refined").get<int>();
    r.fallback = c.at("fallback").get<int>();
    r.initially_defective = c.at("initially_defective").get<int>();
    for (const auto& s : j.at("slots")) {
      SlotRecord rec;
      rec.class_id = s.at("class").get<int>();
      rec.cluster_index = s.at("cluster").get<int>();
      rec.status = status_from_string(s.at("status").get<std::string>());
      rec.initially_defective = s.at("initially_defective").get<bool>();
      rec.predicted_label = s.at("predicted_label").get<int>();
      rec.confidence = s.at("confidence").get<double>();
      rec.candidate_index = s.at("candidate_index").get<int>();
      rec.seed = s.at("seed").get<std::uint64_t>();
      r.slots.push_back(rec);
    }
    r.config = j.value("config", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("distillation report: ") + e.what());
  }
  return r;
}

DistillResult distill_from_prototypes(const PrototypeSet& prototypes, const CandidateGenerator& gen,
                                      const ImageClassifier& det, const DistillConfig& cfg,
                                      const DistillHooks& hooks) {
  cfg.validate();
  if (prototypes.prototypes.empty()) throw InvalidArgument("distill: no prototypes");
  if (det.num_classes() != prototypes.num_classes)
    throw InvalidArgument("distill: detector and prototypes disagree on the class count");

  DistillResult result;
  result.prototypes = prototypes;
  result.pool = NormalPool(prototypes.num_classes);
  const SeededRng gen_root = generation_stream(cfg);
  const auto& protos = prototypes.prototypes;

  // Initial pass: one sample per prototype from candidate stream 0.
  auto& samples = result.samples;
  samples.resize(protos.size());
  for (std::size_t s = 0; s < protos.size(); ++s) {
    const auto& p = protos[s];
    SeededRng stream = gen_root.fork({static_cast<std::uint64_t>(p.class_id),
                                      static_cast<std::uint64_t>(p.cluster_index), 0});
    const auto seed = stream.seed();
    auto img = gen.generate(p, p.class_id, stream);
    samples[s].image = std::move(img.image);
    samples[s].latent = std::move(img.latent);
    samples[s].intended_label = p.class_id;
    samples[s].provenance = {p.class_id, p.cluster_index, 0, seed};
  }
  evaluate_samples(det, samples);

  std::vector<bool> defective(samples.size());
  for (std::size_t s = 0; s < samples.size(); ++s) {
    defective[s] = classify_prediction(samples[s].predicted_label, samples[s].confidence, samples[s].intended_label,
                                       cfg.beta) == Verdict::defective;
    if (!defective[s]) {
      samples[s].status = SampleStatus::normal;
      result.pool.add(samples[s].intended_label, samples[s].feature);
    } else {
      samples[s].status = SampleStatus::fallback;
    }
  }

  // Slots are already in (class, cluster) order; the pool grows as slots are refined.
  if (cfg.mode != SelectionMode::base) {
    for (std::size_t s = 0; s < samples.size(); ++s) {
      if (!defective[s]) continue;
      samples[s] = refine_defective(protos[s], protos[s].class_id, gen, det, result.pool, cfg, gen_root, samples[s],
                                    hooks);
    }
  }

  auto& report = result.report;
  report.config = cfg.to_json();
  auto& ds = result.dataset;
  ds.image_shape = prototypes.image_shape;
  ds.num_classes = prototypes.num_classes;
  ds.class_names = prototypes.class_names;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const auto& smp = samples[s];
    switch (smp.status) {
      case SampleStatus::normal: ++report.normal; break;
      case SampleStatus::refined: ++report.refined; break;
      case SampleStatus::fallback: ++report.fallback; break;
    }
    if (defective[s]) ++report.initially_defective;
    report.slots.push_back({smp.provenance.class_id, smp.provenance.cluster_index, smp.status, defective[s],
                            smp.predicted_label, smp.confidence, smp.provenance.candidate_index,
                            smp.provenance.seed});
    ds.add(smp.image, smp.intended_label);
  }
  ds.provenance = {{"generator", "distill"},
                   {"config", cfg.to_json()},
                   {"counts", {{"normal", report.normal}, {"refined", report.refined}, {"fallback", report.fallback}}}};
  return result;
}

DistillResult distill(const LabeledDataset& train, const Autoencoder& encoder, const CandidateGenerator& gen,
                      const ImageClassifier& det, const DistillConfig& cfg, const DistillHooks& hooks) {
  cfg.validate();
  SeededRng proto_rng = prototype_stream(cfg);
  const auto protos = extract_prototypes(encoder, train, cfg.ipc, cfg.kmeans, proto_rng);
  return distill_from_prototypes(protos, gen, det, cfg, hooks);
}

}  // namespace dgd
