#include "dgd/cli/commands.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <system_error>
#include <unistd.h>

#include "dgd/binary_io.hpp"
#include "dgd/checkpoint.hpp"
#include "dgd/dataset_io.hpp"
#include "dgd/error.hpp"
#include "dgd/eval.hpp"
#include "dgd/generator.hpp"
#include "dgd/hashing.hpp"
#include "dgd/prototypes.hpp"
#include "dgd/rng.hpp"

#ifndef DGD_VERSION
#define DGD_VERSION "0.0.0"
#endif

namespace dgd::cli {

namespace fs = std::filesystem;
using Json = nlohmann::json;

const char* tool_version() { return DGD_VERSION; }

MissingArtifact::MissingArtifact(const fs::path& path, const std::string& producer)
    : std::runtime_error("missing artifact " + path.string() + " (run `dgd " + producer + "` first)") {}

void RunLayout::create() const {
  for (const auto& dir : {data(), models(), prototypes(), distilled(), reports()}) fs::create_directories(dir);
}

RunLock::RunLock(const fs::path& run_root) : path_(run_root / ".lock") {
  fs::create_directories(run_root);
  // "x": fail if the file already exists (exclusive create).
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (!f)
    throw LockedRun("run directory " + run_root.string() + " is locked by another process (remove " +
                    path_.string() + " if it is stale)");
  std::fprintf(f, "%ld\n", static_cast<long>(::getpid()));
  std::fclose(f);
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

Context make_context(RunConfig config, const std::string& source_hash) {
  Context ctx;
  const std::string id = config.run_id.empty() ? "cfg-" + source_hash.substr(0, 12) : config.run_id;
  ctx.layout.root = config.output_root / id;
  ctx.config = std::move(config);
  ctx.source_hash = source_hash;
  return ctx;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  write_file_bytes(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

void require(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path)) throw MissingArtifact(path, producer);
}

template <typename Fn>
auto load(const fs::path& path, const std::string& producer, Fn read) -> decltype(read(path)) {
  require(path, producer);
  try {
    return read(path);
  } catch (const FormatError& e) {
    throw MissingArtifact(path.string() + " is unreadable: " + e.what() + ";", producer);
  }
}

LabeledDataset load_train(const Context& ctx) {
  return load(ctx.layout.train_set(), "synth-data", [](const fs::path& p) { return read_dataset(p); });
}
LabeledDataset load_test(const Context& ctx) {
  return load(ctx.layout.test_set(), "synth-data", [](const fs::path& p) { return read_dataset(p); });
}
Detector load_detector(const Context& ctx) {
  return load(ctx.layout.detector(), "train-detector",
              [](const fs::path& p) { return Detector::from_checkpoint(read_checkpoint(p)); });
}
Autoencoder load_autoencoder(const Context& ctx) {
  return load(ctx.layout.autoencoder(), "train-autoencoder",
              [](const fs::path& p) { return Autoencoder::from_checkpoint(read_checkpoint(p)); });
}
Denoiser load_denoiser(const Context& ctx) {
  return load(ctx.layout.denoiser(), "train-diffusion",
              [](const fs::path& p) { return Denoiser::from_checkpoint(read_checkpoint(p)); });
}

SeededRng stage_rng(const Context& ctx, std::uint64_t tag, std::uint64_t section_seed) {
  return SeededRng(derive_seed(ctx.config.seed, {tag, section_seed}));
}

std::string relative(const Context& ctx, const fs::path& p) { return fs::relative(p, ctx.layout.root).generic_string(); }

PipelineInputs pipeline(const Context& ctx, const LabeledDataset& train, const LabeledDataset& test,
                        const Autoencoder& ae, const CandidateGenerator& gen, const ImageClassifier& det) {
  PipelineInputs in;
  in.train = &train;
  in.test = &test;
  in.autoencoder = &ae;
  in.generator = &gen;
  in.detector = &det;
  in.distill = ctx.config.distill;
  in.downstream = ctx.config.eval.downstream;
  in.threads = ctx.config.threads;
  return in;
}

}  // namespace

Json write_manifest(const Context& ctx, const std::string& command, const std::vector<fs::path>& inputs,
                    const std::vector<fs::path>& outputs) {
  auto entries = [&](const std::vector<fs::path>& files) {
    Json arr = Json::array();
    for (const auto& f : files) arr.push_back({{"path", relative(ctx, f)}, {"sha256", sha256_file(f)}});
    return arr;
  };
  Json m = {{"command", command},
            {"tool_version", tool_version()},
            {"config_hash", ctx.config.hash()},
            {"config_source_hash", ctx.source_hash},
            {"seed", ctx.config.seed},
            {"distill_seed", ctx.config.distill.seed},
            {"config", ctx.config.to_json()},
            {"inputs", entries(inputs)},
            {"outputs", entries(outputs)}};
  write_json(ctx.layout.manifest(command), m);
  return m;
}

void cmd_synth_data(const Context& ctx) {
  SeededRng rng(ctx.config.data.seed);
  const auto [train, test] = synthesize_toy_dataset(ctx.config.data, rng);
  write_dataset(ctx.layout.train_set(), train);
  write_dataset(ctx.layout.test_set(), test);
  write_manifest(ctx, "synth-data", {}, {ctx.layout.train_set(), ctx.layout.test_set()});
  std::cout << "synth-data: " << train.size() << " train / " << test.size() << " test images -> "
            << ctx.layout.data().string() << "\n";
}

void cmd_train_detector(const Context& ctx) {
  const auto train = load_train(ctx);
  const auto test = load_test(ctx);
  SeededRng rng = stage_rng(ctx, 0xde7, ctx.config.detector.seed);
  const auto det = train_detector(train, ctx.config.detector, rng);
  write_checkpoint(ctx.layout.detector(), det.to_checkpoint());
  const double acc = accuracy(det, test);
  const fs::path report = ctx.layout.reports() / "detector.json";
  write_json(report, {{"test_accuracy", acc}, {"epoch_loss", det.info().epoch_loss}});
  write_manifest(ctx, "train-detector", {ctx.layout.train_set(), ctx.layout.test_set()},
                 {ctx.layout.detector(), report});
  std::cout << "train-detector: test accuracy " << acc << "\n";
}

void cmd_train_autoencoder(const Context& ctx) {
  const auto train = load_train(ctx);
  const auto test = load_test(ctx);
  SeededRng rng = stage_rng(ctx, 0xae0, ctx.config.autoencoder.train.seed);
  const auto ae = train_autoencoder(train, ctx.config.autoencoder, rng);
  write_checkpoint(ctx.layout.autoencoder(), ae.to_checkpoint());
  const double mse = reconstruction_error(ae, test);
  const fs::path report = ctx.layout.reports() / "autoencoder.json";
  write_json(report, {{"test_mse", mse}, {"latent_dim", ae.latent_dim()}, {"epoch_loss", ae.info().epoch_loss}});
  write_manifest(ctx, "train-autoencoder", {ctx.layout.train_set(), ctx.layout.test_set()},
                 {ctx.layout.autoencoder(), report});
  std::cout << "train-autoencoder: test reconstruction MSE " << mse << "\n";
}

void cmd_train_diffusion(const Context& ctx) {
  const auto train = load_train(ctx);
  const auto ae = load_autoencoder(ctx);
  const Mat<float> latents = ae.encode_batch(train.images);
  const std::vector<int> labels(train.labels.begin(), train.labels.end());
  SeededRng rng = stage_rng(ctx, 0xd1f, ctx.config.denoiser.train.seed);
  const auto den = train_denoiser(latents, labels, train.num_classes, ctx.config.denoiser, rng);
  write_checkpoint(ctx.layout.denoiser(), den.to_checkpoint());
  const fs::path report = ctx.layout.reports() / "denoiser.json";
  write_json(report, {{"epoch_loss", den.info().epoch_loss}});
  write_manifest(ctx, "train-diffusion", {ctx.layout.train_set(), ctx.layout.autoencoder()},
                 {ctx.layout.denoiser(), report});
  std::cout << "train-diffusion: loss " << den.info().epoch_loss.front() << " -> " << den.info().final_loss()
            << "\n";
}

void cmd_distill(const Context& ctx) {
  const auto train = load_train(ctx);
  const auto ae = load_autoencoder(ctx);
  const auto den = load_denoiser(ctx);
  const auto det = load_detector(ctx);
  const auto& cfg = ctx.config.distill;
  const DiffusionGenerator gen(den, ae, cfg.strength, cfg.guidance_scale);
  const auto result = distill(train, ae, gen, det, cfg);
  write_prototypes(ctx.layout.prototype_file(), result.prototypes);
  write_dataset(ctx.layout.distilled_set(), result.dataset);
  const fs::path report = ctx.layout.reports() / "distill.json";
  write_json(report, result.report.to_json());
  write_manifest(ctx, "distill",
                 {ctx.layout.train_set(), ctx.layout.autoencoder(), ctx.layout.denoiser(), ctx.layout.detector()},
                 {ctx.layout.prototype_file(), ctx.layout.distilled_set(), report});
  const auto& r = result.report;
  std::cout << "distill: " << result.dataset.size() << " samples (normal " << r.normal << ", refined " << r.refined
            << ", fallback " << r.fallback << ", initially defective " << r.initially_defective << ")\n";
}

void cmd_eval(const Context& ctx) {
  const auto distilled = load(ctx.layout.distilled_set(), "distill", [](const fs::path& p) { return read_dataset(p); });
  const auto test = load_test(ctx);
  const auto start = std::chrono::steady_clock::now();
  SeededRng rng = downstream_stream(ctx.config.distill.seed);
  const auto clf = train_downstream(distilled, ctx.config.eval.downstream, rng);
  const double acc = evaluate(clf, test);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const fs::path report = ctx.layout.reports() / "eval.json";
  write_json(report, {{"accuracy", acc},
                      {"mode", to_string(ctx.config.distill.mode)},
                      {"seed", ctx.config.distill.seed},
                      {"distilled_samples", distilled.size()},
                      {"config", {{"downstream", ctx.config.eval.downstream.to_json()}}}});
  write_json(ctx.layout.reports() / "eval.timings.json", {{"seconds", seconds}});
  write_manifest(ctx, "eval", {ctx.layout.distilled_set(), ctx.layout.test_set()}, {report});
  std::cout << "eval: downstream top-1 accuracy " << acc << "\n";
}

void cmd_ablate(const Context& ctx) {
  const auto train = load_train(ctx);
  const auto test = load_test(ctx);
  const auto ae = load_autoencoder(ctx);
  const auto den = load_denoiser(ctx);
  const auto det = load_detector(ctx);
  const auto& cfg = ctx.config;
  const DiffusionGenerator gen(den, ae, cfg.distill.strength, cfg.distill.guidance_scale);
  const auto inputs = pipeline(ctx, train, test, ae, gen, det);
  const std::vector<fs::path> upstream{ctx.layout.train_set(), ctx.layout.test_set(), ctx.layout.autoencoder(),
                                       ctx.layout.denoiser(), ctx.layout.detector()};

  const auto report = run_ablation(inputs, cfg.eval.modes, cfg.eval.seeds, cfg.eval.random_baseline);
  const fs::path json_path = ctx.layout.reports() / "ablation.json";
  const fs::path csv_path = ctx.layout.reports() / "ablation.csv";
  write_json(json_path, report.to_json());
  write_text(csv_path, report.to_csv());
  write_json(ctx.layout.reports() / "ablation.timings.json", report.timings_json());
  std::vector<fs::path> outputs{json_path, csv_path};

  if (ctx.sweep) {
    const auto sens = run_sensitivity(inputs, cfg.eval.sweep_top_k, cfg.eval.sweep_beta, cfg.eval.seeds);
    const fs::path sens_csv = ctx.layout.reports() / "sensitivity.csv";
    const fs::path sens_json = ctx.layout.reports() / "sensitivity.json";
    write_text(sens_csv, sens.to_csv());
    write_json(sens_json, sens.to_json());
    outputs.push_back(sens_csv);
    outputs.push_back(sens_json);
    std::cout << "sensitivity: " << sens.rows.size() << " grid rows, " << sens.monotone_violations
              << " monotonicity violations in " << sens.monotone_checks << " checks\n";
    if (sens.monotone_violations != 0) throw NumericError("sensitivity sweep: nested-filter property violated");
  }
  write_manifest(ctx, "ablate", upstream, outputs);
  std::cout << report.summary_table();
}

std::string cmd_report(const Context& ctx) {
  const fs::path json_path = ctx.layout.reports() / "ablation.json";
  const auto report = load(json_path, "ablate", [](const fs::path& p) {
    try {
      const auto bytes = read_file_bytes(p);
      return EvalReport::from_json(Json::parse(bytes.begin(), bytes.end()));
    } catch (const Json::exception& e) {
      throw FormatError(e.what());
    }
  });
  std::ostringstream table;
  table << "Downstream top-1 accuracy by selection mode\n" << report.summary_table();
  std::vector<fs::path> inputs{json_path};
  const fs::path eval_path = ctx.layout.reports() / "eval.json";
  if (fs::exists(eval_path)) {
    const auto bytes = read_file_bytes(eval_path);
    const auto e = Json::parse(bytes.begin(), bytes.end());
    table << "\nSingle distilled set (" << e.at("mode").get<std::string>() << ", seed " << e.at("seed") << "): "
          << e.at("accuracy").get<double>() * 100.0 << "%\n";
    inputs.push_back(eval_path);
  }
  const fs::path sens_path = ctx.layout.reports() / "sensitivity.csv";
  if (fs::exists(sens_path)) {
    table << "\nSensitivity grid: " << sens_path.filename().string() << "\n";
    inputs.push_back(sens_path);
  }
  const fs::path csv_out = ctx.layout.reports() / "summary.csv";
  const fs::path txt_out = ctx.layout.reports() / "summary.txt";
  write_text(csv_out, report.to_csv());
  write_text(txt_out, table.str());
  write_manifest(ctx, "report", inputs, {csv_out, txt_out});
  std::cout << table.str();
  return table.str();
}

int run_command(const std::string& name, const Context& ctx) {
  try {
    ctx.layout.create();
    RunLock lock(ctx.layout.root);
    if (name == "synth-data") cmd_synth_data(ctx);
    else if (name == "train-detector") cmd_train_detector(ctx);
    else if (name == "train-autoencoder") cmd_train_autoencoder(ctx);
    else if (name == "train-diffusion") cmd_train_diffusion(ctx);
    else if (name == "distill") cmd_distill(ctx);
    else if (name == "eval") cmd_eval(ctx);
    else if (name == "ablate") cmd_ablate(ctx);
    else if (name == "report") cmd_report(ctx);
    else throw ConfigError("unknown command '" + name + "'");
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kConfigError;
  } catch (const MissingArtifact& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kMissingArtifact;
  } catch (const FormatError& e) {
    std::cerr << "error: unreadable artifact: " << e.what() << "\n";
    return kMissingArtifact;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumericError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace dgd::cli
