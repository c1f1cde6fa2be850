#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dgd/autoencoder.hpp"
#include "dgd/data.hpp"
#include "dgd/detector.hpp"
#include "dgd/diffusion.hpp"
#include "dgd/refine.hpp"

namespace dgd::cli {

/// Malformed, mistyped or unknown configuration. Maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EvalSettings {
  TrainConfig downstream{.epochs = 300, .batch_size = 32, .learning_rate = 1e-3};
  std::vector<SelectionMode> modes{SelectionMode::base, SelectionMode::top1, SelectionMode::sim,
                                   SelectionMode::tplus_s};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  bool random_baseline = true;
  std::vector<int> sweep_top_k{1, 2, 4, 8};
  std::vector<double> sweep_beta{0.5, 0.7, 0.9};

  nlohmann::json to_json() const;
  static EvalSettings from_json(const nlohmann::json& j);
};

struct RunConfig {
  /// Empty: derived from the hash of the config file contents.
  std::string run_id;
  std::filesystem::path output_root = "runs";
  /// Mixed into every model-training stage.
  std::uint64_t seed = 0;
  int threads = 1;
  ToyDataSpec data;
  TrainConfig detector;
  AutoencoderConfig autoencoder;
  DenoiserConfig denoiser;
  DistillConfig distill;
  EvalSettings eval;

  void validate() const;
  nlohmann::json to_json() const;
  /// Strict: every unknown key is rejected and type errors name the key.
  static RunConfig from_json(const nlohmann::json& j);
  /// Parse errors cite line and column.
  static RunConfig parse(const std::string& text);
  /// sha256 of the canonical JSON form.
  std::string hash() const;
};

/// Command-line overrides of the distillation hyperparameters and environment.
struct Overrides {
  std::optional<double> beta, guidance, strength;
  std::optional<int> top_k, candidates, ipc, threads;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode, output_root, run_id;
};

/// Precedence: command line, then DGD_OUTPUT_ROOT / DGD_THREADS, then the file.
void apply_overrides(RunConfig& cfg, const Overrides& o);

/// Reads and parses a config file; a missing path yields the defaults.
/// `source_hash` receives the hash of the file bytes (or of the default config).
RunConfig load_run_config(const std::optional<std::filesystem::path>& path, std::string* source_hash);

}  // namespace dgd::cli
