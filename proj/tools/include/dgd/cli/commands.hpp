#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

#include "dgd/cli/run_config.hpp"

namespace dgd::cli {

/// An upstream artifact is absent or unreadable. Maps to exit code 3.
class MissingArtifact : public std::runtime_error {
 public:
  MissingArtifact(const std::filesystem::path& path, const std::string& producer);
};

/// The run directory is held by another process.
class LockedRun : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2, kMissingArtifact = 3, kNumericError = 4 };

/// runs/<run-id>/{data,models,prototypes,distilled,reports}
struct RunLayout {
  std::filesystem::path root;

  std::filesystem::path data() const { return root / "data"; }
  std::filesystem::path models() const { return root / "models"; }
  std::filesystem::path prototypes() const { return root / "prototypes"; }
  std::filesystem::path distilled() const { return root / "distilled"; }
  std::filesystem::path reports() const { return root / "reports"; }

  std::filesystem::path train_set() const { return data() / "train.dstl"; }
  std::filesystem::path test_set() const { return data() / "test.dstl"; }
  std::filesystem::path detector() const { return models() / "detector.ckpt"; }
  std::filesystem::path autoencoder() const { return models() / "autoencoder.ckpt"; }
  std::filesystem::path denoiser() const { return models() / "denoiser.ckpt"; }
  std::filesystem::path prototype_file() const { return prototypes() / "prototypes.prto"; }
  std::filesystem::path distilled_set() const { return distilled() / "distilled.dstl"; }
  std::filesystem::path manifest(const std::string& command) const { return root / ("manifest." + command + ".json"); }

  void create() const;
};

/// Exclusive lock on a run directory, released on destruction.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& run_root);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

struct Context {
  RunConfig config;
  /// Hash of the config source; names the run directory when run_id is empty.
  std::string source_hash;
  RunLayout layout;
  bool sweep = false;
};

Context make_context(RunConfig config, const std::string& source_hash);

/// Writes `manifest.<command>.json`: tool version, effective config hash, seed,
/// and sha256 of every input and output file.
nlohmann::json write_manifest(const Context& ctx, const std::string& command,
                              const std::vector<std::filesystem::path>& inputs,
                              const std::vector<std::filesystem::path>& outputs);

void cmd_synth_data(const Context& ctx);
void cmd_train_detector(const Context& ctx);
void cmd_train_autoencoder(const Context& ctx);
void cmd_train_diffusion(const Context& ctx);
void cmd_distill(const Context& ctx);
void cmd_eval(const Context& ctx);
void cmd_ablate(const Context& ctx);
/// Returns the rendered summary table.
std::string cmd_report(const Context& ctx);

/// Runs a command by name inside the run lock, mapping failures to exit codes
/// and printing messages to stderr.
int run_command(const std::string& name, const Context& ctx);

const char* tool_version();

}  // namespace dgd::cli
