#include "dgd/cli/app.hpp"

#include <CLI11.hpp>
#include <iostream>

#include "dgd/cli/commands.hpp"
#include "dgd/error.hpp"

namespace dgd::cli {

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Detector-guided dataset distillation pipeline"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  app.set_version_flag("--version", tool_version());

  std::string config_path;
  Overrides o;
  bool sweep = false;
  app.add_option("-c,--config", config_path, "JSON run config (defaults when omitted)");
  app.add_option("--output-root", o.output_root, "Root for run directories (env DGD_OUTPUT_ROOT)");
  app.add_option("--run-id", o.run_id, "Run directory name (default: derived from the config hash)");
  app.add_option("--threads", o.threads, "Worker threads (env DGD_THREADS)");
  app.add_option("--beta", o.beta, "Detector confidence threshold");
  app.add_option("--top-k", o.top_k, "Candidates ranked by confidence before the similarity pick");
  app.add_option("--candidates", o.candidates, "Candidates generated per defective slot");
  app.add_option("--guidance", o.guidance, "Classifier-free guidance scale");
  app.add_option("--strength", o.strength, "img2img strength in [0, 1]");
  app.add_option("--ipc", o.ipc, "Images per class");
  app.add_option("--seed", o.seed, "Distillation seed");
  app.add_option("--mode", o.mode, "Selection mode: base, top1, sim, tplus_s");

  const std::vector<std::pair<std::string, std::string>> commands{
      {"synth-data", "Render the toy train/test datasets"},
      {"train-detector", "Train the CutMix detector"},
      {"train-autoencoder", "Train the image autoencoder"},
      {"train-diffusion", "Train the conditional latent denoiser"},
      {"distill", "Extract prototypes, generate and refine the distilled set"},
      {"eval", "Train a downstream classifier on the distilled set and report accuracy"},
      {"ablate", "Run the selection-mode ablation across seeds"},
      {"report", "Render the ablation CSV and summary table"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    if (name == "ablate") sub->add_flag("--sweep", sweep, "Also run the top-k x beta sensitivity grid");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  Context ctx;
  try {
    std::string source_hash;
    auto cfg = load_run_config(config_path.empty() ? std::nullopt : std::optional<std::filesystem::path>(config_path),
                               &source_hash);
    apply_overrides(cfg, o);
    ctx = make_context(std::move(cfg), source_hash);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const InvalidArgument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }
  ctx.sweep = sweep;
  return run_command(app.get_subcommands().front()->get_name(), ctx);
}

}  // namespace dgd::cli
