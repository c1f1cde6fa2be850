#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dgd/cli/app.hpp"
#include "dgd/cli/commands.hpp"
#include "dgd/cli/run_config.hpp"
#include "dgd/eval.hpp"

namespace dgd::cli {
namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dgd_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

/// A pipeline small enough to run end to end in seconds.
RunConfig tiny_config(const fs::path& root) {
  RunConfig c;
  c.output_root = root;
  c.data.num_classes = 3;
  c.data.train_per_class = 12;
  c.data.test_per_class = 6;
  c.data.height = 8;
  c.data.width = 8;
  c.detector.epochs = 3;
  c.detector.batch_size = 8;
  c.detector.hidden = {16};
  c.autoencoder.latent_dim = 6;
  c.autoencoder.hidden = 16;
  c.autoencoder.train.epochs = 3;
  c.denoiser.timesteps = 20;
  c.denoiser.beta_end = 0.4;
  c.denoiser.hidden = {16};
  c.denoiser.time_embed_dim = 8;
  c.denoiser.label_embed_dim = 4;
  c.denoiser.train.epochs = 3;
  c.distill.ipc = 2;
  c.distill.num_candidates = 4;
  c.distill.top_k = 2;
  c.distill.guidance_scale = 1.0;
  c.eval.downstream.epochs = 3;
  c.eval.downstream.hidden = {8};
  c.eval.seeds = {1, 2};
  c.eval.modes = {SelectionMode::base, SelectionMode::tplus_s};
  c.eval.sweep_top_k = {1, 2};
  c.eval.sweep_beta = {0.5, 0.9};
  return c;
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "dgd");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string config_text() { return RunConfig{}.to_json().dump(2); }

TEST(RunConfigParse, DefaultsRoundTrip) {
  const auto cfg = RunConfig::parse(config_text());
  EXPECT_EQ(cfg.to_json(), RunConfig{}.to_json());
  EXPECT_EQ(cfg.hash(), RunConfig{}.hash());
  EXPECT_EQ(cfg.hash().size(), 64u);
}

TEST(RunConfigParse, UnknownKeyNamesKeyAndLine) {
  auto j = RunConfig{}.to_json();
  j["distill"]["betta"] = 0.5;
  const std::string text = j.dump(2);
  int line = 1;
  for (std::size_t i = 0; i < text.find("\"betta\""); ++i) line += text[i] == '\n';
  try {
    RunConfig::parse(text);
    FAIL() << "accepted a misspelled key";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("betta"), std::string::npos) << msg;
    EXPECT_NE(msg.find("line " + std::to_string(line)), std::string::npos) << msg;
  }
}

TEST(RunConfigParse, TypeErrorNamesKey) {
  auto j = RunConfig{}.to_json();
  j["detector"]["epochs"] = "fifty";
  try {
    RunConfig::parse(j.dump(2));
    FAIL() << "accepted a string epoch count";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("epochs"), std::string::npos) << e.what();
  }
}

TEST(RunConfigParse, SyntaxErrorCitesLine) {
  try {
    RunConfig::parse("{\n  \"seed\": 1,\n  \"threads\": ,\n}");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(RunConfigParse, DuplicateKeyRejected) {
  EXPECT_THROW(RunConfig::parse("{\"seed\": 1, \"seed\": 2}"), ConfigError);
}

TEST(RunConfigParse, ValuesOutOfRangeRejected) {
  auto j = RunConfig{}.to_json();
  j["distill"]["beta"] = 1.5;
  EXPECT_ANY_THROW(RunConfig::parse(j.dump()));
  j = RunConfig{}.to_json();
  j["eval"]["sweep_beta"] = {0.0, 0.5};
  EXPECT_THROW(RunConfig::parse(j.dump()), ConfigError);
}

TEST(Overrides, PrecedenceCliThenEnvThenFile) {
  RunConfig cfg;
  cfg.output_root = "from_file";
  cfg.threads = 1;
  ::setenv("DGD_OUTPUT_ROOT", "from_env", 1);
  ::setenv("DGD_THREADS", "3", 1);
  Overrides none;
  RunConfig a = cfg;
  apply_overrides(a, none);
  EXPECT_EQ(a.output_root, "from_env");
  EXPECT_EQ(a.threads, 3);
  Overrides o;
  o.output_root = "from_cli";
  o.threads = 2;
  o.beta = 0.8;
  o.top_k = 4;
  o.mode = "top1";
  o.seed = 9;
  RunConfig b = cfg;
  apply_overrides(b, o);
  EXPECT_EQ(b.output_root, "from_cli");
  EXPECT_EQ(b.threads, 2);
  EXPECT_EQ(b.distill.beta, 0.8);
  EXPECT_EQ(b.distill.top_k, 4);
  EXPECT_EQ(b.distill.mode, SelectionMode::top1);
  EXPECT_EQ(b.distill.seed, 9u);
  ::setenv("DGD_THREADS", "zero", 1);
  RunConfig c = cfg;
  EXPECT_THROW(apply_overrides(c, none), ConfigError);
  ::unsetenv("DGD_OUTPUT_ROOT");
  ::unsetenv("DGD_THREADS");
  Overrides bad;
  bad.mode = "t+s";
  RunConfig d = cfg;
  EXPECT_ANY_THROW(apply_overrides(d, bad));
}

TEST(Cli, ConfigErrorsExitTwo) {
  const auto dir = fresh_dir("config_errors");
  auto j = RunConfig{}.to_json();
  j["detector"]["epoch"] = 3;
  spit(dir / "bad.json", j.dump(2));
  EXPECT_EQ(cli({"--config", (dir / "bad.json").string(), "synth-data"}), kConfigError);
  EXPECT_EQ(cli({"--config", (dir / "missing.json").string(), "synth-data"}), kConfigError);
  EXPECT_EQ(cli({"--beta", "2", "synth-data"}), kConfigError);
  EXPECT_EQ(cli({"no-such-command"}), kConfigError);
}

TEST(Cli, MissingArtifactExitsThreeAndNamesProducer) {
  const auto dir = fresh_dir("missing");
  const auto cfg = tiny_config(dir);
  const auto ctx = make_context(cfg, "abc");
  testing::internal::CaptureStderr();
  EXPECT_EQ(run_command("distill", ctx), kMissingArtifact);
  const std::string err = testing::internal::GetCapturedStderr();
  EXPECT_NE(err.find("synth-data"), std::string::npos) << err;
  EXPECT_EQ(run_command("report", ctx), kMissingArtifact);
}

TEST(Cli, LockBlocksConcurrentRuns) {
  const auto dir = fresh_dir("lock");
  const auto ctx = make_context(tiny_config(dir), "abc");
  ctx.layout.create();
  {
    RunLock lock(ctx.layout.root);
    EXPECT_TRUE(fs::exists(ctx.layout.root / ".lock"));
    EXPECT_THROW(RunLock second(ctx.layout.root), LockedRun);
    EXPECT_EQ(run_command("synth-data", ctx), kFailure);
  }
  EXPECT_FALSE(fs::exists(ctx.layout.root / ".lock"));
  EXPECT_EQ(run_command("synth-data", ctx), kOk);
}

TEST(Cli, RunIdDerivedFromConfigSource) {
  const auto dir = fresh_dir("run_id");
  auto cfg = tiny_config(dir);
  const auto ctx = make_context(cfg, "0123456789abcdef");
  EXPECT_EQ(ctx.layout.root, dir / "cfg-0123456789ab");
  cfg.run_id = "named";
  EXPECT_EQ(make_context(cfg, "0123456789abcdef").layout.root, dir / "named");
}

class TinyPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new fs::path(fresh_dir("pipeline"));
    spit(*root_ / "config.json", tiny_config(*root_ / "runs").to_json().dump(2));
    for (const char* cmd : {"synth-data", "train-detector", "train-autoencoder", "train-diffusion", "distill", "eval"})
      ASSERT_EQ(run(cmd, "a"), kOk) << cmd;
  }
  static void TearDownTestSuite() { delete root_; }

  static int run(const std::string& cmd, const std::string& run_id, std::vector<std::string> extra = {}) {
    std::vector<std::string> args{"--config", (*root_ / "config.json").string(), "--run-id", run_id};
    args.insert(args.end(), extra.begin(), extra.end());
    args.push_back(cmd);
    return cli(args);
  }
  static fs::path run_root(const std::string& id) { return *root_ / "runs" / id; }

  static fs::path* root_;
};

fs::path* TinyPipeline::root_ = nullptr;

TEST_F(TinyPipeline, LayoutAndManifests) {
  const auto r = run_root("a");
  for (const char* sub : {"data", "models", "prototypes", "distilled", "reports"}) EXPECT_TRUE(fs::is_directory(r / sub));
  for (const char* f : {"data/train.dstl", "data/test.dstl", "models/detector.ckpt", "models/autoencoder.ckpt",
                        "models/denoiser.ckpt", "prototypes/prototypes.prto", "distilled/distilled.dstl",
                        "reports/eval.json", "reports/distill.json"})
    EXPECT_TRUE(fs::exists(r / f)) << f;
  const auto m = nlohmann::json::parse(slurp(r / "manifest.distill.json"));
  EXPECT_EQ(m["command"], "distill");
  EXPECT_EQ(m["inputs"].size(), 4u);
  for (const auto& entry : m["inputs"]) EXPECT_EQ(entry["sha256"].get<std::string>().size(), 64u);
  EXPECT_FALSE(fs::exists(r / ".lock"));
}

TEST_F(TinyPipeline, RerunIsByteIdenticalAndManifestTracksInputs) {
  ASSERT_EQ(run("synth-data", "b"), kOk);
  for (const char* cmd : {"train-detector", "train-autoencoder", "train-diffusion", "distill", "eval"})
    ASSERT_EQ(run(cmd, "b"), kOk) << cmd;
  for (const char* f : {"distilled/distilled.dstl", "prototypes/prototypes.prto", "reports/distill.json",
                        "reports/eval.json", "models/denoiser.ckpt"})
    EXPECT_EQ(slurp(run_root("a") / f), slurp(run_root("b") / f)) << f;
  // Manifests record the run id, so only their hashes must agree.
  const auto first = nlohmann::json::parse(slurp(run_root("a") / "manifest.distill.json"));
  const auto second = nlohmann::json::parse(slurp(run_root("b") / "manifest.distill.json"));
  EXPECT_EQ(first["inputs"], second["inputs"]);
  EXPECT_EQ(first["outputs"], second["outputs"]);

  // A different distillation seed changes the outputs and the recorded hashes.
  ASSERT_EQ(run("distill", "b", {"--seed", "5"}), kOk);
  EXPECT_NE(slurp(run_root("a") / "distilled/distilled.dstl"), slurp(run_root("b") / "distilled/distilled.dstl"));
  const auto ma = nlohmann::json::parse(slurp(run_root("a") / "manifest.distill.json"));
  const auto mb = nlohmann::json::parse(slurp(run_root("b") / "manifest.distill.json"));
  EXPECT_NE(ma["outputs"], mb["outputs"]);
  EXPECT_NE(ma["config_hash"], mb["config_hash"]);

  // Changing an upstream input changes the input hashes of the next stage.
  auto cfg = tiny_config(*root_ / "runs");
  cfg.data.seed = 99;
  spit(*root_ / "other.json", cfg.to_json().dump(2));
  ASSERT_EQ(cli({"--config", (*root_ / "other.json").string(), "--run-id", "c", "synth-data"}), kOk);
  ASSERT_EQ(cli({"--config", (*root_ / "other.json").string(), "--run-id", "c", "train-detector"}), kOk);
  const auto da = nlohmann::json::parse(slurp(run_root("a") / "manifest.train-detector.json"));
  const auto dc = nlohmann::json::parse(slurp(run_root("c") / "manifest.train-detector.json"));
  EXPECT_NE(da["inputs"], dc["inputs"]);
}

TEST_F(TinyPipeline, CorruptArtifactExitsThree) {
  ASSERT_EQ(run("synth-data", "corrupt"), kOk);
  spit(run_root("corrupt") / "data/train.dstl", "garbage");
  EXPECT_EQ(run("train-detector", "corrupt"), kMissingArtifact);
}

TEST_F(TinyPipeline, AblateAndReport) {
  fs::create_directories(run_root("abl"));
  for (const char* f : {"data", "models"}) fs::copy(run_root("a") / f, run_root("abl") / f, fs::copy_options::recursive);
  ASSERT_EQ(run("ablate", "abl", {"--threads", "2"}), kOk);
  ASSERT_EQ(cli({"--config", (*root_ / "config.json").string(), "--run-id", "abl", "ablate", "--sweep"}), kOk);
  ASSERT_EQ(run("report", "abl"), kOk);
  const auto report = EvalReport::from_json(nlohmann::json::parse(slurp(run_root("abl") / "reports/ablation.json")));
  EXPECT_EQ(report.runs.size(), 6u);  // 2 modes x 2 seeds + random x 2
  const std::string csv = slurp(run_root("abl") / "reports/sensitivity.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "top_k,beta,seed,accuracy,refined,fallback,initially_defective");
  EXPECT_TRUE(fs::exists(run_root("abl") / "reports/summary.txt"));
  EXPECT_TRUE(fs::exists(run_root("abl") / "reports/summary.csv"));
}

}  // namespace
}  // namespace dgd::cli
