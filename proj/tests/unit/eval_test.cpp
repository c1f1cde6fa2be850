#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <sstream>

#include "dgd/autoencoder.hpp"
#include "dgd/error.hpp"
#include "dgd/eval.hpp"
#include "test_support.hpp"

namespace dgd {
namespace {

/// Always predicts class `label`.
class ConstantClassifier final : public ImageClassifier {
 public:
  ConstantClassifier(Shape shape, int classes, int label) : shape_(std::move(shape)), classes_(classes), label_(label) {}
  const Shape& input_shape() const override { return shape_; }
  int num_classes() const override { return classes_; }
  std::size_t feature_dim() const override { return 1; }
  std::vector<Output> run(std::span<const Tensor> images) const override {
    std::vector<Output> out(images.size());
    for (auto& o : out) {
      o.logits.assign(static_cast<std::size_t>(classes_), 0.0f);
      o.logits[static_cast<std::size_t>(label_)] = 1.0f;
      o.features = {1.0f};
    }
    return out;
  }

 private:
  Shape shape_;
  int classes_, label_;
};

LabeledDataset labelled(int classes, int per_class) {
  LabeledDataset ds;
  ds.num_classes = classes;
  ds.image_shape = {1, 1, 2};
  for (int c = 0; c < classes; ++c) ds.class_names.push_back("c" + std::to_string(c));
  for (int c = 0; c < classes; ++c)
    for (int i = 0; i < per_class; ++i) {
      Tensor t(ds.image_shape);
      t[0] = static_cast<float>(c);
      t[1] = static_cast<float>(i);
      ds.images.push_back(t);
      ds.labels.push_back(c);
    }
  return ds;
}

TEST(Evaluate, ConstantPredictorScoresItsClassShare) {
  const auto test = labelled(5, 4);
  const ConstantClassifier clf(test.image_shape, 5, 3);
  EXPECT_DOUBLE_EQ(evaluate(clf, test), 0.2);
}

TEST(Evaluate, PermutationInvariantAndRejectsEmpty) {
  auto test = labelled(3, 5);
  const ConstantClassifier clf(test.image_shape, 3, 0);
  const double before = evaluate(clf, test);
  std::reverse(test.images.begin(), test.images.end());
  std::reverse(test.labels.begin(), test.labels.end());
  EXPECT_DOUBLE_EQ(evaluate(clf, test), before);
  LabeledDataset empty = labelled(3, 0);
  EXPECT_THROW(evaluate(clf, empty), InvalidArgument);
}

TEST(Summarize, MeanAndSampleStd) {
  const std::vector<double> v{0.5, 0.7, 0.9};
  const auto s = summarize("top1", v);
  EXPECT_EQ(s.mode, "top1");
  EXPECT_EQ(s.runs, 3);
  EXPECT_NEAR(s.mean, 0.7, 1e-15);
  ASSERT_TRUE(s.stddev.has_value());
  EXPECT_NEAR(*s.stddev, 0.2, 1e-15);
  const std::vector<double> one{0.4};
  EXPECT_FALSE(summarize("base", one).stddev.has_value());
}

struct MockPipeline {
  LabeledDataset train, test;
  Autoencoder ae;
  Detector det;
  testing::ControlledDefectGenerator gen;
  PipelineInputs inputs;

  static std::pair<LabeledDataset, LabeledDataset> data() {
    SeededRng rng(31);
    return synthesize_toy_dataset(testing::small_spec(), rng);
  }
  static Detector detector(const LabeledDataset& train) {
    SeededRng rng(4);
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 16;
    return train_detector(train, cfg, rng);
  }

  explicit MockPipeline(std::pair<LabeledDataset, LabeledDataset> d = data())
      : train(std::move(d.first)),
        test(std::move(d.second)),
        ae(Autoencoder::identity(train.image_shape)),
        det(detector(train)),
        gen(train, 0.3) {
    inputs.train = &train;
    inputs.test = &test;
    inputs.autoencoder = &ae;
    inputs.generator = &gen;
    inputs.detector = &det;
    inputs.distill.ipc = 3;
    inputs.distill.num_candidates = 6;
    inputs.distill.top_k = 2;
    inputs.downstream.epochs = 20;
    inputs.downstream.hidden = {16};
  }
};

const MockPipeline& mock() {
  static const MockPipeline m;
  return m;
}

TEST(Ablation, RunCountsAndSummaries) {
  const std::vector<SelectionMode> modes{SelectionMode::base, SelectionMode::tplus_s};
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  const auto report = run_ablation(mock().inputs, modes, seeds, true);
  ASSERT_EQ(report.runs.size(), 9u);
  ASSERT_EQ(report.summaries.size(), 3u);
  EXPECT_EQ(report.summaries[0].mode, "base");
  EXPECT_EQ(report.summaries[1].mode, "tplus_s");
  EXPECT_EQ(report.summaries[2].mode, "random");
  for (const auto& s : report.summaries) {
    EXPECT_EQ(s.runs, 3);
    std::vector<double> acc;
    for (std::uint64_t seed : seeds) acc.push_back(*report.accuracy(s.mode, seed));
    const auto expected = summarize(s.mode, acc);
    EXPECT_EQ(s.mean, expected.mean);
    EXPECT_EQ(s.stddev, expected.stddev);
  }
  for (const auto& r : report.runs) {
    EXPECT_GE(r.accuracy, 0.0);
    EXPECT_LE(r.accuracy, 1.0);
    if (r.mode == "base") {
      EXPECT_EQ(r.refined_count, 0);
    }
    if (r.mode == "random") {
      EXPECT_EQ(r.fallback_count, 0);
    }
  }
  EXPECT_FALSE(report.architecture_note.empty());
}

TEST(Ablation, IndependentOfThreadCount) {
  const std::vector<SelectionMode> modes{SelectionMode::top1, SelectionMode::sim};
  const std::vector<std::uint64_t> seeds{5, 6};
  auto in = mock().inputs;
  in.threads = 1;
  const auto serial = run_ablation(in, modes, seeds, false);
  in.threads = 3;
  const auto parallel = run_ablation(in, modes, seeds, false);
  EXPECT_EQ(serial.to_json(), parallel.to_json());
  EXPECT_EQ(serial.to_csv(), parallel.to_csv());
}

TEST(Ablation, RejectsMissingInputs) {
  PipelineInputs in;
  const std::vector<SelectionMode> modes{SelectionMode::base};
  const std::vector<std::uint64_t> seeds{1};
  EXPECT_THROW(run_ablation(in, modes, seeds), InvalidArgument);
}

EvalReport handmade_report() {
  EvalReport r;
  r.runs = {{"base", 1, 0.5, 2, 0, 2, 0.1}, {"base", 2, 0.75, 1, 0, 1, 0.2}, {"sim", 1, 1.0 / 3.0, 0, 3, 3, 0.3}};
  r.summaries = {summarize("base", std::vector<double>{0.5, 0.75}),
                 summarize("sim", std::vector<double>{1.0 / 3.0})};
  r.config = {{"ipc", 3}};
  r.architecture_note = "note";
  return r;
}

TEST(EvalReport, JsonRoundTripExcludesTimings) {
  const auto r = handmade_report();
  const auto j = r.to_json();
  EXPECT_EQ(j.dump().find("seconds"), std::string::npos);
  const auto back = EvalReport::from_json(j);
  EXPECT_EQ(back.to_json(), j);
  EXPECT_EQ(*back.accuracy("sim", 1), 1.0 / 3.0);
  EXPECT_FALSE(back.accuracy("sim", 2).has_value());
  EXPECT_EQ(back.summary("base")->mean, 0.625);
  EXPECT_EQ(back.summary("missing"), nullptr);
  EXPECT_EQ(r.timings_json().dump().find("0.3") != std::string::npos, true);
  EXPECT_THROW(EvalReport::from_json(nlohmann::json{{"runs", 3}}), FormatError);
}

TEST(EvalReport, CsvIsExactAndParseable) {
  const auto csv = handmade_report().to_csv();
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "mode,seed,accuracy,fallback_count");
  int rows = 0;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string mode, seed, acc, fb;
    ASSERT_TRUE(std::getline(fields, mode, ','));
    ASSERT_TRUE(std::getline(fields, seed, ','));
    ASSERT_TRUE(std::getline(fields, acc, ','));
    ASSERT_TRUE(std::getline(fields, fb, ','));
    if (mode == "sim") {
      EXPECT_EQ(std::stod(acc), 1.0 / 3.0);
    }
    ++rows;
  }
  EXPECT_EQ(rows, 3);
  const auto table = handmade_report().summary_table();
  EXPECT_NE(table.find("62.50"), std::string::npos);
}

TEST(ParallelFor, VisitsEveryIndexOnceAndPropagatesErrors) {
  for (int threads : {1, 2, 7}) {
    std::vector<std::atomic<int>> hits(50);
    parallel_for(hits.size(), threads, [&](std::size_t i) { ++hits[i]; });
    for (auto& h : hits) EXPECT_EQ(h.load(), 1);
  }
  EXPECT_THROW(parallel_for(10, 3, [](std::size_t i) {
                 if (i == 4) throw NumericError("boom");
               }),
               NumericError);
}

SyntheticSample cand(int predicted, double conf) {
  SyntheticSample s;
  s.intended_label = 0;
  s.predicted_label = predicted;
  s.confidence = conf;
  return s;
}

TEST(FilterMonotone, NestedPassingSets) {
  const std::vector<SyntheticSample> c{cand(0, 0.95), cand(0, 0.75), cand(1, 0.99), cand(0, 0.5)};
  const std::vector<double> betas{0.9, 0.5, 0.7};
  EXPECT_TRUE(filter_is_monotone(c, betas));
  EXPECT_EQ(passing_candidates(c, 0.7), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(passing_candidates(c, 0.9), (std::vector<std::size_t>{0}));
}

TEST(Sensitivity, GridIsCompleteAndFilterMonotone) {
  const std::vector<int> ks{1, 4};
  const std::vector<double> betas{0.5, 0.9};
  const std::vector<std::uint64_t> seeds{1};
  const auto report = run_sensitivity(mock().inputs, ks, betas, seeds);
  ASSERT_EQ(report.rows.size(), 4u);
  EXPECT_EQ(report.monotone_violations, 0);
  EXPECT_GT(report.monotone_checks, 0);
  std::istringstream in(report.to_csv());
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "top_k,beta,seed,accuracy,refined,fallback,initially_defective");
  // Every configuration sees the same initial generation.
  for (const auto& row : report.rows) EXPECT_EQ(row.initially_defective, report.rows[0].initially_defective);
}

}  // namespace
}  // namespace dgd
