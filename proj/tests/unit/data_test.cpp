#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>

#include "dgd/binary_io.hpp"
#include "dgd/dataset_io.hpp"
#include "dgd/error.hpp"
#include "dgd/rng.hpp"
#include "test_support.hpp"

namespace dgd {
namespace {

namespace fs = std::filesystem;

TEST(ToyData, DefaultSpecCounts) {
  ToyDataSpec spec;
  SeededRng rng(spec.seed);
  const auto [train, test] = synthesize_toy_dataset(spec, rng);
  ASSERT_EQ(train.size(), 2500u);
  ASSERT_EQ(test.size(), 500u);
  EXPECT_EQ(train.image_shape, (Shape{1, 16, 16}));
  for (int c = 0; c < 5; ++c) {
    EXPECT_EQ(train.indices_of_class(c).size(), 500u);
    EXPECT_EQ(test.indices_of_class(c).size(), 100u);
  }
  for (const auto& img : train.images)
    for (float v : img.values()) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
  EXPECT_NO_THROW(train.validate());
}

TEST(ToyData, DeterministicAndSeedSensitive) {
  const auto spec = testing::small_spec();
  SeededRng a(1), b(1), c(2);
  const auto first = synthesize_toy_dataset(spec, a);
  EXPECT_EQ(first, synthesize_toy_dataset(spec, b));
  EXPECT_NE(first.first.images, synthesize_toy_dataset(spec, c).first.images);
  EXPECT_NE(first.first.images, first.second.images);
}

TEST(ToyData, DistinctPatternsPerClass) {
  const auto pats = default_patterns(8);
  std::set<std::pair<double, double>> seen;
  for (const auto& p : pats) EXPECT_TRUE(seen.insert({p.orientation_deg, p.frequency}).second);
  ToyDataSpec spec;
  spec.patterns = {{0, 2}, {0, 2}, {90, 3}, {45, 2}, {135, 3}};
  EXPECT_THROW(spec.validate(), InvalidArgument);
}

TEST(ToyData, InvalidSpecRejected) {
  ToyDataSpec spec;
  spec.num_classes = 0;
  SeededRng rng(1);
  EXPECT_THROW(synthesize_toy_dataset(spec, rng), InvalidArgument);
  spec = ToyDataSpec{};
  spec.train_per_class = 0;
  EXPECT_THROW(synthesize_toy_dataset(spec, rng), InvalidArgument);
}

// Without noise or jitter every image of a class is the same sinusoid up to a
// phase: a least-squares fit on the (sin, cos) basis of the class wave vector
// reproduces it with unit amplitude.
TEST(ToyData, NoiselessImagesArePhaseShiftsOfOneGrating) {
  auto spec = testing::small_spec();
  spec.noise_std = 0.0;
  spec.amplitude_jitter = 0.0;
  SeededRng rng(3);
  const auto [train, test] = synthesize_toy_dataset(spec, rng);
  const auto pats = spec.resolved_patterns();
  const int n = spec.height * spec.width;
  for (int c = 0; c < spec.num_classes; ++c) {
    const double theta = pats[c].orientation_deg * std::numbers::pi / 180.0;
    const double k = 2 * std::numbers::pi * pats[c].frequency / spec.width;
    Eigen::MatrixXd basis(n, 2);
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x) {
        const double u = k * std::cos(theta) * x + k * std::sin(theta) * y;
        basis(y * spec.width + x, 0) = std::sin(u);
        basis(y * spec.width + x, 1) = std::cos(u);
      }
    for (auto idx : train.indices_of_class(c)) {
      Eigen::VectorXd v(n);
      for (int i = 0; i < n; ++i) v(i) = (train.images[idx][i] - 0.5) / 0.4;
      const Eigen::Vector2d coef = basis.colPivHouseholderQr().solve(v);
      EXPECT_NEAR(coef.norm(), 1.0, 1e-5);
      EXPECT_LT((basis * coef - v).cwiseAbs().maxCoeff(), 1e-5);
    }
  }
}

TEST(ToyData, SpecJsonIsStrict) {
  ToyDataSpec spec;
  spec.noise_std = 0.02;
  EXPECT_EQ(ToyDataSpec::from_json(spec.to_json()).to_json(), spec.to_json());
  auto j = spec.to_json();
  j["noise_sdt"] = 0.1;
  try {
    ToyDataSpec::from_json(j);
    FAIL() << "misspelled key accepted";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("noise_sdt"), std::string::npos);
  }
}

TEST(RandomSubset, PerClassWithoutReplacement) {
  const auto spec = testing::small_spec();
  SeededRng rng(4);
  const auto [train, test] = synthesize_toy_dataset(spec, rng);
  SeededRng r1(9), r2(9);
  const auto sub = random_class_subset(train, 10, r1);
  EXPECT_EQ(sub, random_class_subset(train, 10, r2));
  ASSERT_EQ(sub.size(), 30u);
  for (int c = 0; c < 3; ++c) {
    const auto idx = sub.indices_of_class(c);
    ASSERT_EQ(idx.size(), 10u);
    for (std::size_t a = 0; a < idx.size(); ++a)
      for (std::size_t b = a + 1; b < idx.size(); ++b) EXPECT_NE(sub.images[idx[a]], sub.images[idx[b]]);
  }
  EXPECT_THROW(random_class_subset(train, 61, r1), InvalidArgument);
}

class DatasetIo : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("dgd_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                        "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
    SeededRng rng(6);
    ds_ = synthesize_toy_dataset(testing::small_spec(), rng).second;
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path dir_;
  LabeledDataset ds_;
};

TEST_F(DatasetIo, RoundTrip) {
  write_dataset(dir_ / "a.dstl", ds_);
  const auto back = read_dataset(dir_ / "a.dstl");
  EXPECT_EQ(back, ds_);
  EXPECT_EQ(encode_dataset(back), encode_dataset(ds_));
}

TEST_F(DatasetIo, EmptyDatasetRoundTrips) {
  LabeledDataset empty;
  empty.image_shape = {1, 4, 4};
  empty.num_classes = 2;
  empty.class_names = {"a", "b"};
  const auto bytes = encode_dataset(empty);
  EXPECT_EQ(decode_dataset(bytes), empty);
}

TEST_F(DatasetIo, SectionsRoundTrip) {
  const std::map<std::string, std::vector<std::uint8_t>> sections{{"TEST", {1, 2, 3}}, {"ZERO", {}}};
  const auto decoded = decode_container(encode_dataset(ds_, sections));
  EXPECT_EQ(decoded.sections, sections);
  EXPECT_EQ(decoded.dataset, ds_);
}

void expect_format_error(std::span<const std::uint8_t> bytes, const std::string& field) {
  try {
    decode_dataset(bytes);
    FAIL() << "expected a format error mentioning " << field;
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
  }
}

TEST_F(DatasetIo, CorruptionIsReported) {
  auto bytes = encode_dataset(ds_);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  expect_format_error(bad_magic, "magic");

  auto bad_version = bytes;
  bad_version[4] = 99;
  expect_format_error(bad_version, "version");

  expect_format_error(std::span(bytes).first(bytes.size() / 2), "images");
  expect_format_error(std::span(bytes).first(30), "labels");

  auto bad_label = bytes;
  // Header: 4 magic + 2 version + 5 * 4 counts; first label follows.
  bad_label[26] = 0xff;
  bad_label[27] = 0x00;
  expect_format_error(bad_label, "labels[0]");
}

TEST_F(DatasetIo, MissingFileIsFormatError) { EXPECT_THROW(read_dataset(dir_ / "nope.dstl"), FormatError); }

TEST_F(DatasetIo, PgmHasHeaderAndPixels) {
  write_pgm(dir_ / "x.pgm", ds_.images[0]);
  const auto bytes = read_file_bytes(dir_ / "x.pgm");
  const std::string header(bytes.begin(), bytes.begin() + 11);
  EXPECT_EQ(header, "P5\n8 8\n255\n");
  EXPECT_EQ(bytes.size(), 11u + 64u);
}

}  // namespace
}  // namespace dgd
