#include <benchmark/benchmark.h>

#include "dgd/diffusion.hpp"
#include "dgd/kmeans.hpp"
#include "dgd/refine.hpp"
#include "dgd/rng.hpp"

namespace dgd {
namespace {

std::vector<float> random_vector(SeededRng& rng, std::size_t dim) {
  std::vector<float> v(dim);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return v;
}

void BM_SelectReplacement(benchmark::State& state) {
  const auto candidates = static_cast<std::size_t>(state.range(0));
  const auto pool_size = static_cast<std::size_t>(state.range(1));
  SeededRng rng(1);
  NormalPool pool(1);
  for (std::size_t i = 0; i < pool_size; ++i) pool.add(0, random_vector(rng, 64));
  std::vector<SyntheticSample> cands(candidates);
  for (auto& c : cands) {
    c.predicted_label = rng.uniform() < 0.8 ? 0 : 1;
    c.confidence = rng.uniform();
    c.feature = random_vector(rng, 64);
  }
  for (auto _ : state) benchmark::DoNotOptimize(select_replacement(cands, pool, 4, 0.5));
}
BENCHMARK(BM_SelectReplacement)->Args({20, 10})->Args({32, 16})->Args({128, 64});

void BM_Kmeans(benchmark::State& state) {
  SeededRng gen(2);
  std::vector<Point> pts(static_cast<std::size_t>(state.range(0)), Point(32));
  for (auto& p : pts)
    for (auto& x : p) x = gen.normal();
  for (auto _ : state) {
    SeededRng rng(3);
    benchmark::DoNotOptimize(kmeans(pts, 10, KmeansOptions{100, 3}, rng));
  }
}
BENCHMARK(BM_Kmeans)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);

struct BenchDenoiser {
  Mat<float> latents;
  std::vector<int> labels;
  Denoiser denoiser;

  static BenchDenoiser make() {
    SeededRng rng(4);
    Mat<float> latents(32, 200);
    std::vector<int> labels;
    for (int j = 0; j < 200; ++j) {
      labels.push_back(j % 5);
      for (int i = 0; i < 32; ++i) latents(i, j) = static_cast<float>(rng.normal() + j % 5);
    }
    DenoiserConfig cfg;
    cfg.train.epochs = 1;
    SeededRng train_rng(5);
    auto den = train_denoiser(latents, labels, 5, cfg, train_rng);
    return {std::move(latents), std::move(labels), std::move(den)};
  }
};

const BenchDenoiser& bench_denoiser() {
  static const BenchDenoiser d = BenchDenoiser::make();
  return d;
}

void BM_Img2Img(benchmark::State& state) {
  const auto& d = bench_denoiser();
  const auto batch = static_cast<Eigen::Index>(state.range(0));
  const Mat<float> protos = d.latents.leftCols(batch);
  const std::vector<int> labels(d.labels.begin(), d.labels.begin() + batch);
  for (auto _ : state) {
    std::vector<SeededRng> rngs;
    for (Eigen::Index i = 0; i < batch; ++i) rngs.emplace_back(static_cast<std::uint64_t>(i));
    benchmark::DoNotOptimize(
        sample_img2img_batch(d.denoiser, d.denoiser.schedule(), protos, labels, 0.7, 10.0, rngs));
  }
}

void BM_PredictNoise(benchmark::State& state) {
  const auto& d = bench_denoiser();
  const auto batch = static_cast<Eigen::Index>(state.range(0));
  const Mat<float> z = d.denoiser.normalize(d.latents.leftCols(batch));
  const std::vector<int> t(static_cast<std::size_t>(batch), 100);
  const std::vector<int> labels(d.labels.begin(), d.labels.begin() + batch);
  for (auto _ : state) benchmark::DoNotOptimize(d.denoiser.predict_noise(z, t, labels));
}
BENCHMARK(BM_PredictNoise)->Arg(1)->Arg(40);

BENCHMARK(BM_Img2Img)->Arg(1)->Arg(20)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace dgd

BENCHMARK_MAIN();
