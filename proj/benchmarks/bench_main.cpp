#include <benchmark/benchmark.h>

#include "maeday/eval.hpp"

using namespace maeday;

namespace {

Image random_image(std::size_t size, Rng& rng) {
  Image img({size, size, 3});
  for (auto& v : img.values()) v = static_cast<float>(rng.uniform());
  return img;
}

void BM_Reconstruct(benchmark::State& state) {
  MaeModel<float> model(ModelConfig{}, 1);
  Rng rng(2);
  const auto img = random_image(64, rng);
  const auto mask = sample_mask(64, 0.75, rng);
  for (auto _ : state) benchmark::DoNotOptimize(model.reconstruct(img, mask));
}
BENCHMARK(BM_Reconstruct)->Unit(benchmark::kMillisecond);

void BM_Score(benchmark::State& state) {
  MaeModel<float> model(ModelConfig{}, 1);
  Rng rng(3);
  const auto img = random_image(64, rng);
  ScoreOptions opt;
  opt.n_repetitions = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    Rng r(4);
    benchmark::DoNotOptimize(score(model, img, opt, r));
  }
}
BENCHMARK(BM_Score)->Arg(1)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_ErrorMap(benchmark::State& state) {
  const auto size = static_cast<std::size_t>(state.range(0));
  Rng rng(5);
  const auto a = random_image(size, rng), b = random_image(size, rng);
  const auto kernel = gaussian_kernel(7, 1.4);
  for (auto _ : state) benchmark::DoNotOptimize(error_map(a, b, kernel));
}
BENCHMARK(BM_ErrorMap)->Arg(64)->Arg(224);

void BM_RocAuc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(6);
  std::vector<double> s(n);
  std::vector<int> l(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = rng.normal();
    l[i] = static_cast<int>(i % 2);
  }
  for (auto _ : state) benchmark::DoNotOptimize(roc_auc(s, l));
}
BENCHMARK(BM_RocAuc)->Arg(64)->Arg(1 << 18);

void BM_PretrainStep(benchmark::State& state) {
  MaeModel<float> model(ModelConfig{}, 7);
  std::vector<Image> corpus{render_texture(TextureFamily::stripes, 64, 1, 0)};
  PretrainConfig cfg;
  cfg.steps = 1;
  cfg.batch_size = static_cast<std::size_t>(state.range(0));
  Rng rng(8);
  for (auto _ : state) benchmark::DoNotOptimize(pretrain(model, corpus, cfg, rng));
}
BENCHMARK(BM_PretrainStep)->Arg(16)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
