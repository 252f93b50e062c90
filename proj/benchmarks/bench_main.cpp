#include <benchmark/benchmark.h>

#include "augsynth/augcond.hpp"
#include "augsynth/generator/denoiser.hpp"
#include "augsynth/harness/metrics.hpp"
#include "augsynth/nn/layers.hpp"
#include "augsynth/rng.hpp"
#include "augsynth/trainer.hpp"

using namespace augsynth;

namespace {

nn::Matrix noise(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  nn::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(rng.normal());
  return m;
}

void BM_Conv2dForward(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  Rng rng(1);
  nn::Conv2d conv(16, 16, 3, 28, 28, rng);
  const auto x = noise(batch, 16 * 28 * 28, 2);
  for (auto _ : state) benchmark::DoNotOptimize(conv.forward(x));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_Conv2dForward)->Arg(1)->Arg(16)->Arg(64);

void BM_DenoiserForward(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  gen::DenoiserConfig cfg;
  gen::Denoiser net(cfg, 3);
  const auto x = noise(batch, cfg.pixels(), 4);
  std::vector<int> t(static_cast<std::size_t>(batch), 100);
  gen::DenoiserCondition cond{noise(batch, cfg.embed_dim, 5), std::vector<int>(static_cast<std::size_t>(batch), 0),
                              std::vector<char>(static_cast<std::size_t>(batch), 0)};
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x, t, cond));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_DenoiserForward)->Arg(1)->Arg(2)->Arg(32);

void BM_Fid(benchmark::State& state) {
  const auto d = state.range(0);
  Rng rng(6);
  harness::FeatureMatrix a(2000, d), b(2000, d);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    a.data()[i] = rng.normal();
    b.data()[i] = 0.5 + rng.normal();
  }
  for (auto _ : state) benchmark::DoNotOptimize(harness::fid_score(a, b));
}
BENCHMARK(BM_Fid)->Arg(16)->Arg(64)->Arg(256);

void BM_BalancedSoftmax(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  Rng rng(7);
  std::vector<double> z(k);
  std::vector<std::int64_t> n(k);
  for (std::size_t i = 0; i < k; ++i) {
    z[i] = rng.normal();
    n[i] = 5 + static_cast<std::int64_t>(i);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(balanced_softmax_loss(z, 0, n));
    benchmark::DoNotOptimize(balanced_softmax_grad(z, 0, n));
  }
}
BENCHMARK(BM_BalancedSoftmax)->Arg(10)->Arg(1000);

void BM_CutMixPixel(benchmark::State& state) {
  Image a(28, 28, 1), b(28, 28, 1);
  Rng rng(8);
  for (auto _ : state) benchmark::DoNotOptimize(cutmix_pixel(a, b, 0.6, rng));
}
BENCHMARK(BM_CutMixPixel);

void BM_EmbedCutMixDropout(benchmark::State& state) {
  Rng rng(9);
  EmbeddingVector e1, e2;
  for (int i = 0; i < 64; ++i) {
    e1.values.push_back(static_cast<float>(rng.normal()));
    e2.values.push_back(static_cast<float>(rng.normal()));
  }
  for (auto _ : state) benchmark::DoNotOptimize(dropout_embedding(cutmix_embedding(e1, e2, 0.6, rng), 0.4, rng));
}
BENCHMARK(BM_EmbedCutMixDropout);

}  // namespace
BENCHMARK_MAIN();
