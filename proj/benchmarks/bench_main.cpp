#include <benchmark/benchmark.h>

#include <cmath>
#include <random>
#include <vector>

#include "gbatc/codec.hpp"
#include "gbatc/field.hpp"
#include "gbatc/guarantee.hpp"
#include "gbatc/nn.hpp"
#include "gbatc/pipeline.hpp"
#include "gbatc/rng.hpp"

namespace {

using namespace gbatc;

std::vector<double> normal_values(std::size_t n, double sigma, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> dist(0.0, sigma);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(gen);
  return v;
}

void BM_Quantize(benchmark::State& state) {
  const auto values = normal_values(static_cast<std::size_t>(state.range(0)), 1.0, 1);
  for (auto _ : state) benchmark::DoNotOptimize(quantize(values, 1.0 / 4096));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Quantize)->Arg(1 << 12)->Arg(1 << 16);

std::vector<std::int64_t> geometric_symbols(std::size_t n) {
  std::mt19937_64 gen(2);
  std::geometric_distribution<int> dist(0.3);
  std::vector<std::int64_t> s(n);
  for (auto& x : s) x = (gen() & 1) ? dist(gen) : -dist(gen);
  return s;
}

void BM_HuffmanBuild(benchmark::State& state) {
  const auto freq = count_frequencies(geometric_symbols(1 << 16));
  for (auto _ : state) benchmark::DoNotOptimize(huffman_build(freq));
}
BENCHMARK(BM_HuffmanBuild);

void BM_HuffmanEncode(benchmark::State& state) {
  const auto symbols = geometric_symbols(static_cast<std::size_t>(state.range(0)));
  const auto book = huffman_build(count_frequencies(symbols));
  for (auto _ : state) benchmark::DoNotOptimize(encode_stream(symbols, book));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_HuffmanEncode)->Arg(1 << 16);

void BM_HuffmanDecode(benchmark::State& state) {
  const auto symbols = geometric_symbols(static_cast<std::size_t>(state.range(0)));
  const auto book = huffman_build(count_frequencies(symbols));
  const auto bits = encode_stream(symbols, book);
  for (auto _ : state) benchmark::DoNotOptimize(decode_stream(bits, book, symbols.size()));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_HuffmanDecode)->Arg(1 << 16);

constexpr std::size_t kDim = 80;

void BM_FitResidualBasis(benchmark::State& state) {
  const auto residuals = normal_values(kDim * 4096, 0.01, 3);
  for (auto _ : state) benchmark::DoNotOptimize(fit_residual_basis(residuals, kDim));
}
BENCHMARK(BM_FitResidualBasis)->Unit(benchmark::kMillisecond);

// range(0) is the residual scale relative to tau; larger means more coefficients kept.
void BM_CorrectBlock(benchmark::State& state, Schedule schedule) {
  const auto basis = to_storage(fit_residual_basis(normal_values(kDim * 1024, 1.0, 4), kDim));
  const double tau = 1e-3 * std::sqrt(double(kDim));
  const double scale = tau * static_cast<double>(state.range(0)) / std::sqrt(double(kDim));
  const auto x = normal_values(kDim, 1.0, 5);
  auto xr = x;
  const auto noise = normal_values(kDim, scale, 6);
  for (std::size_t i = 0; i < kDim; ++i) xr[i] += noise[i];
  const double bin = default_coefficient_bin(tau, kDim);
  CorrectOptions opt;
  opt.schedule = schedule;
  for (auto _ : state) benchmark::DoNotOptimize(correct_block(x, xr, basis, tau, bin, opt));
}
BENCHMARK_CAPTURE(BM_CorrectBlock, stepwise, Schedule::kStepwise)->Arg(1)->Arg(4)->Arg(16);
BENCHMARK_CAPTURE(BM_CorrectBlock, fast, Schedule::kFast)->Arg(1)->Arg(4)->Arg(16);

void BM_Conv3dInfer(benchmark::State& state) {
  using nn::Dim3;
  using nn::LayerSpec;
  nn::Network net({4, 5, 4, 4},
                  {LayerSpec::conv3d(4, 16, Dim3{3, 4, 4}, Dim3{1, 2, 2}, Dim3{1, 1, 1}),
                   LayerSpec::leaky_relu(),
                   LayerSpec::conv3d(16, 32, Dim3{3, 4, 4}, Dim3{1, 2, 2}, Dim3{1, 1, 1})});
  Rng rng(7);
  net.init_glorot(rng);
  const int batch = static_cast<int>(state.range(0));
  nn::Tensor in({batch, 4, 5, 4, 4}, normal_values(std::size_t(batch) * 320, 1.0, 8));
  for (auto _ : state) benchmark::DoNotOptimize(net.infer(in));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_Conv3dInfer)->Arg(64)->Arg(512);

FieldDataset bench_field() {
  SynthSpec spec;
  spec.dims = FieldDims{4, 10, 64, 64};
  return synthesize(spec, 2024);
}

void BM_CompressPca(benchmark::State& state) {
  const auto data = bench_field();
  CompressConfig cfg;
  cfg.predictor = PredictorChoice::parse("pca:4");
  cfg.bound = 1e-3;
  cfg.seed = 7;
  for (auto _ : state) benchmark::DoNotOptimize(compress(data, cfg));
  state.SetBytesProcessed(state.iterations() * std::int64_t(data.values().size() * sizeof(float)));
}
BENCHMARK(BM_CompressPca)->Unit(benchmark::kMillisecond);

void BM_Decompress(benchmark::State& state) {
  const auto data = bench_field();
  CompressConfig cfg;
  cfg.predictor = PredictorChoice::parse("pca:4");
  cfg.bound = 1e-3;
  cfg.seed = 7;
  const auto archive = compress(data, cfg).archive;
  for (auto _ : state) benchmark::DoNotOptimize(decompress(archive));
  state.SetBytesProcessed(state.iterations() * std::int64_t(data.values().size() * sizeof(float)));
}
BENCHMARK(BM_Decompress)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
