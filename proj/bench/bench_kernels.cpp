// Serial reference against OpenMP kernels. Argument 0 selects serial, 1 parallel.

#include "ddvae/blend.hpp"
#include "ddvae/random_field.hpp"
#include "ddvae/rng.hpp"
#include "ddvae/vae.hpp"

#include <benchmark/benchmark.h>

#include <cmath>

using namespace ddvae;

namespace {

Exec exec_of(const benchmark::State &s) { return s.range(0) ? Exec::parallel : Exec::serial; }

void BM_WeightedCovariance(benchmark::State &state) {
  const Grid g(65, 33, {0.0, 2.0, 0.0, 1.0});
  for (auto _ : state) benchmark::DoNotOptimize(weighted_covariance(g, std::sqrt(0.5), 1.5, exec_of(state)));
}
BENCHMARK(BM_WeightedCovariance)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_ElboBatch(benchmark::State &state) {
  VaeArchitecture arch;
  arch.input_dim = 5005;
  arch.latent_dim = 64;
  arch.encoder_hidden = {256, 128};
  arch.decoder_hidden = {128, 256};
  const VaeModel m = make_vae(arch, 1);
  Rng rng(2);
  Eigen::MatrixXd x(arch.input_dim, 64), eps(arch.latent_dim, 64);
  rng.fill_normal(x);
  rng.fill_normal(eps);
  for (auto _ : state) benchmark::DoNotOptimize(elbo_batch(m, x, eps, exec_of(state)));
}
BENCHMARK(BM_ElboBatch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_GenerateDataset(benchmark::State &state) {
  const Grid g(33, 17, {0.0, 2.0, 0.0, 1.0});
  DatasetSpec spec;
  spec.count = 200;
  spec.tau_bins = 8;
  for (auto _ : state) benchmark::DoNotOptimize(generate_dataset(g, spec, exec_of(state)));
}
BENCHMARK(BM_GenerateDataset)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_BlendBatch(benchmark::State &state) {
  const Grid g(129, 65, {0.0, 2.0, 0.0, 1.0});
  const auto dec = decompose(g, {{0.0, 1.1875, 0.0, 1.0}, {0.8125, 2.0, 0.0, 1.0}});
  const PoissonBlender blender(dec);
  Rng rng(3);
  std::vector<Field> x1, x2;
  for (int k = 0; k < 64; ++k) {
    x1.emplace_back(dec.sub(1).local_grid, rng.normal_vector(static_cast<Eigen::Index>(dec.sub(1).local_grid.size())));
    x2.emplace_back(dec.sub(2).local_grid, rng.normal_vector(static_cast<Eigen::Index>(dec.sub(2).local_grid.size())));
  }
  for (auto _ : state) benchmark::DoNotOptimize(blender.blend_batch(x1, x2, exec_of(state)));
}
BENCHMARK(BM_BlendBatch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
