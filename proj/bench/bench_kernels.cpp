#include <benchmark/benchmark.h>

#include <vector>

#include "rvit/attack.hpp"
#include "rvit/dataset.hpp"
#include "rvit/kernels.hpp"
#include "rvit/rng.hpp"
#include "rvit/vit.hpp"

using namespace rvit;

namespace {

std::vector<double> filled(std::size_t n, std::uint64_t seed) {
  Stream rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform() - 0.5;
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto a = filled(n * n, 1), b = filled(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if (Parallel) kernels::gemm_parallel(false, false, n, n, n, a.data(), b.data(), c.data(), false);
    else kernels::gemm_serial(false, false, n, n, n, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

BENCHMARK(BM_Gemm<false>)->Name("gemm_serial")->Arg(17)->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm_parallel")->Arg(17)->Arg(64)->Arg(256);

void BM_VitInputGradient(benchmark::State& state) {
  vit::VisionTransformer model(vit::ViTConfig{}, 1);
  auto d = data::generate_shapes_dataset(10, 1);
  for (auto _ : state) benchmark::DoNotOptimize(attack::classifier_input_gradient(model, d.images[0], d.labels[0]));
}
BENCHMARK(BM_VitInputGradient);

void BM_AttackBatch(benchmark::State& state) {
  kernels::set_execution(state.range(0) ? kernels::Exec::parallel : kernels::Exec::serial);
  vit::VisionTransformer model(vit::ViTConfig{}, 1);
  auto d = data::generate_shapes_dataset(20, 1);
  attack::AttackConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(attack::attack_batch(d.images, d.labels, model, cfg));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(d.size()));
  kernels::set_execution(kernels::Exec::parallel);
}
BENCHMARK(BM_AttackBatch)->Name("attack_batch_mi")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
