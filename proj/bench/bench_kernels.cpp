// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <vector>

#include "rotalab/kernels.hpp"
#include "rotalab/layout.hpp"
#include "rotalab/linalg.hpp"
#include "rotalab/random.hpp"
#include "rotalab/rotation.hpp"

namespace {

using namespace rotalab;

DenseVector random_vector(std::size_t n, RandomStream& rng) {
  DenseVector x(n);
  for (double& v : x) v = rng.normal();
  return x;
}

struct BlockFixture {
  std::vector<DenseMatrix> pool;
  std::vector<kernels::BlockRef> blocks;
  std::vector<kernels::RowTile> tiles;
  DenseVector x;
  DenseVector y;

  BlockFixture(std::size_t dim, std::size_t block) {
    RandomStream rng(1);
    pool.push_back(haar_orthogonal(block, rng));
    for (std::size_t off = 0; off + block <= dim; off += block) blocks.push_back({off, &pool[0]});
    tiles = kernels::make_row_tiles(blocks);
    x = random_vector(dim, rng);
    y.assign(dim, 0.0);
  }
};

void BM_BlocksSerial(benchmark::State& state) {
  BlockFixture f(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  for (auto _ : state) {
    kernels::apply_blocks_serial(f.blocks, f.x, f.y, false);
    benchmark::DoNotOptimize(f.y.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(1));
}

void BM_BlocksParallel(benchmark::State& state) {
  BlockFixture f(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  for (auto _ : state) {
    kernels::apply_blocks_parallel(f.blocks, f.tiles, f.x, f.y, false);
    benchmark::DoNotOptimize(f.y.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(1));
}

void BM_MatvecSerial(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  RandomStream rng(2);
  const DenseMatrix a = gaussian_matrix(n, n, rng);
  const DenseVector x = random_vector(n, rng);
  DenseVector y(n);
  for (auto _ : state) {
    kernels::matvec_serial(a, x, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}

void BM_MatvecParallel(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  RandomStream rng(2);
  const DenseMatrix a = gaussian_matrix(n, n, rng);
  const DenseVector x = random_vector(n, rng);
  DenseVector y(n);
  for (auto _ : state) {
    kernels::matvec_parallel(a, x, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}

void BM_CompiledGlobal(benchmark::State& state, kernels::Exec exec) {
  const auto d = static_cast<std::size_t>(state.range(0));
  ParamLayout layout;
  layout.add_vector("w", d);
  RotationSpec spec;
  spec.scope = RotationScope::global;
  spec.block_dim = 256;
  RandomStream rng(3);
  const CompiledRotation rot = compile(spec, layout, rng);
  const DenseVector x = random_vector(d, rng);
  for (auto _ : state) benchmark::DoNotOptimize(rot.apply(x, exec));
  state.SetItemsProcessed(state.iterations() * state.range(0) * 256);
}

}  // namespace

BENCHMARK(BM_BlocksSerial)->Args({1 << 14, 64})->Args({1 << 16, 256})->Args({1 << 18, 768});
BENCHMARK(BM_BlocksParallel)->Args({1 << 14, 64})->Args({1 << 16, 256})->Args({1 << 18, 768});
BENCHMARK(BM_MatvecSerial)->Arg(256)->Arg(1024)->Arg(2048);
BENCHMARK(BM_MatvecParallel)->Arg(256)->Arg(1024)->Arg(2048);
BENCHMARK_CAPTURE(BM_CompiledGlobal, serial, kernels::Exec::serial)->Arg(1 << 16);
BENCHMARK_CAPTURE(BM_CompiledGlobal, parallel, kernels::Exec::parallel)->Arg(1 << 16);

BENCHMARK_MAIN();
