// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>

#include "oracles.hpp"
#include "rotalab/error.hpp"
#include "rotalab/layout.hpp"
#include "rotalab/rotation.hpp"

using namespace rotalab;

namespace {

DenseVector random_vector(std::size_t n, RandomStream& rng) {
  DenseVector x(n);
  for (double& v : x) v = rng.normal();
  return x;
}

ParamLayout mlp_layout() {
  ParamLayout l;
  l.add_matrix("W0", 4, 6).add_vector("b0", 4).add_matrix("W1", 3, 4).add_vector("b1", 3);
  return l;
}

RotationSpec make_spec(RotationScope scope, std::size_t block = 768) {
  RotationSpec spec;
  spec.scope = scope;
  spec.block_dim = block;
  return spec;
}

const RotationScope kRandomScopes[] = {RotationScope::none, RotationScope::global,
                                       RotationScope::layer, RotationScope::output,
                                       RotationScope::input};

}  // namespace

TEST_CASE("layout parsing and queries") {
  const ParamLayout l = ParamLayout::parse("W0:4x8,b0:4,E:10x3T");
  CHECK(l.dim() == 32 + 4 + 30);
  CHECK(l.layer_count() == 3);
  CHECK(l.layer(2).transposed);
  CHECK(l.layer(2).out_dim() == 10);
  CHECK(l.layer(2).in_dim() == 3);
  CHECK(l.layer(2).rows == 3);
  CHECK(l.layer_index_of(33) == 1);
  CHECK(l.find("E") == std::optional<std::size_t>(2));
  CHECK(!l.find("nope"));
  CHECK(ParamLayout::parse(l.to_string()) == l);
  CHECK_THROWS_AS(ParamLayout::parse("W0:4x"), Error);
  CHECK_THROWS_AS(ParamLayout::parse("W0:4x8,W0:3"), Error);

  DenseVector flat(l.dim());
  for (std::size_t i = 0; i < flat.size(); ++i) flat[i] = static_cast<double>(i);
  const DenseMatrix w0 = l.extract(flat, 0);
  CHECK(w0.rows() == 4);
  CHECK(w0(1, 2) == 10.0);
  DenseVector copy(l.dim(), 0.0);
  l.store(copy, 0, w0);
  CHECK(std::equal(copy.begin(), copy.begin() + 32, flat.begin()));
}

TEST_CASE("partition_indices examples") {
  ParamLayout one;
  one.add_matrix("W", 3, 2);
  CHECK(partition_indices(one, RotationScope::output) ==
        std::vector<IndexSet>{{0, 1}, {2, 3}, {4, 5}});
  CHECK(partition_indices(one, RotationScope::input) ==
        std::vector<IndexSet>{{0, 2, 4}, {1, 3, 5}});

  ParamLayout two;
  two.add_matrix("A", 2, 2).add_vector("b", 3);
  CHECK(partition_indices(two, RotationScope::layer) ==
        std::vector<IndexSet>{{0, 1, 2, 3}, {4, 5, 6}});
  CHECK(partition_indices(two, RotationScope::global) ==
        std::vector<IndexSet>{{0, 1, 2, 3, 4, 5, 6}});
  CHECK(partition_indices(two, RotationScope::output) ==
        std::vector<IndexSet>{{0, 1}, {2, 3}, {4, 5, 6}});
  CHECK(partition_indices(two, RotationScope::none).empty());
  CHECK(partition_indices(two, RotationScope::svd) == std::vector<IndexSet>{{0, 1, 2, 3}});
  CHECK(partition_indices(two, RotationScope::global, std::vector<std::string>{"b"}) ==
        std::vector<IndexSet>{{4, 5, 6}});
  CHECK_THROWS_AS(partition_indices(two, RotationScope::global, std::vector<std::string>{"zz"}),
                  Error);
}

TEST_CASE("transposed layers swap the neuron axis") {
  ParamLayout t;
  t.add_matrix("E", 2, 3, true);  // stored 3×2: rows are inputs
  CHECK(partition_indices(t, RotationScope::output) == std::vector<IndexSet>{{0, 2, 4}, {1, 3, 5}});
  CHECK(partition_indices(t, RotationScope::input) ==
        std::vector<IndexSet>{{0, 1}, {2, 3}, {4, 5}});
}

TEST_CASE("partitions are disjoint, cover the layout and nest") {
  const ParamLayout l = mlp_layout();
  auto owner = [&](RotationScope s) {
    std::vector<int> own(l.dim(), -1);
    const auto sets = partition_indices(l, s);
    for (std::size_t k = 0; k < sets.size(); ++k)
      for (std::size_t i : sets[k]) {
        REQUIRE(own[i] == -1);
        own[i] = static_cast<int>(k);
      }
    for (int o : own) REQUIRE(o >= 0);
    return own;
  };
  const auto layer = owner(RotationScope::layer);
  const auto global = owner(RotationScope::global);
  for (RotationScope fine : {RotationScope::output, RotationScope::input}) {
    const auto own = owner(fine);
    // same fine set ⇒ same layer set (refinement)
    for (std::size_t i = 0; i < l.dim(); ++i)
      for (std::size_t j = 0; j < l.dim(); ++j)
        if (own[i] == own[j]) REQUIRE(layer[i] == layer[j]);
  }
  for (std::size_t i = 0; i < l.dim(); ++i) CHECK(global[i] == 0);
}

TEST_CASE("compile: none is the identity") {
  RandomStream rng(0);
  const CompiledRotation r = compile(make_spec(RotationScope::none), mlp_layout(), rng);
  CHECK(r.is_identity());
  const DenseVector g = random_vector(r.dim(), rng);
  CHECK(r.apply(g) == g);
  CHECK(r.apply_inverse(g) == g);
}

TEST_CASE("compile: d=10, n=4 gives two blocks and a residual of two") {
  ParamLayout l;
  l.add_vector("w", 10);
  RotationSpec spec;
  spec.scope = RotationScope::global;
  spec.block_dim = 4;
  RandomStream rng(3);
  const CompiledRotation r = compile(spec, l, rng);
  const auto s = r.summary();
  REQUIRE(s.size() == 1);
  CHECK(s[0].full_blocks == 2);
  CHECK(s[0].residual == 2);
  CHECK(r.pool().size() == 2);  // shared 4×4 block and the 2×2 residual
  const DenseMatrix dense = oracle::dense_rotation(r);
  CHECK(orthogonality_residual(dense) < 1e-12);
  for (int t = 0; t < 100; ++t) {
    const DenseVector g = random_vector(10, rng);
    CHECK(oracle::max_abs(r.apply(g), oracle::times(dense, g)) < 1e-12);
  }
}

TEST_CASE("compile: exact division leaves no residual") {
  ParamLayout l;
  l.add_vector("w", 12);
  RotationSpec spec = make_spec(RotationScope::global, 12);
  RandomStream rng(4);
  const CompiledRotation r = compile(spec, l, rng);
  CHECK(r.summary()[0].full_blocks == 1);
  CHECK(r.summary()[0].residual == 0);
  const DenseVector g = random_vector(12, rng);
  CHECK(std::abs(norm2(r.apply(g)) - norm2(g)) < 1e-12 * norm2(g));
}

TEST_CASE("compile: residual of size one is [[1]]") {
  ParamLayout l;
  l.add_vector("w", 9);
  RotationSpec spec = make_spec(RotationScope::global, 4);
  RandomStream rng(5);
  const CompiledRotation r = compile(spec, l, rng);
  CHECK(r.summary()[0].residual == 1);
  bool found = false;
  for (const auto& m : r.pool())
    if (m.rows() == 1) {
      CHECK(m(0, 0) == 1.0);
      found = true;
    }
  CHECK(found);
}

TEST_CASE("compile: fallback when the block exceeds the partition") {
  const ParamLayout l = mlp_layout();
  RotationSpec spec = make_spec(RotationScope::output, 768);
  RandomStream rng(6);
  const CompiledRotation r = compile(spec, l, rng);
  const auto sets = partition_indices(l, RotationScope::output);
  REQUIRE(r.partitions().size() == sets.size());
  for (std::size_t k = 0; k < sets.size(); ++k) {
    CHECK(r.partitions()[k].indices == sets[k]);
    REQUIRE(r.partitions()[k].blocks.size() == 1);
    CHECK(r.pool()[r.partitions()[k].blocks[0].pool_index].rows() == sets[k].size());
  }
}

TEST_CASE("compile: shared vs independent blocks") {
  ParamLayout l;
  l.add_vector("w", 40);
  RandomStream a(7);
  RandomStream b(7);
  RotationSpec shared = make_spec(RotationScope::global, 8);
  RotationSpec indep = shared;
  indep.shared_blocks = false;
  CHECK(compile(shared, l, a).pool().size() == 1);
  CHECK(compile(indep, l, b).pool().size() == 5);
}

TEST_CASE("compile: empty mask selection is an error") {
  ParamLayout l;
  l.add_vector("b", 3);
  RotationSpec spec = make_spec(RotationScope::svd);
  RandomStream rng(1);
  CHECK_THROWS_AS(compile(spec, l, rng), Error);
}

TEST_CASE("compile replays from the seed") {
  const ParamLayout l = mlp_layout();
  for (RotationScope s : kRandomScopes) {
    RandomStream a(11);
    RandomStream b(11);
    RotationSpec spec = make_spec(s, 5);
    const CompiledRotation ra = compile(spec, l, a);
    const CompiledRotation rb = compile(spec, l, b);
    CHECK(ra.pool() == rb.pool());
    CHECK(oracle::max_abs(ra.to_dense(), rb.to_dense()) == 0.0);
  }
}

TEST_CASE("dense-oracle equivalence, round trip, norm and linearity for every scope") {
  RandomStream rng(21);
  for (const char* text : {"W0:4x6,b0:4,W1:3x4,b1:3", "A:5x5", "E:7x3T,b:2", "w:13"}) {
    const ParamLayout l = ParamLayout::parse(text);
    for (RotationScope s : kRandomScopes) {
      for (std::size_t n : {1u, 3u, 4u, 768u}) {
        for (bool omit : {false, true}) {
          RotationSpec spec = make_spec(s, n);
          spec.omit_permutation_undo = omit;
          const CompiledRotation r = compile(spec, l, rng);
          const DenseMatrix dense = oracle::dense_rotation(r);
          CHECK(orthogonality_residual(dense) < 1e-12);
          CHECK(oracle::max_abs(r.to_dense(), dense) < 1e-12);
          for (int t = 0; t < 20; ++t) {
            const DenseVector g = random_vector(l.dim(), rng);
            const DenseVector y = r.apply(g);
            CHECK(oracle::max_abs(y, oracle::times(dense, g)) < 1e-12);
            CHECK(oracle::max_abs(r.apply_inverse(g), oracle::times(oracle::transpose(dense), g)) < 1e-12);
            CHECK(oracle::max_abs(r.apply_inverse(y), g) < 1e-12);
            CHECK(std::abs(norm2(y) - norm2(g)) <= 1e-10 * norm2(g));
          }
          const DenseVector x = random_vector(l.dim(), rng);
          const DenseVector z = random_vector(l.dim(), rng);
          DenseVector comb(l.dim());
          for (std::size_t i = 0; i < comb.size(); ++i) comb[i] = 2.5 * x[i] - 0.75 * z[i];
          const DenseVector rx = r.apply(x);
          const DenseVector rz = r.apply(z);
          const DenseVector rc = r.apply(comb);
          for (std::size_t i = 0; i < comb.size(); ++i)
            CHECK(std::abs(rc[i] - (2.5 * rx[i] - 0.75 * rz[i])) < 1e-10);
        }
      }
    }
  }
}

TEST_CASE("90 degree block example") {
  CompiledRotation::Parts p;
  p.scope = RotationScope::global;
  p.dim = 2;
  p.block_dim = 2;
  p.pool.push_back(DenseMatrix::from_rows({{0, -1}, {1, 0}}));
  p.partitions.push_back({{0, 1}, Permutation::identity(2), {{0, 0}}});
  const CompiledRotation r(std::move(p));
  const DenseVector y = r.apply(DenseVector{1.0, 0.0});
  CHECK(y == DenseVector{0.0, 1.0});
}

TEST_CASE("serial and parallel application agree bitwise") {
  ParamLayout l;
  l.add_vector("w", 40000);
  RotationSpec spec = make_spec(RotationScope::global, 96);
  RandomStream rng(8);
  const CompiledRotation r = compile(spec, l, rng);
  const DenseVector g = random_vector(l.dim(), rng);
  const DenseVector a = r.apply(g, kernels::Exec::serial);
  const DenseVector b = r.apply(g, kernels::Exec::parallel);
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
  const DenseVector ia = r.apply_inverse(g, kernels::Exec::serial);
  const DenseVector ib = r.apply_inverse(g, kernels::Exec::parallel);
  CHECK(std::memcmp(ia.data(), ib.data(), ia.size() * sizeof(double)) == 0);
}

TEST_CASE("copies keep working after the source is destroyed") {
  ParamLayout l;
  l.add_vector("w", 20);
  RandomStream rng(9);
  DenseVector g = random_vector(20, rng);
  DenseVector expected;
  CompiledRotation copy;
  {
    const CompiledRotation r = compile(make_spec(RotationScope::global, 6), l, rng);
    expected = r.apply(g);
    copy = r;
  }
  CHECK(copy.apply(g) == expected);
}

TEST_CASE("length mismatch is an error") {
  ParamLayout l;
  l.add_vector("w", 5);
  RandomStream rng(1);
  const CompiledRotation r = compile(make_spec(RotationScope::global, 2), l, rng);
  CHECK_THROWS_AS(r.apply(DenseVector(4)), Error);
}

TEST_CASE("dense wrapper") {
  RandomStream rng(10);
  const DenseMatrix q = haar_orthogonal(6, rng);
  const CompiledRotation r = CompiledRotation::dense(q);
  const DenseVector g = random_vector(6, rng);
  CHECK(oracle::max_abs(r.apply(g), oracle::times(q, g)) < 1e-14);
}

TEST_CASE("svd scope: identity until refreshed, then diagonalizes") {
  ParamLayout l;
  l.add_matrix("W0", 8, 6).add_vector("b0", 8).add_matrix("W1", 3, 8);
  RandomStream rng(12);
  CompiledRotation r = compile(make_spec(RotationScope::svd), l, rng);
  REQUIRE(r.factors().size() == 2);
  const DenseVector g = random_vector(l.dim(), rng);
  CHECK(oracle::max_abs(r.apply(g), g) < 1e-15);

  r = svd_refresh(r, l, g);
  CHECK(svd_offdiagonal_ratio(r, l, g) < 1e-8);
  const DenseMatrix dense = oracle::dense_svd_rotation(r);
  CHECK(orthogonality_residual(dense) < 1e-10);
  const DenseVector y = r.apply(g);
  CHECK(oracle::max_abs(y, oracle::times(dense, g)) < 1e-12);
  CHECK(oracle::max_abs(r.apply_inverse(y), g) < 1e-12);
  // bias entries untouched
  for (std::size_t i = 48; i < 56; ++i) CHECK(y[i] == g[i]);
}

TEST_CASE("svd_refresh examples") {
  ParamLayout l;
  l.add_matrix("W", 2, 2);
  RandomStream rng(0);
  const CompiledRotation r0 = compile(make_spec(RotationScope::svd), l, rng);

  const CompiledRotation rd = svd_refresh(r0, l, DenseVector{3, 0, 0, 2});
  const DenseVector y = rd.apply(DenseVector{3, 0, 0, 2});
  CHECK(std::abs(y[0] - 3.0) < 1e-15);
  CHECK(std::abs(y[3] - 2.0) < 1e-15);
  CHECK(y[1] == 0.0);
  CHECK(y[2] == 0.0);

  const CompiledRotation rz = svd_refresh(r0, l, DenseVector{0, 0, 0, 0});
  CHECK(rz.factors()[0].u == DenseMatrix::identity(2));
  CHECK(rz.factors()[0].v == DenseMatrix::identity(2));

  ParamLayout big;
  big.add_matrix("G", 8, 6);
  RandomStream rng2(3);
  const CompiledRotation rb = compile(make_spec(RotationScope::svd), big, rng2);
  const DenseVector g = random_vector(48, rng2);
  CHECK(svd_offdiagonal_ratio(svd_refresh(rb, big, g), big, g) < 1e-8);

  CHECK_THROWS_AS(svd_refresh(compile(make_spec(RotationScope::global, 2), big, rng2), big, g), Error);
}

TEST_CASE("spec validation") {
  CHECK_THROWS_AS(make_spec(RotationScope::global, 0).validate(), Error);
  RotationSpec s = make_spec(RotationScope::svd);
  s.refresh_interval = 0;
  CHECK_THROWS_AS(s.validate(), Error);
  CHECK(parse_scope("output") == RotationScope::output);
  CHECK_THROWS_AS(parse_scope("diagonal"), Error);
}
