// SPDX-License-Identifier: Apache-2.0

#include "rotalab/snapshot.hpp"

#include <bit>
#include <cstdint>
#include <string_view>

#include "rotalab/csv.hpp"
#include "rotalab/error.hpp"

namespace rotalab {

namespace {

constexpr std::string_view kMagic{"ROTL1\0\0\0", 8};

class Writer {
 public:
  void u64(std::uint64_t x) {
    for (int b = 0; b < 8; ++b) out_ += static_cast<char>((x >> (8 * b)) & 0xffu);
  }
  void f64(double x) { u64(std::bit_cast<std::uint64_t>(x)); }
  void vec(std::span<const double> v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  void indices(std::span<const std::size_t> v) {
    u64(v.size());
    for (std::size_t x : v) u64(x);
  }
  void matrix(const DenseMatrix& m) {
    u64(m.rows());
    u64(m.cols());
    for (double x : m.data()) f64(x);
  }
  void raw(std::string_view s) { out_ += s; }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t x = 0;
    for (int b = 0; b < 8; ++b)
      x |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + b])) << (8 * b);
    pos_ += 8;
    return x;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t count(std::size_t element_bytes) {
    const std::uint64_t n = u64();
    if (n > (in_.size() - pos_) / element_bytes) fail("length field exceeds file size");
    return static_cast<std::size_t>(n);
  }
  DenseVector vec() {
    DenseVector v(count(8));
    for (double& x : v) x = f64();
    return v;
  }
  std::vector<std::size_t> indices() {
    std::vector<std::size_t> v(count(8));
    for (std::size_t& x : v) x = static_cast<std::size_t>(u64());
    return v;
  }
  DenseMatrix matrix() {
    const std::uint64_t r = u64();
    const std::uint64_t c = u64();
    if (r != 0 && c > (in_.size() - pos_) / 8 / r) fail("matrix larger than file");
    DenseMatrix m(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
    for (double& x : m.data()) x = f64();
    return m;
  }
  std::string_view raw(std::size_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

  [[noreturn]] static void fail(const std::string& what) {
    throw Error(ErrorKind::io, "corrupt snapshot: " + what);
  }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) fail("unexpected end of data");
  }

  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_snapshot(const Snapshot& snap) {
  const CompiledRotation::Parts& p = snap.rotation.parts();
  Writer w;
  w.raw(kMagic);
  w.u64(static_cast<std::uint64_t>(p.scope));
  w.u64(p.dim);
  w.u64(p.block_dim);
  w.u64(p.omit_permutation_undo ? 1 : 0);

  w.u64(p.pool.size());
  for (const auto& m : p.pool) w.matrix(m);

  w.u64(p.partitions.size());
  for (const auto& part : p.partitions) {
    w.indices(part.indices);
    w.indices(part.permutation.forward());
    w.u64(part.blocks.size());
    for (const auto& b : part.blocks) {
      w.u64(b.offset);
      w.u64(b.pool_index);
    }
  }

  w.u64(p.factors.size());
  for (const auto& f : p.factors) {
    w.u64(f.layer);
    w.u64(f.start);
    w.matrix(f.u);
    w.matrix(f.v);
  }

  w.u64(snap.params ? 1 : 0);
  if (snap.params) w.vec(*snap.params);
  w.u64(snap.state ? 1 : 0);
  if (snap.state) {
    w.vec(snap.state->m);
    w.vec(snap.state->v);
    w.vec(snap.state->momentum_buf);
    w.u64(snap.state->t);
  }
  w.u64(snap.last_update ? 1 : 0);
  if (snap.last_update) w.vec(*snap.last_update);
  w.u64(snap.label.size());
  w.raw(snap.label);
  return w.take();
}

Snapshot decode_snapshot(const std::string& bytes) {
  if (bytes.size() < kMagic.size() || std::string_view(bytes).substr(0, kMagic.size()) != kMagic)
    throw Error(ErrorKind::io, "not a rotalab snapshot (bad magic bytes)");
  Reader r(bytes);
  r.raw(kMagic.size());

  CompiledRotation::Parts p;
  const std::uint64_t scope = r.u64();
  if (scope > static_cast<std::uint64_t>(RotationScope::svd)) Reader::fail("unknown scope");
  p.scope = static_cast<RotationScope>(scope);
  p.dim = static_cast<std::size_t>(r.u64());
  p.block_dim = static_cast<std::size_t>(r.u64());
  p.omit_permutation_undo = r.u64() != 0;

  const std::size_t pools = r.count(16);
  for (std::size_t k = 0; k < pools; ++k) p.pool.push_back(r.matrix());

  const std::size_t parts = r.count(24);
  for (std::size_t k = 0; k < parts; ++k) {
    PartitionOperator op;
    op.indices = r.indices();
    try {
      op.permutation = Permutation(r.indices());
    } catch (const Error& e) {
      Reader::fail(e.what());
    }
    const std::size_t blocks = r.count(16);
    for (std::size_t b = 0; b < blocks; ++b) {
      BlockSlot slot;
      slot.offset = static_cast<std::size_t>(r.u64());
      slot.pool_index = static_cast<std::size_t>(r.u64());
      op.blocks.push_back(slot);
    }
    p.partitions.push_back(std::move(op));
  }

  const std::size_t factors = r.count(48);
  for (std::size_t k = 0; k < factors; ++k) {
    SvdFactors f;
    f.layer = static_cast<std::size_t>(r.u64());
    f.start = static_cast<std::size_t>(r.u64());
    f.u = r.matrix();
    f.v = r.matrix();
    p.factors.push_back(std::move(f));
  }

  Snapshot snap;
  try {
    snap.rotation = CompiledRotation(std::move(p));
  } catch (const Error& e) {
    Reader::fail(e.what());
  }
  if (r.u64() != 0) snap.params = r.vec();
  if (r.u64() != 0) {
    OptimizerState s;
    s.m = r.vec();
    s.v = r.vec();
    s.momentum_buf = r.vec();
    s.t = r.u64();
    snap.state = std::move(s);
  }
  if (r.u64() != 0) snap.last_update = r.vec();
  snap.label = std::string(r.raw(r.count(1)));
  if (!r.done()) Reader::fail("trailing bytes");
  const std::size_t d = snap.rotation.dim();
  if (snap.params && snap.params->size() != d) Reader::fail("parameter length mismatch");
  if (snap.state && (snap.state->m.size() != d || snap.state->v.size() != d))
    Reader::fail("optimizer state length mismatch");
  if (snap.last_update && snap.last_update->size() != d) Reader::fail("update length mismatch");
  return snap;
}

void save_snapshot(const std::filesystem::path& path, const Snapshot& snap) {
  write_text_file(path, encode_snapshot(snap));
}

Snapshot load_snapshot(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw Error(ErrorKind::io, "snapshot not found: " + path.string());
  return decode_snapshot(read_text_file(path));
}

}  // namespace rotalab
