#include <gtest/gtest.h>

#include "miras/chunked.hpp"
#include "miras/verify.hpp"

using namespace miras;

namespace {
Stream make_stream(std::uint64_t seed, std::size_t T, std::size_t d, bool constant = false) {
  Rng rng(seed, 0x5e);
  Stream st;
  for (std::size_t t = 0; t < T; ++t) {
    st.keys.push_back(rng.unit_vector(d));
    st.values.push_back(rng.uniform_tensor(Dims{d}, -0.5, 0.5));
    Signals s;
    if (constant) {
      s = Signals::constant(1.0, 0.2);
    } else {
      s.alpha = rng.uniform_tensor(Dims{d}, 0.8, 1.0);
      s.eta = Tensor::scalar(rng.uniform(0.05, 0.4));
    }
    st.signals.push_back(s);
  }
  return st;
}

double boundary_gap(const ChunkTrace& a, const ChunkTrace& b) {
  EXPECT_EQ(a.boundaries.size(), b.boundaries.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.boundaries.size(); ++i)
    worst = std::max(worst, verify::max_state_diff(a.boundaries[i], b.boundaries[i]));
  return worst;
}
}  // namespace

TEST(Stale, UnitChunkIsSequentialBitForBit) {
  for (const auto& spec : {MirasSpec::moneta(), MirasSpec::yaad(), MirasSpec::l2_decay(), MirasSpec::memora()}) {
    const Stream st = make_stream(1, 30, 4);
    EXPECT_EQ(stale_sequential(spec, st, 1, 0).final_state.params(), sequential(spec, st, 0).params()) << spec.name;
  }
}

TEST(Stale, OneChunkUsesInitialStateEverywhere) {
  const Stream st = make_stream(2, 10, 3, true);
  const MemoryState s = stale_sequential(MirasSpec::l2_decay(), st, 64, 0).final_state;
  // W0 = 0, α = 1: every gradient is -v k^T.
  Tensor expect(Dims{3, 3});
  for (std::size_t t = 0; t < 10; ++t) expect += outer(st.values[t].data(), st.keys[t].data()) * 0.2;
  EXPECT_LE(max_abs_diff(s.params(), expect), 1e-15);
}

TEST(Stale, BoundaryCount) {
  const Stream st = make_stream(3, 10, 3);
  EXPECT_EQ(stale_sequential(MirasSpec::l2_decay(), st, 4, 0).boundaries.size(), 3u);
}

TEST(Batched, L2FiveChunks) {
  const Stream st = make_stream(4, 20, 5);
  const MirasSpec spec = MirasSpec::l2_decay();
  const auto a = stale_sequential(spec, st, 4, 0), b = chunked_batched(spec, st, 4, 0);
  EXPECT_EQ(b.boundaries.size(), 5u);
  EXPECT_LE(boundary_gap(a, b), 1e-12);
}

TEST(Batched, SmoothLpCubic) {
  const Stream st = make_stream(5, 32, 4);
  MirasSpec spec = MirasSpec::moneta(3.0, 2.0);
  spec.bias.smooth = SmoothCfg{};
  EXPECT_LE(boundary_gap(stale_sequential(spec, st, 8, 0), chunked_batched(spec, st, 8, 0)), 1e-10);
}

TEST(Batched, MonetaQFourNormalizesOncePerChunk) {
  const Stream st = make_stream(6, 32, 4);
  const MirasSpec spec = MirasSpec::moneta(3.0, 4.0);
  EXPECT_LE(boundary_gap(stale_sequential(spec, st, 8, 0), chunked_batched(spec, st, 8, 0)), 1e-10);
}

TEST(Batched, ConstantSignalsExplicitMatrixForm) {
  const std::size_t d = 4, b = 4;
  const Stream st = make_stream(7, 8, d, true);
  const auto tr = chunked_batched(MirasSpec::l2_decay(), st, b, 0);
  Tensor w(Dims{d, d});
  for (std::size_t c = 0; c < 8; c += b) {
    Tensor upd(Dims{d, d});
    for (std::size_t t = c; t < c + b; ++t) {
      Tensor r = matvec(w, st.keys[t].data());
      r -= st.values[t];
      upd += outer(r.data(), st.keys[t].data());
    }
    w = w - upd * 0.2;
    EXPECT_LE(max_abs_diff(tr.boundaries[c / b].params(), w), 1e-15);
  }
}

TEST(Batched, MlpSingleChunk) {
  MirasSpec spec = MirasSpec::l2_decay();
  spec.memory.kind = MemoryKind::kMlp;
  spec.memory.expansion = 2;
  spec.memory.init_std = 0.3;
  const Stream st = make_stream(8, 8, 4);
  EXPECT_LE(boundary_gap(stale_sequential(spec, st, 8, 2), chunked_batched(spec, st, 8, 2)), 1e-12);
}

TEST(Batched, RejectsUnsupported) {
  const Stream st = make_stream(9, 4, 3);
  EXPECT_THROW(chunked_batched(MirasSpec::memora(), st, 2, 0), ContractError);
  MirasSpec m = MirasSpec::l2_decay();
  m.learner = InnerLearner::momentum(0.5);
  EXPECT_THROW(chunked_batched(m, st, 2, 0), ContractError);
  EXPECT_THROW(chunked_batched(MirasSpec::l2_decay(), st, 0, 0), ContractError);
}

TEST(MemoraChunks, IdentityBoundary) {
  MirasSpec spec = MirasSpec::memora();
  MirasModel m(spec, 3, 3, 0);
  MemoryState st = m.state();
  const Tensor before = st.params();
  memora_chunk_boundary(st, spec.gate, spec.bias, std::vector<double>(3, 0.0), std::vector<double>(3, 0.0),
                        Signals::constant(1.0, 0.5));
  EXPECT_LE(max_abs_diff(st.params(), before), 1e-15);
}

TEST(MemoraChunks, UnitChunksAreSequential) {
  const Stream st = make_stream(10, 20, 4);
  const MirasSpec spec = MirasSpec::memora();
  EXPECT_EQ(memora_chunked(spec, st, 1, 0).final_state.params(), sequential(spec, st, 0).params());
}

TEST(MemoraChunks, BoundariesOnSimplex) {
  const Stream st = make_stream(11, 64, 4);
  for (const auto& s : memora_chunked(MirasSpec::memora(), st, 4, 0).boundaries) {
    const Tensor& w = s.params();
    for (std::size_t r = 0; r < 4; ++r) {
      double sum = 0.0;
      for (std::size_t c = 0; c < 4; ++c) {
        sum += w(r, c);
        EXPECT_GT(w(r, c), 0.0);
      }
      EXPECT_NEAR(sum, 1.0, 1e-9);
    }
  }
}

TEST(Staleness, ReportedPerChunkSize) {
  const Stream st = make_stream(12, 64, 4);
  EXPECT_EQ(staleness_gap(MirasSpec::l2_decay(), st, 1, 0), 0.0);
  for (std::size_t b : {4u, 16u}) {
    const double g = staleness_gap(MirasSpec::l2_decay(), st, b, 0);
    EXPECT_TRUE(std::isfinite(g));
    EXPECT_GT(g, 0.0);
  }
}
