#include <gtest/gtest.h>

#include <array>
#include <set>

#include "anchorlab/parallel.hpp"
#include "anchorlab/rng.hpp"

using anchorlab::CounterStream;
using anchorlab::Philox4x32;

// Known-answer vectors published with Random123 (kat_vectors, philox4x32 10 rounds).
TEST(Philox, KnownAnswers) {
  EXPECT_EQ(Philox4x32::block({0, 0, 0, 0}, {0, 0}),
            (Philox4x32::Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
  EXPECT_EQ(Philox4x32::block({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}),
            (Philox4x32::Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
  EXPECT_EQ(Philox4x32::block({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}),
            (Philox4x32::Counter{0xd16cfe09u, 0x94fdcceb, 0x5001e420u, 0x24126ea1u}));
}

TEST(CounterStream, DeterministicAndStreamsDiffer) {
  CounterStream a(42, 0), b(42, 0), c(42, 1), d(43, 0);
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    EXPECT_EQ(va, b.next_u64());
    EXPECT_NE(va, c.next_u64());
    EXPECT_NE(va, d.next_u64());
  }
}

TEST(CounterStream, DoublesInUnitInterval) {
  CounterStream s(1, 2);
  double sum = 0;
  for (int i = 0; i < 100000; ++i) {
    const double v = s.next_double();
    ASSERT_GE(v, 0.0);
    ASSERT_LT(v, 1.0);
    sum += v;
  }
  EXPECT_NEAR(sum / 100000, 0.5, 0.005);
}

TEST(CounterStream, NextBelowCoversSupport) {
  CounterStream s(9, 0);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const auto v = s.next_below(5);
    ASSERT_LT(v, 5u);
    seen.insert(v);
  }
  EXPECT_EQ(seen.size(), 5u);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(s.next_below(1), 0u);
}

TEST(DeriveSeed, DistinctPerIndexAndTag) {
  std::set<std::uint64_t> seeds;
  for (std::uint64_t i = 0; i < 1000; ++i) seeds.insert(anchorlab::derive_seed(7, 1, i));
  for (std::uint64_t i = 0; i < 1000; ++i) seeds.insert(anchorlab::derive_seed(7, 2, i));
  EXPECT_EQ(seeds.size(), 2000u);
}

TEST(Parallel, ChunkResultsIndependentOfWorkers) {
  std::vector<double> values(100003);
  CounterStream s(3, 3);
  for (auto& v : values) v = s.next_double();
  const double one = anchorlab::pairwise_sum(values);
  for (unsigned workers : {1u, 2u, 7u}) {
    std::vector<double> partial(101);
    anchorlab::parallel_chunks(partial.size(), workers, [&](std::size_t c) {
      const std::size_t per = (values.size() + partial.size() - 1) / partial.size();
      const std::size_t b = c * per, e = std::min(values.size(), b + per);
      partial[c] = anchorlab::pairwise_sum(std::span<const double>(values).subspan(b, e - b));
    });
    EXPECT_NEAR(anchorlab::pairwise_sum(partial), one, 1e-9);
  }
}

TEST(Parallel, PropagatesExceptions) {
  EXPECT_THROW(anchorlab::parallel_chunks(10, 4,
                                          [](std::size_t c) {
                                            if (c == 5) throw std::runtime_error("boom");
                                          }),
               std::runtime_error);
}
