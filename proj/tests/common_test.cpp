#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "mots/common.hpp"

using namespace mots;

namespace {

TEST(UniformIndex, CoversRangeWithoutBias) {
    Rng rng(1);
    std::vector<int> hits(7, 0);
    for (int i = 0; i < 70000; ++i) ++hits[uniform_index(rng, 7)];
    for (int h : hits) {
        EXPECT_GT(h, 9000);
        EXPECT_LT(h, 11000);
    }
    EXPECT_THROW(uniform_index(rng, 0), Error);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(uniform_index(rng, 1), 0u);
}

TEST(UniformUnit, HalfOpenUnitInterval) {
    Rng rng(2);
    double lo = 1, hi = 0;
    for (int i = 0; i < 10000; ++i) {
        double u = uniform_unit(rng);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
    }
    EXPECT_LT(lo, 0.01);
    EXPECT_GT(hi, 0.99);
}

TEST(DeriveSeed, DistinctStreamsForDistinctInputs) {
    std::set<uint64_t> seen;
    for (uint64_t a = 0; a < 10; ++a)
        for (uint64_t b = 0; b < 10; ++b)
            for (uint64_t c = 0; c < 3; ++c) seen.insert(derive_seed(99, a, b, c));
    EXPECT_EQ(seen.size(), 300u);
    EXPECT_EQ(derive_seed(99, 1, 2, 3), derive_seed(99, 1, 2, 3));
    EXPECT_NE(derive_seed(99, 1, 2, 3), derive_seed(98, 1, 2, 3));
}

TEST(ParallelFor, VisitsEveryIndexOnceAnyThreadCount) {
    for (int threads : {1, 2, 5}) {
        std::vector<int> visits(1000, 0);
        parallel_for(visits.size(), threads, [&](size_t i) { ++visits[i]; });
        EXPECT_EQ(std::accumulate(visits.begin(), visits.end(), 0), 1000);
        EXPECT_EQ(*std::min_element(visits.begin(), visits.end()), 1);
    }
}

TEST(ParallelFor, PropagatesExceptions) {
    EXPECT_THROW(parallel_for(10, 3,
                              [](size_t i) {
                                  if (i == 7) throw Error("boom");
                              }),
                 Error);
}

TEST(Grid, RowMajorAddressing) {
    Grid<int> g(3, 2, 0);
    g.at(2, 0) = 5;
    g.at(0, 1) = 7;
    EXPECT_EQ(g.data()[2], 5);
    EXPECT_EQ(g.data()[3], 7);
    EXPECT_EQ(g.width(), 3);
    EXPECT_EQ(g.height(), 2);
    EXPECT_EQ(g.size(), 6u);
}

TEST(ByteIo, LittleEndianRoundTrip) {
    std::string path = "/tmp/mots_byteio_test.bin";
    {
        auto out = open_output(path, std::ios::binary);
        write_le<uint32_t>(out, 0x01020304u);
        write_le<double>(out, -3.5);
    }
    {
        auto in = open_input(path, std::ios::binary);
        char first;
        in.get(first);
        EXPECT_EQ(first, 0x04);  // little endian
        in.seekg(0);
        EXPECT_EQ(read_le<uint32_t>(in), 0x01020304u);
        EXPECT_EQ(read_le<double>(in), -3.5);
        EXPECT_THROW(read_le<uint32_t>(in), CorruptFile);
    }
    EXPECT_THROW(open_input("/nonexistent/nope.bin"), IoError);
    EXPECT_THROW(open_output("/nonexistent/dir/nope.bin"), IoError);
    std::remove(path.c_str());
}

}  // namespace
