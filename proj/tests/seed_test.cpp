#include <gtest/gtest.h>

#include <cstdio>

#include "mots/seed.hpp"

using namespace mots;

namespace {

SeedMap random_map(Rng& rng, int w, int h) {
    SeedMap map(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) map.at(x, y) = uniform_unit(rng);
    return map;
}

TEST(Warp, ZeroFlowIsBitExactIdentity) {
    Rng rng(1);
    SeedMap map = random_map(rng, 9, 7);
    SeedMap out = warp(map, FlowField(9, 7));
    EXPECT_EQ(out, map);
}

TEST(Warp, ConstantMapStaysConstant) {
    Rng rng(2);
    SeedMap map(6, 5, 0.375);
    FlowField flow(6, 5);
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 6; ++x) {
            flow.du.at(x, y) = uniform_range(rng, -4, 4);
            flow.dv.at(x, y) = uniform_range(rng, -4, 4);
        }
    SeedMap out = warp(map, flow);
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 6; ++x) EXPECT_DOUBLE_EQ(out.at(x, y), 0.375);
}

TEST(Warp, IntegerFlowEqualsDirectShiftWithClamp) {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        int w = 2 + int(uniform_index(rng, 8));
        int h = 2 + int(uniform_index(rng, 8));
        SeedMap map = random_map(rng, w, h);
        FlowField flow(w, h);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                flow.du.at(x, y) = double(int(uniform_index(rng, 7)) - 3);
                flow.dv.at(x, y) = double(int(uniform_index(rng, 7)) - 3);
            }
        SeedMap out = warp(map, flow);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                int sx = std::clamp(x - int(flow.du.at(x, y)), 0, w - 1);
                int sy = std::clamp(y - int(flow.dv.at(x, y)), 0, h - 1);
                EXPECT_EQ(out.at(x, y), map.at(sx, sy));  // bit-exact
            }
    }
}

TEST(Warp, HalfPixelFlowAveragesNeighbors) {
    SeedMap map(2, 1);
    map.at(0, 0) = 0.25;
    map.at(1, 0) = 0.75;
    FlowField flow(2, 1);
    flow.du.at(0, 0) = -0.5;  // sample position 0.5
    SeedMap out = warp(map, flow);
    EXPECT_DOUBLE_EQ(out.at(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(out.at(1, 0), 0.75);
}

TEST(Warp, RejectsMismatchedDimensions) {
    SeedMap map(4, 4, 0.0);
    EXPECT_THROW(warp(map, FlowField(4, 5)), DimensionMismatch);
    FlowField ragged;
    ragged.du = Grid<double>(4, 4, 0.0);
    ragged.dv = Grid<double>(4, 3, 0.0);
    EXPECT_THROW(warp(map, ragged), DimensionMismatch);
}

BinaryMask half_mask(int w, int h) {
    Bitmap dense(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w / 2; ++x) dense.at(x, y) = 1;
    return rle_encode(dense);
}

TEST(ConsistencyLoss, IdenticalMapsGiveZero) {
    Rng rng(4);
    SeedMap map = random_map(rng, 8, 8);
    EXPECT_DOUBLE_EQ(temporal_consistency_loss(map, map, half_mask(8, 8)), 0.0);
}

TEST(ConsistencyLoss, ConstantOffsetGivesSquaredOffset) {
    Rng rng(5);
    SeedMap current = random_map(rng, 8, 8);
    SeedMap warped = current;
    const double c = 0.3;
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) warped.at(x, y) += c;
    EXPECT_NEAR(temporal_consistency_loss(warped, current, half_mask(8, 8)), c * c, 1e-12);
}

TEST(ConsistencyLoss, MatchesBruteForceSum) {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        SeedMap a = random_map(rng, 8, 8);
        SeedMap b = random_map(rng, 8, 8);
        Bitmap fg(8, 8);
        int n = 0;
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x)
                if (uniform_unit(rng) < 0.5) {
                    fg.at(x, y) = 1;
                    ++n;
                }
        if (n == 0) continue;
        double expected = 0;
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x)
                if (fg.at(x, y)) expected += (a.at(x, y) - b.at(x, y)) * (a.at(x, y) - b.at(x, y));
        expected /= n;
        EXPECT_NEAR(temporal_consistency_loss(a, b, rle_encode(fg)), expected, 1e-12);
    }
}

TEST(ConsistencyLoss, IgnoresBackgroundPixels) {
    Rng rng(7);
    SeedMap a = random_map(rng, 8, 8);
    SeedMap b = random_map(rng, 8, 8);
    BinaryMask fg = half_mask(8, 8);
    double before = temporal_consistency_loss(a, b, fg);
    for (int y = 0; y < 8; ++y)
        for (int x = 4; x < 8; ++x) b.at(x, y) = -100.0;  // off the mask
    EXPECT_DOUBLE_EQ(temporal_consistency_loss(a, b, fg), before);
}

TEST(ConsistencyLoss, RejectsEmptyMaskAndBadDims) {
    SeedMap map(8, 8, 0.5);
    EXPECT_THROW(temporal_consistency_loss(map, map, BinaryMask{8, 8, {64}}), EmptyMask);
    EXPECT_THROW(temporal_consistency_loss(map, SeedMap(8, 7, 0.0), half_mask(8, 8)),
                 DimensionMismatch);
    EXPECT_THROW(temporal_consistency_loss(map, map, half_mask(7, 8)), DimensionMismatch);
}

TEST(RasterFiles, SeedMapRoundTripIsBitExact) {
    Rng rng(8);
    SeedMap map = random_map(rng, 5, 3);
    std::string path = "/tmp/mots_seed_test.bin";
    write_seed_map(path, map);
    EXPECT_EQ(read_seed_map(path), map);
    std::remove(path.c_str());
}

TEST(RasterFiles, FlowRoundTripIsBitExact) {
    Rng rng(9);
    FlowField flow(4, 6);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 4; ++x) {
            flow.du.at(x, y) = uniform_range(rng, -10, 10);
            flow.dv.at(x, y) = uniform_range(rng, -10, 10);
        }
    std::string path = "/tmp/mots_flow_test.bin";
    write_flow_field(path, flow);
    FlowField back = read_flow_field(path);
    EXPECT_EQ(back.du, flow.du);
    EXPECT_EQ(back.dv, flow.dv);
    std::remove(path.c_str());
}

TEST(RasterFiles, DetectsCorruption) {
    SeedMap map(3, 3, 0.5);
    std::string path = "/tmp/mots_raster_corrupt.bin";
    write_seed_map(path, map);
    auto bytes = [&] {
        std::ifstream in(path, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
    }();
    std::ofstream(path, std::ios::binary) << bytes.substr(0, bytes.size() - 4);
    EXPECT_THROW(read_seed_map(path), CorruptFile);
    std::ofstream(path, std::ios::binary) << (bytes + "zz");
    EXPECT_THROW(read_seed_map(path), CorruptFile);
    std::string wrong = bytes;
    wrong[0] = 'Q';
    std::ofstream(path, std::ios::binary) << wrong;
    EXPECT_THROW(read_seed_map(path), CorruptFile);
    std::ofstream(path, std::ios::binary) << bytes;
    EXPECT_THROW(read_flow_field(path), CorruptFile);  // channel count mismatch
    EXPECT_NO_THROW(read_seed_map(path));
    std::remove(path.c_str());
}

}  // namespace
