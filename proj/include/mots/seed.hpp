#pragma once

// Temporal consistency of per-pixel seed maps: warp the previous frame's
// map along a flow field (backward bilinear sampling, border clamp) and
// average the squared difference over foreground pixels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "mots/common.hpp"
#include "mots/mask.hpp"

namespace mots {

using SeedMap = Grid<double>;

struct FlowField {
    Grid<double> du;  // horizontal displacement, pixels
    Grid<double> dv;  // vertical displacement, pixels

    FlowField() = default;
    FlowField(int width, int height) : du(width, height, 0.0), dv(width, height, 0.0) {}

    int width() const { return du.width(); }
    int height() const { return du.height(); }
};

/// Backward warp: output(p) samples prev at p - flow(p) bilinearly,
/// clamping out-of-bounds sample positions to the border. Integer sample
/// positions reproduce source pixels exactly.
inline SeedMap warp(const SeedMap& prev, const FlowField& flow) {
    if (flow.du.width() != flow.dv.width() || flow.du.height() != flow.dv.height())
        throw DimensionMismatch("warp: flow channel dimensions differ");
    if (prev.width() != flow.width() || prev.height() != flow.height())
        throw DimensionMismatch("warp: seed map and flow dimensions differ");
    int w = prev.width(), h = prev.height();
    SeedMap out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double sx = std::clamp(x - flow.du.at(x, y), 0.0, double(w - 1));
            double sy = std::clamp(y - flow.dv.at(x, y), 0.0, double(h - 1));
            int x0 = static_cast<int>(std::floor(sx));
            int y0 = static_cast<int>(std::floor(sy));
            int x1 = std::min(x0 + 1, w - 1);
            int y1 = std::min(y0 + 1, h - 1);
            double fx = sx - x0, fy = sy - y0;
            out.at(x, y) = (1 - fx) * (1 - fy) * prev.at(x0, y0) +
                           fx * (1 - fy) * prev.at(x1, y0) +
                           (1 - fx) * fy * prev.at(x0, y1) +
                           fx * fy * prev.at(x1, y1);
        }
    return out;
}

/// Mean squared seed difference over the foreground pixels of fg.
inline double temporal_consistency_loss(const SeedMap& warped, const SeedMap& current,
                                        const BinaryMask& fg) {
    if (warped.width() != current.width() || warped.height() != current.height() ||
        fg.width != warped.width() || fg.height != warped.height())
        throw DimensionMismatch("consistency loss: dimensions differ");
    double sum = 0.0;
    uint64_t n = 0;
    uint64_t index = 0;
    bool value = false;
    for (uint32_t c : fg.counts) {
        if (value) {
            for (uint32_t j = 0; j < c; ++j) {
                uint64_t flat = index + j;
                int x = static_cast<int>(flat / fg.height);
                int y = static_cast<int>(flat % fg.height);
                double d = warped.at(x, y) - current.at(x, y);
                sum += d * d;
                ++n;
            }
        }
        index += c;
        value = !value;
    }
    if (n == 0) throw EmptyMask("consistency loss: empty foreground");
    return sum / double(n);
}

// ---------------------------------------------------------------------------
// Raster files: 4-byte magic, H, W, channels (u32 little endian), then
// row-major float64 samples, channels interleaved per pixel.
// ---------------------------------------------------------------------------

inline constexpr char kRasterMagic[4] = {'R', 'A', 'S', 'T'};

namespace detail {

inline void write_raster_header(std::ostream& out, uint32_t h, uint32_t w, uint32_t channels) {
    out.write(kRasterMagic, sizeof(kRasterMagic));
    write_le<uint32_t>(out, h);
    write_le<uint32_t>(out, w);
    write_le<uint32_t>(out, channels);
}

inline std::pair<uint32_t, uint32_t> read_raster_header(std::istream& in, uint32_t channels,
                                                        const std::string& path) {
    char magic[sizeof(kRasterMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kRasterMagic, sizeof(magic)) != 0)
        throw CorruptFile("not a raster file: " + path);
    uint32_t h = read_le<uint32_t>(in);
    uint32_t w = read_le<uint32_t>(in);
    uint32_t ch = read_le<uint32_t>(in);
    if (h == 0 || w == 0 || h > (1u << 20) || w > (1u << 20))
        throw CorruptFile("bad raster dimensions: " + path);
    if (ch != channels)
        throw CorruptFile("raster channel count " + std::to_string(ch) + ", expected " +
                          std::to_string(channels) + ": " + path);
    return {h, w};
}

inline void require_eof(std::istream& in, const std::string& path) {
    char extra;
    if (in.get(extra)) throw CorruptFile("trailing bytes: " + path);
}

}  // namespace detail

inline void write_seed_map(const std::string& path, const SeedMap& map) {
    auto out = open_output(path, std::ios::binary);
    detail::write_raster_header(out, uint32_t(map.height()), uint32_t(map.width()), 1);
    for (int y = 0; y < map.height(); ++y)
        for (int x = 0; x < map.width(); ++x) write_le<double>(out, map.at(x, y));
    if (!out) throw IoError("short write: " + path);
}

inline SeedMap read_seed_map(const std::string& path) {
    auto in = open_input(path, std::ios::binary);
    auto [h, w] = detail::read_raster_header(in, 1, path);
    SeedMap map(static_cast<int>(w), static_cast<int>(h));
    for (uint32_t y = 0; y < h; ++y)
        for (uint32_t x = 0; x < w; ++x) map.at(int(x), int(y)) = read_le<double>(in);
    detail::require_eof(in, path);
    return map;
}

inline void write_flow_field(const std::string& path, const FlowField& flow) {
    auto out = open_output(path, std::ios::binary);
    detail::write_raster_header(out, uint32_t(flow.height()), uint32_t(flow.width()), 2);
    for (int y = 0; y < flow.height(); ++y)
        for (int x = 0; x < flow.width(); ++x) {
            write_le<double>(out, flow.du.at(x, y));
            write_le<double>(out, flow.dv.at(x, y));
        }
    if (!out) throw IoError("short write: " + path);
}

inline FlowField read_flow_field(const std::string& path) {
    auto in = open_input(path, std::ios::binary);
    auto [h, w] = detail::read_raster_header(in, 2, path);
    FlowField flow(static_cast<int>(w), static_cast<int>(h));
    for (uint32_t y = 0; y < h; ++y)
        for (uint32_t x = 0; x < w; ++x) {
            flow.du.at(int(x), int(y)) = read_le<double>(in);
            flow.dv.at(int(x), int(y)) = read_le<double>(in);
        }
    detail::require_eof(in, path);
    return flow;
}

}  // namespace mots
