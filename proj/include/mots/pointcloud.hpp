#pragma once

// Converts one instance segment into foreground/environment 2D point
// clouds and encodes the per-point data modalities: offsets from the
// segment center, color, semantic one-hots, and the sinusoidal position
// embedding of the enlarged crop.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <vector>

#include "mots/common.hpp"
#include "mots/image.hpp"
#include "mots/mask.hpp"

namespace mots {

inline constexpr int kPositionDims = 64;  // 4 box scalars x 16 dims each

struct SamplerConfig {
    int n_fg = 1000;            // foreground samples per instance
    int n_env = 500;            // environment samples per instance
    double crop_scale = 0.2;    // bbox enlargement factor k
    int num_classes = 2;        // Z, semantic classes including background
    uint64_t rng_seed = 0;
    bool normalize = true;      // offsets / crop diagonal, colors / 255

    void validate() const {
        if (n_fg < 1 || n_env < 1) throw Error("sampler: point counts must be >= 1");
        if (num_classes < 2) throw Error("sampler: need at least 2 classes");
        if (crop_scale < 0) throw Error("sampler: crop scale must be >= 0");
    }
};

struct FgPoint {
    double u = 0, v = 0;        // pixel coordinates (column, row)
    double r = 0, g = 0, b = 0; // raw 0..255 channel values
    bool operator==(const FgPoint&) const = default;
};

struct EnvPoint {
    double u = 0, v = 0;
    double r = 0, g = 0, b = 0;
    int class_id = 1;
    bool operator==(const EnvPoint&) const = default;
};

struct PointCloudPair {
    std::vector<FgPoint> foreground;
    std::vector<EnvPoint> environment;
    double center_u = 0, center_v = 0;  // mean of sampled foreground coords
    BBox crop;                          // enlarged, clipped bbox
    int image_width = 0, image_height = 0;
    bool env_empty = false;  // crop had no off-segment pixel; sentinel used

    bool operator==(const PointCloudPair&) const = default;
};

struct ModalityTensors {
    // Points are stored as columns. Foreground rows: offset u, offset v,
    // R, G, B. Environment rows: the same five plus Z one-hot rows.
    Eigen::MatrixXd fg_features;
    Eigen::MatrixXd env_features;
    Eigen::VectorXd position_embedding;
};

/// Uniform sampling with replacement from the segment (foreground) and
/// from the enlarged crop minus the segment (environment). Draw order is
/// foreground first, then environment, one index per point.
inline PointCloudPair sample_points(const Image& image, const ClassMap& class_map,
                                    const InstanceObservation& obs, const SamplerConfig& cfg) {
    cfg.validate();
    if (image.width() != obs.mask.width || image.height() != obs.mask.height ||
        class_map.width() != obs.mask.width || class_map.height() != obs.mask.height)
        throw DimensionMismatch("sample_points: image/class_map/mask dimensions differ");

    BBox tight = tight_bbox(obs.mask);  // throws EmptyMask
    PointCloudPair pc;
    pc.crop = enlarge_bbox(tight, cfg.crop_scale, image.width(), image.height());
    pc.image_width = image.width();
    pc.image_height = image.height();

    // Mark segment pixels within the crop; everything else in the crop is
    // environment, including pixels of other instances.
    Grid<uint8_t> on_segment(pc.crop.width(), pc.crop.height(), 0);
    std::vector<std::pair<int, int>> segment_pixels;
    uint64_t index = 0;
    bool value = false;
    for (uint32_t c : obs.mask.counts) {
        if (value) {
            for (uint32_t j = 0; j < c; ++j) {
                uint64_t flat = index + j;
                int x = static_cast<int>(flat / obs.mask.height);
                int y = static_cast<int>(flat % obs.mask.height);
                segment_pixels.emplace_back(x, y);
                on_segment.at(x - pc.crop.x0, y - pc.crop.y0) = 1;
            }
        }
        index += c;
        value = !value;
    }

    std::vector<std::pair<int, int>> env_pixels;
    env_pixels.reserve(static_cast<size_t>(pc.crop.width()) * pc.crop.height() -
                       segment_pixels.size());
    for (int y = pc.crop.y0; y < pc.crop.y1; ++y)
        for (int x = pc.crop.x0; x < pc.crop.x1; ++x)
            if (!on_segment.at(x - pc.crop.x0, y - pc.crop.y0)) env_pixels.emplace_back(x, y);

    Rng rng(cfg.rng_seed);

    pc.foreground.resize(cfg.n_fg);
    double sum_u = 0, sum_v = 0;
    for (int i = 0; i < cfg.n_fg; ++i) {
        auto [x, y] = segment_pixels[uniform_index(rng, segment_pixels.size())];
        Rgb px = image.at(x, y);
        pc.foreground[i] = FgPoint{double(x), double(y), double(px.r), double(px.g), double(px.b)};
        sum_u += x;
        sum_v += y;
    }
    pc.center_u = sum_u / cfg.n_fg;
    pc.center_v = sum_v / cfg.n_fg;

    pc.environment.resize(cfg.n_env);
    if (env_pixels.empty()) {
        // Segment fills the whole crop. Repeat the crop's top-left pixel so
        // downstream shapes stay fixed, and flag the degenerate case.
        pc.env_empty = true;
        int x = pc.crop.x0, y = pc.crop.y0;
        Rgb px = image.at(x, y);
        EnvPoint sentinel{double(x), double(y), double(px.r), double(px.g), double(px.b),
                          int(class_map.at(x, y))};
        for (int i = 0; i < cfg.n_env; ++i) pc.environment[i] = sentinel;
    } else {
        for (int i = 0; i < cfg.n_env; ++i) {
            auto [x, y] = env_pixels[uniform_index(rng, env_pixels.size())];
            Rgb px = image.at(x, y);
            pc.environment[i] = EnvPoint{double(x), double(y), double(px.r), double(px.g),
                                         double(px.b), int(class_map.at(x, y))};
        }
    }
    return pc;
}

/// Per-point offsets from the foreground center (environment offsets are
/// measured from the same foreground center). When normalize is set both
/// are divided by the crop diagonal.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd>
encode_offsets(const PointCloudPair& pc, bool normalize = true) {
    double scale = normalize ? 1.0 / pc.crop.diagonal() : 1.0;
    Eigen::MatrixXd fg(2, pc.foreground.size()), env(2, pc.environment.size());
    for (size_t i = 0; i < pc.foreground.size(); ++i) {
        fg(0, i) = (pc.foreground[i].u - pc.center_u) * scale;
        fg(1, i) = (pc.foreground[i].v - pc.center_v) * scale;
    }
    for (size_t i = 0; i < pc.environment.size(); ++i) {
        env(0, i) = (pc.environment[i].u - pc.center_u) * scale;
        env(1, i) = (pc.environment[i].v - pc.center_v) * scale;
    }
    return {fg, env};
}

/// One-hot class rows for the environment points, Z rows per point.
inline Eigen::MatrixXd encode_category(const PointCloudPair& pc, int num_classes) {
    Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(num_classes, pc.environment.size());
    for (size_t i = 0; i < pc.environment.size(); ++i) {
        int c = pc.environment[i].class_id;
        if (c < 1 || c > num_classes)
            throw ClassOutOfRange("environment class id " + std::to_string(c) +
                                  " outside [1, " + std::to_string(num_classes) + "]");
        onehot(c - 1, i) = 1.0;
    }
    return onehot;
}

/// Sinusoidal embedding of the crop box. The four coordinates are
/// normalized by the image dimensions; each expands to 16 dims,
/// interleaved sin/cos over 8 geometrically spaced wavelengths.
inline Eigen::VectorXd encode_position(const BBox& box, int image_width, int image_height) {
    double coords[4] = {double(box.x0) / image_width, double(box.y0) / image_height,
                        double(box.x1) / image_width, double(box.y1) / image_height};
    Eigen::VectorXd out(kPositionDims);
    int k = 0;
    for (double p : coords) {
        for (int j = 0; j < 8; ++j) {
            double wavelength = std::pow(10000.0, (2.0 * j) / 16.0);
            out[k++] = std::sin(p / wavelength);
            out[k++] = std::cos(p / wavelength);
        }
    }
    return out;
}

/// Assembles the network inputs for one instance.
inline ModalityTensors encode_modalities(const PointCloudPair& pc, const SamplerConfig& cfg) {
    auto [fg_off, env_off] = encode_offsets(pc, cfg.normalize);
    Eigen::MatrixXd onehot = encode_category(pc, cfg.num_classes);
    double color_scale = cfg.normalize ? 1.0 / 255.0 : 1.0;

    ModalityTensors mod;
    mod.fg_features.resize(5, pc.foreground.size());
    mod.fg_features.topRows(2) = fg_off;
    for (size_t i = 0; i < pc.foreground.size(); ++i) {
        mod.fg_features(2, i) = pc.foreground[i].r * color_scale;
        mod.fg_features(3, i) = pc.foreground[i].g * color_scale;
        mod.fg_features(4, i) = pc.foreground[i].b * color_scale;
    }
    mod.env_features.resize(5 + cfg.num_classes, pc.environment.size());
    mod.env_features.topRows(2) = env_off;
    for (size_t i = 0; i < pc.environment.size(); ++i) {
        mod.env_features(2, i) = pc.environment[i].r * color_scale;
        mod.env_features(3, i) = pc.environment[i].g * color_scale;
        mod.env_features(4, i) = pc.environment[i].b * color_scale;
    }
    mod.env_features.bottomRows(cfg.num_classes) = onehot;
    mod.position_embedding = encode_position(pc.crop, pc.image_width, pc.image_height);
    return mod;
}

}  // namespace mots
