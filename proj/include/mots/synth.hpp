#pragma once

// Synthetic tracking sequences: textured convex shapes under constant
// linear motion in front of a static noisy background. Occlusions are
// resolved by per-object depth, so emitted masks are the visible parts.
// Every draw comes from one generator seeded by the config, making the
// rendered dataset a pure function of the config.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "mots/dataset.hpp"

namespace mots {

struct WorldConfig {
    int width = 192;
    int height = 112;
    int frames = 60;
    int min_objects = 6;
    int max_objects = 12;
    int num_classes = 2;       // class 1 is background, objects use 2..num_classes
    double min_speed = 1.0;    // pixels per frame
    double max_speed = 3.5;
    int min_size = 8;          // object extent in pixels
    int max_size = 18;
    int palette_size = 36;
    bool allow_occlusion = true;
    uint64_t rng_seed = 0;

    void validate() const {
        if (width < 16 || height < 16) throw Error("world: image too small");
        if (frames < 1) throw Error("world: need at least one frame");
        if (min_objects < 1 || max_objects < min_objects) throw Error("world: bad object range");
        if (num_classes < 2) throw Error("world: need at least 2 classes");
        if (min_speed <= 0 || max_speed < min_speed) throw Error("world: bad speed range");
        if (min_size < 3 || max_size < min_size) throw Error("world: bad size range");
        if (palette_size < 2) throw Error("world: palette too small");
    }
};

namespace detail {

inline Rgb hsv_to_rgb(double h, double s, double v) {
    double c = v * s;
    double hp = h / 60.0;
    double m = v - c;
    double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    switch (int(hp) % 6) {
        case 0: r = c; g = x; break;
        case 1: r = x; g = c; break;
        case 2: g = c; b = x; break;
        case 3: g = x; b = c; break;
        case 4: r = x; b = c; break;
        default: r = c; b = x; break;
    }
    auto to8 = [m](double q) { return uint8_t(std::lround((q + m) * 255.0)); };
    return Rgb{to8(r), to8(g), to8(b)};
}

/// Saturated, well-separated base colors; two brightness rings.
inline std::vector<Rgb> make_palette(int size) {
    std::vector<Rgb> palette(size);
    for (int i = 0; i < size; ++i)
        palette[i] = hsv_to_rgb(360.0 * i / size, 0.85, i % 2 ? 0.95 : 0.62);
    return palette;
}

inline uint8_t noise_channel(uint64_t seed, int64_t lx, int64_t ly, int channel, int base,
                             int amplitude) {
    uint64_t h = mix64(seed ^ mix64(uint64_t(lx) * 3 + 1) ^ mix64(uint64_t(ly) * 5 + 2) ^
                       uint64_t(channel) * 0x9e3779b97f4a7c15ULL);
    int value = base + int(h % uint64_t(2 * amplitude + 1)) - amplitude;
    return uint8_t(std::clamp(value, 0, 255));
}

struct WorldObject {
    int uid = 0;
    int class_id = 2;
    double exponent = 2.0;  // superellipse exponent: 1 diamond, 2 ellipse, 8 boxy
    double ax = 4, ay = 4;  // semi-axes
    double cx = 0, cy = 0;
    double vx = 0, vy = 0;
    double depth = 0;       // larger is nearer to the camera
    Rgb base;
    uint64_t noise_seed = 0;

    bool contains(double px, double py) const {
        double dx = std::abs(px - cx) / ax;
        double dy = std::abs(py - cy) / ay;
        return std::pow(dx, exponent) + std::pow(dy, exponent) <= 1.0;
    }

    bool fully_outside(int w, int h) const {
        return cx + ax < 0 || cx - ax >= w || cy + ay < 0 || cy - ay >= h;
    }

    Rgb texture(int x, int y) const {
        int64_t lx = x - int64_t(std::lround(cx));
        int64_t ly = y - int64_t(std::lround(cy));
        return Rgb{noise_channel(noise_seed, lx, ly, 0, base.r, 18),
                   noise_channel(noise_seed, lx, ly, 1, base.g, 18),
                   noise_channel(noise_seed, lx, ly, 2, base.b, 18)};
    }
};

}  // namespace detail

/// Renders one sequence. Objects keep constant velocity; an object that
/// leaves the image is replaced by a fresh track entering from a border.
/// With occlusion disabled every object lives in its own horizontal lane,
/// which forces disjoint masks and boxes.
inline SequenceData gen_sequence(const WorldConfig& cfg, const std::string& name) {
    cfg.validate();
    Rng rng(cfg.rng_seed);
    std::vector<Rgb> palette = detail::make_palette(cfg.palette_size);
    // deterministic shuffle so palette order differs between sequences
    for (size_t i = palette.size(); i > 1; --i)
        std::swap(palette[i - 1], palette[uniform_index(rng, i)]);

    int count = cfg.min_objects + int(uniform_index(rng, uint64_t(cfg.max_objects -
                                                                  cfg.min_objects + 1)));
    int lane_height = 0;
    if (!cfg.allow_occlusion) {
        lane_height = cfg.height / count;
        while (lane_height < 5 && count > 1) lane_height = cfg.height / --count;
    }

    int next_uid = 1;
    int palette_cursor = 0;
    auto spawn = [&](int slot, bool at_border) {
        detail::WorldObject obj;
        obj.uid = next_uid++;
        obj.class_id = cfg.num_classes == 2 ? 2 : 2 + int(uniform_index(rng, cfg.num_classes - 1));
        double exponents[3] = {1.0, 2.0, 8.0};
        obj.exponent = exponents[uniform_index(rng, 3)];
        obj.ax = uniform_range(rng, cfg.min_size, cfg.max_size) / 2.0;
        obj.ay = uniform_range(rng, cfg.min_size, cfg.max_size) / 2.0;
        double speed = uniform_range(rng, cfg.min_speed, cfg.max_speed);
        obj.depth = uniform_unit(rng);
        obj.base = palette[palette_cursor++ % palette.size()];
        obj.noise_seed = derive_seed(cfg.rng_seed, uint64_t(obj.uid), 7);
        if (!cfg.allow_occlusion) {
            obj.ay = std::min(obj.ay, lane_height / 2.0 - 1.0);
            obj.cy = slot * lane_height + lane_height / 2.0;
            obj.vy = 0;
            if (at_border) {
                bool from_left = uniform_index(rng, 2) == 0;
                obj.cx = from_left ? -obj.ax : cfg.width + obj.ax;
                obj.vx = from_left ? speed : -speed;
            } else {
                obj.cx = uniform_range(rng, obj.ax, cfg.width - obj.ax);
                obj.vx = uniform_index(rng, 2) == 0 ? speed : -speed;
            }
        } else if (at_border) {
            int side = int(uniform_index(rng, 4));  // 0 left, 1 right, 2 top, 3 bottom
            double angle = uniform_range(rng, -0.9, 0.9);
            if (side == 0) {
                obj.cx = -obj.ax;
                obj.cy = uniform_range(rng, 0, cfg.height);
                obj.vx = speed * std::cos(angle);
                obj.vy = speed * std::sin(angle);
            } else if (side == 1) {
                obj.cx = cfg.width + obj.ax;
                obj.cy = uniform_range(rng, 0, cfg.height);
                obj.vx = -speed * std::cos(angle);
                obj.vy = speed * std::sin(angle);
            } else if (side == 2) {
                obj.cy = -obj.ay;
                obj.cx = uniform_range(rng, 0, cfg.width);
                obj.vx = speed * std::sin(angle);
                obj.vy = speed * std::cos(angle);
            } else {
                obj.cy = cfg.height + obj.ay;
                obj.cx = uniform_range(rng, 0, cfg.width);
                obj.vx = speed * std::sin(angle);
                obj.vy = -speed * std::cos(angle);
            }
        } else {
            obj.cx = uniform_range(rng, obj.ax, cfg.width - obj.ax);
            obj.cy = uniform_range(rng, obj.ay, cfg.height - obj.ay);
            double angle = uniform_range(rng, 0, 2 * 3.14159265358979323846);
            obj.vx = speed * std::cos(angle);
            obj.vy = speed * std::sin(angle);
        }
        return obj;
    };

    std::vector<detail::WorldObject> objects;
    for (int i = 0; i < count; ++i) objects.push_back(spawn(i, false));

    SequenceData seq;
    seq.name = name;
    seq.width = cfg.width;
    seq.height = cfg.height;
    seq.num_classes = cfg.num_classes;
    uint64_t bg_seed = derive_seed(cfg.rng_seed, 0, 13);

    for (int f = 0; f < cfg.frames; ++f) {
        if (f > 0)
            for (auto& obj : objects) {
                obj.cx += obj.vx;
                obj.cy += obj.vy;
            }
        for (int i = 0; i < count; ++i)
            if (objects[i].fully_outside(cfg.width, cfg.height)) objects[i] = spawn(i, true);

        Image image(cfg.width, cfg.height);
        ClassMap classes(cfg.width, cfg.height, 1);
        Grid<int> owner(cfg.width, cfg.height, -1);
        for (int y = 0; y < cfg.height; ++y)
            for (int x = 0; x < cfg.width; ++x)
                image.at(x, y) = Rgb{detail::noise_channel(bg_seed, x, y, 0, 70, 22),
                                     detail::noise_channel(bg_seed, x, y, 1, 70, 22),
                                     detail::noise_channel(bg_seed, x, y, 2, 70, 22)};

        // far-to-near paint order; nearer objects overwrite contested pixels
        std::vector<int> order(count);
        for (int i = 0; i < count; ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            return objects[a].depth != objects[b].depth ? objects[a].depth < objects[b].depth
                                                        : objects[a].uid < objects[b].uid;
        });
        for (int idx : order) {
            const auto& obj = objects[idx];
            int x0 = std::max(0, int(std::floor(obj.cx - obj.ax)));
            int x1 = std::min(cfg.width, int(std::ceil(obj.cx + obj.ax)) + 1);
            int y0 = std::max(0, int(std::floor(obj.cy - obj.ay)));
            int y1 = std::min(cfg.height, int(std::ceil(obj.cy + obj.ay)) + 1);
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x)
                    if (obj.contains(x + 0.5, y + 0.5)) {
                        owner.at(x, y) = idx;
                        classes.at(x, y) = uint8_t(obj.class_id);
                        image.at(x, y) = obj.texture(x, y);
                    }
        }

        std::vector<InstanceObservation> frame_instances;
        for (int i = 0; i < count; ++i) {
            Bitmap visible(cfg.width, cfg.height);
            uint64_t area = 0;
            for (int y = 0; y < cfg.height; ++y)
                for (int x = 0; x < cfg.width; ++x)
                    if (owner.at(x, y) == i) {
                        visible.at(x, y) = 1;
                        ++area;
                    }
            if (area == 0) continue;
            InstanceObservation obs;
            obs.frame_index = f;
            obs.track_id = objects[i].uid;
            obs.class_id = objects[i].class_id;
            obs.mask = rle_encode(visible);
            frame_instances.push_back(std::move(obs));
        }
        seq.images.push_back(std::move(image));
        seq.class_maps.push_back(std::move(classes));
        seq.frames.push_back(std::move(frame_instances));
    }
    return seq;
}

struct DatasetReport {
    std::vector<std::string> violations;
    int sequences = 0;
    int64_t frames = 0;
    int64_t instances = 0;
    double mean_instances_per_frame = 0;

    bool ok() const { return violations.empty(); }

    std::string summary() const {
        std::string s = "sequences=" + std::to_string(sequences) +
                        " frames=" + std::to_string(frames) +
                        " instances=" + std::to_string(instances) + " density=" +
                        format_double(mean_instances_per_frame);
        if (ok()) return s + " clean";
        s += " violations=" + std::to_string(violations.size());
        for (const auto& v : violations) s += "\n  " + v;
        return s;
    }
};

/// Checks every stored sequence: masks must be in range, non-empty,
/// mutually disjoint per frame, class-consistent per track, and agree
/// with the rendered class map.
inline DatasetReport validate_dataset(const std::string& root) {
    DatasetReport report;
    std::vector<std::string> names = list_sequences(root);
    if (names.empty()) report.violations.push_back("no sequences under " + root);
    for (const std::string& name : names) {
        SequenceData seq;
        try {
            seq = load_sequence(root, name);
        } catch (const Error& e) {
            report.violations.push_back(name + ": " + e.what());
            continue;
        }
        ++report.sequences;
        report.frames += int64_t(seq.frames.size());
        std::map<int, int> track_class;
        std::map<int, int> track_length;
        for (size_t f = 0; f < seq.frames.size(); ++f) {
            const auto& frame = seq.frames[f];
            report.instances += int64_t(frame.size());
            for (size_t i = 0; i < frame.size(); ++i) {
                const auto& obs = frame[i];
                std::string where = name + " frame " + std::to_string(f) + " track " +
                                    std::to_string(obs.track_id);
                if (obs.mask.width != seq.width || obs.mask.height != seq.height) {
                    report.violations.push_back(where + ": mask dimensions");
                    continue;
                }
                if (obs.mask.area() == 0) report.violations.push_back(where + ": empty mask");
                if (obs.class_id < 2 || obs.class_id > seq.num_classes)
                    report.violations.push_back(where + ": class id out of range");
                auto [it, fresh] = track_class.try_emplace(obs.track_id, obs.class_id);
                if (!fresh && it->second != obs.class_id)
                    report.violations.push_back(where + ": class changed mid-track");
                ++track_length[obs.track_id];
                Bitmap dense = rle_decode(obs.mask);
                for (int y = 0; y < seq.height; ++y)
                    for (int x = 0; x < seq.width; ++x)
                        if (dense.at(x, y) &&
                            seq.class_maps[f].at(x, y) != uint8_t(obs.class_id)) {
                            report.violations.push_back(where + ": class map disagrees");
                            y = seq.height;
                            break;
                        }
                for (size_t j = i + 1; j < frame.size(); ++j)
                    if (mask_iou(obs.mask, frame[j].mask) > 0.0)
                        report.violations.push_back(where + ": overlaps track " +
                                                    std::to_string(frame[j].track_id));
            }
        }
        for (auto [id, len] : track_length)
            if (len < 1) report.violations.push_back(name + ": empty track");
    }
    if (report.frames > 0)
        report.mean_instances_per_frame = double(report.instances) / double(report.frames);
    return report;
}

}  // namespace mots
