#pragma once

// Run-length-encoded binary masks and bounding-box geometry.
//
// Masks are encoded column-major (index = x * height + y) as alternating
// zero/one run counts starting with a zero-run, matching the uncompressed
// COCO convention so external MOTS result files interoperate.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mots/common.hpp"

namespace mots {

using Bitmap = Grid<uint8_t>;

struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<uint32_t> counts;  // alternating runs, leading zero-run may be 0

    /// Foreground pixel count.
    uint64_t area() const {
        uint64_t a = 0;
        for (size_t i = 1; i < counts.size(); i += 2) a += counts[i];
        return a;
    }

    bool operator==(const BinaryMask&) const = default;
};

/// Half-open pixel box, x0 < x1 and y0 < y1, inside the image.
struct BBox {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    double diagonal() const { return std::hypot(double(width()), double(height())); }
    bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }

    bool operator==(const BBox&) const = default;
};

/// One detected or annotated instance in one frame. track_id is -1 for
/// detections without identity.
struct InstanceObservation {
    int frame_index = 0;
    int track_id = -1;
    int class_id = 1;
    BinaryMask mask;
};

inline BinaryMask rle_encode(const Bitmap& dense) {
    BinaryMask mask;
    mask.height = dense.height();
    mask.width = dense.width();
    uint32_t run = 0;
    uint8_t value = 0;
    for (int x = 0; x < dense.width(); ++x) {
        for (int y = 0; y < dense.height(); ++y) {
            uint8_t pixel = dense.at(x, y) ? 1 : 0;
            if (pixel != value) {
                mask.counts.push_back(run);
                run = 0;
                value = pixel;
            }
            ++run;
        }
    }
    mask.counts.push_back(run);
    return mask;
}

inline Bitmap rle_decode(const BinaryMask& mask) {
    uint64_t total = 0;
    for (uint32_t c : mask.counts) total += c;
    if (mask.height <= 0 || mask.width <= 0 ||
        total != static_cast<uint64_t>(mask.height) * mask.width)
        throw MalformedRle("run counts do not cover height*width");
    Bitmap dense(mask.width, mask.height);
    uint8_t* out = dense.data();
    int height = mask.height, width = mask.width;
    uint64_t index = 0;
    uint8_t value = 0;
    for (uint32_t c : mask.counts) {
        for (uint32_t j = 0; j < c; ++j, ++index) {
            // column-major run order into the row-major grid
            int x = static_cast<int>(index / height);
            int y = static_cast<int>(index % height);
            out[static_cast<size_t>(y) * width + x] = value;
        }
        value = !value;
    }
    return dense;
}

/// IoU by merging the two run lists; no dense materialization.
inline double mask_iou(const BinaryMask& a, const BinaryMask& b) {
    if (a.height != b.height || a.width != b.width)
        throw DimensionMismatch("mask_iou: dimensions differ");
    uint64_t inter = 0, uni = 0;
    size_t ia = 0, ib = 0;
    uint64_t ra = ia < a.counts.size() ? a.counts[ia] : 0;
    uint64_t rb = ib < b.counts.size() ? b.counts[ib] : 0;
    bool va = false, vb = false;
    uint64_t remaining = static_cast<uint64_t>(a.height) * a.width;
    while (remaining > 0) {
        while (ra == 0 && ia + 1 < a.counts.size()) { ra = a.counts[++ia]; va = !va; }
        while (rb == 0 && ib + 1 < b.counts.size()) { rb = b.counts[++ib]; vb = !vb; }
        uint64_t step = std::min(ra, rb);
        if (step == 0 || step > remaining)
            throw MalformedRle("mask_iou: inconsistent run counts");
        if (va || vb) {
            uni += step;
            if (va && vb) inter += step;
        }
        ra -= step;
        rb -= step;
        remaining -= step;
    }
    if (uni == 0) return 0.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

/// Smallest half-open box containing every foreground pixel.
inline BBox tight_bbox(const BinaryMask& mask) {
    int min_x = mask.width, max_x = -1, min_y = mask.height, max_y = -1;
    uint64_t index = 0;
    bool value = false;
    for (uint32_t c : mask.counts) {
        if (value && c > 0) {
            uint64_t first = index, last = index + c - 1;
            int x_first = static_cast<int>(first / mask.height);
            int x_last = static_cast<int>(last / mask.height);
            min_x = std::min(min_x, x_first);
            max_x = std::max(max_x, x_last);
            if (x_first == x_last) {
                min_y = std::min(min_y, static_cast<int>(first % mask.height));
                max_y = std::max(max_y, static_cast<int>(last % mask.height));
            } else {
                // run wraps across columns: middle columns are fully covered
                min_y = 0;
                max_y = mask.height - 1;
            }
        }
        index += c;
        value = !value;
    }
    if (max_x < 0) throw EmptyMask("tight_bbox: mask has no foreground");
    return BBox{min_x, min_y, max_x + 1, max_y + 1};
}

/// Grows the box outward by k * width horizontally and k * height
/// vertically (floor/ceil so k=0 is the identity), clipped to the image.
inline BBox enlarge_bbox(const BBox& box, double k, int image_width, int image_height) {
    double dx = k * box.width();
    double dy = k * box.height();
    BBox out;
    out.x0 = std::max(0, static_cast<int>(std::floor(box.x0 - dx)));
    out.y0 = std::max(0, static_cast<int>(std::floor(box.y0 - dy)));
    out.x1 = std::min(image_width, static_cast<int>(std::ceil(box.x1 + dx)));
    out.y1 = std::min(image_height, static_cast<int>(std::ceil(box.y1 + dy)));
    return out;
}

// ---------------------------------------------------------------------------
// Mask line format: one instance per line,
//   frame_index track_id class_id height width c0,c1,c2,...
// ---------------------------------------------------------------------------

inline std::string format_mask_line(const InstanceObservation& obs) {
    std::ostringstream out;
    out << obs.frame_index << ' ' << obs.track_id << ' ' << obs.class_id << ' '
        << obs.mask.height << ' ' << obs.mask.width << ' ';
    for (size_t i = 0; i < obs.mask.counts.size(); ++i) {
        if (i) out << ',';
        out << obs.mask.counts[i];
    }
    return out.str();
}

inline InstanceObservation parse_mask_line(const std::string& line) {
    std::istringstream in(line);
    InstanceObservation obs;
    std::string runs;
    if (!(in >> obs.frame_index >> obs.track_id >> obs.class_id >> obs.mask.height
             >> obs.mask.width >> runs))
        throw MalformedRle("mask line: expected 6 fields, got: " + line);
    uint64_t total = 0;
    size_t pos = 0;
    while (pos <= runs.size()) {
        size_t comma = runs.find(',', pos);
        std::string token = runs.substr(pos, comma == std::string::npos ? comma : comma - pos);
        if (token.empty() || token.find_first_not_of("0123456789") != std::string::npos)
            throw MalformedRle("mask line: bad run count '" + token + "'");
        obs.mask.counts.push_back(static_cast<uint32_t>(std::stoul(token)));
        total += obs.mask.counts.back();
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (total != static_cast<uint64_t>(obs.mask.height) * obs.mask.width)
        throw MalformedRle("mask line: counts do not sum to height*width");
    return obs;
}

inline void write_mask_file(const std::string& path, const std::vector<InstanceObservation>& all) {
    auto out = open_output(path);
    for (const auto& obs : all) out << format_mask_line(obs) << '\n';
}

inline std::vector<InstanceObservation> read_mask_file(const std::string& path) {
    auto in = open_input(path);
    std::vector<InstanceObservation> all;
    std::string line;
    size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        try {
            all.push_back(parse_mask_line(line));
        } catch (const MalformedRle& e) {
            throw CorruptFile(path + " line " + std::to_string(line_number) + ": " + e.what());
        }
    }
    return all;
}

/// Groups observations by frame index (ascending); frames with no
/// observation between first and last still appear, empty.
inline std::vector<std::vector<InstanceObservation>>
group_by_frame(const std::vector<InstanceObservation>& all) {
    int max_frame = -1;
    for (const auto& obs : all) max_frame = std::max(max_frame, obs.frame_index);
    std::vector<std::vector<InstanceObservation>> frames(max_frame + 1);
    for (const auto& obs : all) {
        if (obs.frame_index < 0) throw Error("negative frame index");
        frames[obs.frame_index].push_back(obs);
    }
    return frames;
}

}  // namespace mots
