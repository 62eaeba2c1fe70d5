#pragma once

// RGB rasters and per-pixel class maps with their on-disk formats:
// binary PPM (P6) for images, headerless one-byte-per-pixel rasters for
// class maps (ids 1..Z, background = 1).

#include <cstdint>
#include <string>
#include <vector>

#include "mots/common.hpp"

namespace mots {

struct Rgb {
    uint8_t r = 0, g = 0, b = 0;
    bool operator==(const Rgb&) const = default;
};

using Image = Grid<Rgb>;
using ClassMap = Grid<uint8_t>;

inline void write_ppm(const std::string& path, const Image& image) {
    auto out = open_output(path, std::ios::binary);
    out << "P6\n" << image.width() << ' ' << image.height() << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.data()), 3 * image.size());
    if (!out) throw IoError("short write: " + path);
}

inline Image read_ppm(const std::string& path) {
    auto in = open_input(path, std::ios::binary);
    std::string magic;
    int width = 0, height = 0, maxval = 0;
    in >> magic >> width >> height >> maxval;
    if (magic != "P6" || maxval != 255 || width <= 0 || height <= 0)
        throw CorruptFile("not an 8-bit P6 ppm: " + path);
    in.get();  // single whitespace after maxval
    Image image(width, height);
    in.read(reinterpret_cast<char*>(image.data()), 3 * image.size());
    if (!in) throw CorruptFile("truncated ppm: " + path);
    return image;
}

inline void write_class_map(const std::string& path, const ClassMap& map) {
    auto out = open_output(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(map.data()), map.size());
    if (!out) throw IoError("short write: " + path);
}

inline ClassMap read_class_map(const std::string& path, int width, int height) {
    auto in = open_input(path, std::ios::binary);
    ClassMap map(width, height);
    in.read(reinterpret_cast<char*>(map.data()), map.size());
    if (!in) throw CorruptFile("truncated class map: " + path);
    char extra;
    if (in.get(extra)) throw CorruptFile("class map larger than image: " + path);
    return map;
}

}  // namespace mots
