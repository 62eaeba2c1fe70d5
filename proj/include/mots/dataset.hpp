#pragma once

// On-disk sequence layout:
//   <root>/<seq>/image_%06d.ppm   rendered frames
//   <root>/<seq>/class_%06d.raw   per-pixel class ids
//   <root>/<seq>/instances.txt    ground-truth masks, one line per instance
//   <root>/<seq>/meta.json        dimensions, frame count, class count

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mots/image.hpp"
#include "mots/mask.hpp"

namespace mots {

struct SequenceData {
    std::string name;
    int width = 0;
    int height = 0;
    int num_classes = 2;
    std::vector<Image> images;
    std::vector<ClassMap> class_maps;
    std::vector<std::vector<InstanceObservation>> frames;  // ground truth per frame
};

inline std::string frame_image_name(int frame) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "image_%06d.ppm", frame);
    return buf;
}

inline std::string frame_class_name(int frame) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "class_%06d.raw", frame);
    return buf;
}

inline void write_sequence(const std::string& root, const SequenceData& seq) {
    namespace fs = std::filesystem;
    fs::path dir = fs::path(root) / seq.name;
    fs::create_directories(dir);
    for (size_t f = 0; f < seq.images.size(); ++f) {
        write_ppm((dir / frame_image_name(int(f))).string(), seq.images[f]);
        write_class_map((dir / frame_class_name(int(f))).string(), seq.class_maps[f]);
    }
    std::vector<InstanceObservation> flat;
    for (const auto& frame : seq.frames) flat.insert(flat.end(), frame.begin(), frame.end());
    write_mask_file((dir / "instances.txt").string(), flat);
    nlohmann::json meta;
    meta["width"] = seq.width;
    meta["height"] = seq.height;
    meta["frames"] = int(seq.images.size());
    meta["num_classes"] = seq.num_classes;
    auto out = open_output((dir / "meta.json").string());
    out << meta.dump(2) << '\n';
}

inline SequenceData load_sequence(const std::string& root, const std::string& name) {
    namespace fs = std::filesystem;
    fs::path dir = fs::path(root) / name;
    SequenceData seq;
    seq.name = name;
    nlohmann::json meta;
    try {
        auto in = open_input((dir / "meta.json").string());
        in >> meta;
        seq.width = meta.at("width").get<int>();
        seq.height = meta.at("height").get<int>();
        seq.num_classes = meta.at("num_classes").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFile("bad meta.json in " + dir.string() + ": " + e.what());
    }
    int frames = meta.at("frames").get<int>();
    if (frames < 0 || seq.width < 1 || seq.height < 1 || seq.num_classes < 2)
        throw CorruptFile("implausible meta.json in " + dir.string());
    for (int f = 0; f < frames; ++f) {
        seq.images.push_back(read_ppm((dir / frame_image_name(f)).string()));
        seq.class_maps.push_back(
            read_class_map((dir / frame_class_name(f)).string(), seq.width, seq.height));
        if (seq.images.back().width() != seq.width || seq.images.back().height() != seq.height)
            throw CorruptFile("frame dimensions disagree with meta.json: " + dir.string());
    }
    seq.frames = group_by_frame(read_mask_file((dir / "instances.txt").string()));
    if (int(seq.frames.size()) > frames)
        throw CorruptFile("instance frame index beyond sequence end: " + dir.string());
    seq.frames.resize(frames);
    return seq;
}

/// Sequence directory names under root (those holding a meta.json), sorted.
inline std::vector<std::string> list_sequences(const std::string& root) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) throw IoError("not a dataset directory: " + root);
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory() && fs::exists(entry.path() / "meta.json"))
            names.push_back(entry.path().filename().string());
    std::sort(names.begin(), names.end());
    return names;
}

/// Loads a sequence addressed by its own directory instead of (root, name).
inline SequenceData load_sequence_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    fs::path path = fs::path(dir).lexically_normal();
    if (path.filename().empty()) path = path.parent_path();
    std::string parent = path.parent_path().string();
    if (parent.empty()) parent = ".";
    return load_sequence(parent, path.filename().string());
}

}  // namespace mots
