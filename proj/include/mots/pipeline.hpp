#pragma once

// Glue from a segmented frame to an embedding vector: point sampling,
// modality encoding, optional modality blanking, and the network forward
// pass, kept together so the tracker, trainer, and tools share one path.

#include <chrono>
#include <utility>

#include "mots/dataset.hpp"
#include "mots/net.hpp"
#include "mots/pointcloud.hpp"
#include "mots/tracker.hpp"

namespace mots {

struct AblationConfig {
    bool zero_color = false;     // blank the RGB rows of both point sets
    bool zero_position = false;  // blank the crop position embedding
};

// Rows 0..1 of each feature block are offsets, rows 2..4 are colors; the
// environment block appends the category one-hot after the colors.
inline void apply_ablation(ModalityTensors& mod, const AblationConfig& ablation) {
    if (ablation.zero_color) {
        mod.fg_features.middleRows(2, 3).setZero();
        mod.env_features.middleRows(2, 3).setZero();
    }
    if (ablation.zero_position) mod.position_embedding.setZero();
}

struct EmbeddingResult {
    EmbeddingVector embedding;
    PointCloudPair cloud;
    ForwardTrace trace;
};

inline EmbeddingResult extract_embedding(const Image& image, const ClassMap& class_map,
                                         const InstanceObservation& obs,
                                         const SamplerConfig& sampler,
                                         const NetworkParams& params,
                                         const AblationConfig& ablation = {}) {
    EmbeddingResult out;
    out.cloud = sample_points(image, class_map, obs, sampler);
    ModalityTensors mod = encode_modalities(out.cloud, sampler);
    apply_ablation(mod, ablation);
    out.embedding = forward(params, mod, out.trace);
    return out;
}

struct TrackRunResult {
    std::vector<InstanceObservation> tracked;  // detections with assigned ids
    std::vector<double> latencies_ms;          // embedding extraction, input order

    double median_latency_ms() const { return median(latencies_ms); }
};

/// Runs the online tracker over a detection list against one sequence.
/// Each instance's point sampling is seeded by (seed, frame, instance), so
/// the tracked output is byte-stable for any thread count; latency covers
/// sampling, encoding, and the forward pass per instance.
inline TrackRunResult track_detections(const SequenceData& seq,
                                       const std::vector<InstanceObservation>& detections,
                                       const NetworkParams& params,
                                       const TrackerConfig& tracker_cfg,
                                       SamplerConfig sampler,
                                       const AblationConfig& ablation = {},
                                       uint64_t seed = 0, int threads = 1) {
    sampler.num_classes = params.num_classes;
    sampler.validate();
    tracker_cfg.validate();
    auto frames = group_by_frame(detections);
    if (frames.size() > seq.images.size())
        throw DimensionMismatch("track: detections reference frame " +
                                std::to_string(frames.size() - 1) + " but sequence ends at " +
                                std::to_string(seq.images.size()) + " frames");

    TrackRunResult out;
    out.tracked.reserve(detections.size());
    out.latencies_ms.reserve(detections.size());
    TrackerState state;
    std::vector<EmbeddingVector> embeddings;
    std::vector<double> latencies;
    for (size_t f = 0; f < frames.size(); ++f) {
        const auto& instances = frames[f];
        if (instances.empty()) continue;
        embeddings.assign(instances.size(), EmbeddingVector{});
        latencies.assign(instances.size(), 0.0);
        parallel_for(instances.size(), threads, [&](size_t i) {
            SamplerConfig local = sampler;
            local.rng_seed = derive_seed(seed, f, i);
            auto begin = std::chrono::steady_clock::now();
            embeddings[i] = extract_embedding(seq.images[f], seq.class_maps[f], instances[i],
                                              local, params, ablation)
                                .embedding;
            auto end = std::chrono::steady_clock::now();
            latencies[i] = std::chrono::duration<double, std::milli>(end - begin).count();
        });
        std::vector<int> ids =
            step(state, static_cast<int>(f), instances, embeddings, tracker_cfg);
        for (size_t i = 0; i < instances.size(); ++i) {
            InstanceObservation obs = instances[i];
            obs.track_id = ids[i];
            out.tracked.push_back(std::move(obs));
            out.latencies_ms.push_back(latencies[i]);
        }
    }
    return out;
}

}  // namespace mots
