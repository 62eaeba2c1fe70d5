#pragma once

// Online instance association. Each frame: similarity matrix between
// active tracks and new instances, minimum-cost one-to-one assignment,
// gate on similarity, update matched tracks, start tracks for the rest,
// retire tracks that sat idle too long.

#include <algorithm>
#include <limits>
#include <utility>
#include <vector>

#include "mots/mask.hpp"
#include "mots/net.hpp"

namespace mots {

struct TrackerConfig {
    double alpha = 0.5;   // weight of the mask IoU term
    int beta = 30;        // idle frames before a track retires
    double gamma = -8.0;  // minimum similarity for an association

    void validate() const {
        if (beta < 1) throw Error("tracker: beta must be >= 1");
    }
};

/// Similarity of two instances: negative Euclidean embedding distance
/// plus alpha times mask IoU. Higher is more alike.
inline double similarity(const EmbeddingVector& m_i, const EmbeddingVector& m_j,
                         const BinaryMask& s_i, const BinaryMask& s_j, double alpha) {
    if (m_i.size() != m_j.size()) throw DimensionMismatch("similarity: embedding sizes differ");
    return -(m_i - m_j).norm() + alpha * mask_iou(s_i, s_j);
}

/// Minimum-total-cost one-to-one assignment on an R x C matrix, one pair
/// per row or column of the smaller side. Potentials-based Hungarian
/// method, O(n^2 m). Rows are introduced in ascending order and equal
/// reduced costs resolve to the lowest column index, so ties break
/// deterministically toward lexicographically small (row, col) pairs.
/// Pairs are returned sorted by row.
inline std::vector<std::pair<int, int>> solve_assignment(const Matrix& cost) {
    int rows = static_cast<int>(cost.rows());
    int cols = static_cast<int>(cost.cols());
    if (rows == 0 || cols == 0) return {};
    if (rows > cols) {
        auto flipped = solve_assignment(cost.transpose());
        for (auto& [r, c] : flipped) std::swap(r, c);
        std::sort(flipped.begin(), flipped.end());
        return flipped;
    }

    constexpr double kInf = std::numeric_limits<double>::infinity();
    int n = rows, m = cols;
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
    std::vector<int> match(m + 1, 0), way(m + 1, 0);  // match[j]: 1-based row in column j
    std::vector<char> used(m + 1);
    for (int i = 1; i <= n; ++i) {
        match[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), kInf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            int i0 = match[j0], j1 = 0;
            double delta = kInf;
            for (int j = 1; j <= m; ++j)
                if (!used[j]) {
                    double reduced = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if (reduced < minv[j]) {
                        minv[j] = reduced;
                        way[j] = j0;
                    }
                    if (minv[j] < delta) {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            for (int j = 0; j <= m; ++j)
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(n);
    for (int j = 1; j <= m; ++j)
        if (match[j] != 0) pairs.emplace_back(match[j] - 1, j - 1);
    std::sort(pairs.begin(), pairs.end());
    return pairs;
}

struct Track {
    int track_id = 0;
    EmbeddingVector latest_embedding;
    BinaryMask latest_mask;
    int last_update_frame = 0;
    std::vector<std::pair<int, BinaryMask>> history;  // (frame, mask)
};

struct TrackerState {
    std::vector<Track> active;
    std::vector<Track> retired;
    int next_track_id = 1;
    int current_frame = 0;
    bool started = false;
};

/// One frame of association. Returns the track id assigned to each
/// instance, in input order. Retirement happens before matching: a track
/// retires at the first step whose frame index exceeds its last update
/// by more than beta.
inline std::vector<int> step(TrackerState& state, int frame_index,
                             const std::vector<InstanceObservation>& instances,
                             const std::vector<EmbeddingVector>& embeddings,
                             const TrackerConfig& cfg) {
    cfg.validate();
    if (instances.size() != embeddings.size())
        throw DimensionMismatch("step: one embedding per instance required");
    if (state.started && frame_index <= state.current_frame)
        throw NonMonotonicFrame("step: frame " + std::to_string(frame_index) +
                                " after frame " + std::to_string(state.current_frame));
    state.current_frame = frame_index;
    state.started = true;

    for (size_t t = 0; t < state.active.size();) {
        if (frame_index > state.active[t].last_update_frame + cfg.beta) {
            state.retired.push_back(std::move(state.active[t]));
            state.active.erase(state.active.begin() + t);
        } else {
            ++t;
        }
    }

    int n_tracks = static_cast<int>(state.active.size());
    int n_inst = static_cast<int>(instances.size());
    std::vector<int> assigned(n_inst, -1);

    if (n_tracks > 0 && n_inst > 0) {
        Matrix sim(n_tracks, n_inst);
        for (int t = 0; t < n_tracks; ++t)
            for (int i = 0; i < n_inst; ++i)
                sim(t, i) = similarity(state.active[t].latest_embedding, embeddings[i],
                                       state.active[t].latest_mask, instances[i].mask, cfg.alpha);
        for (auto [t, i] : solve_assignment(-sim)) {
            if (sim(t, i) <= cfg.gamma) continue;  // association requires S > gamma
            Track& track = state.active[t];
            track.latest_embedding = embeddings[i];
            track.latest_mask = instances[i].mask;
            track.last_update_frame = frame_index;
            track.history.emplace_back(frame_index, instances[i].mask);
            assigned[i] = track.track_id;
        }
    }

    for (int i = 0; i < n_inst; ++i) {
        if (assigned[i] != -1) continue;
        Track track;
        track.track_id = state.next_track_id++;
        track.latest_embedding = embeddings[i];
        track.latest_mask = instances[i].mask;
        track.last_update_frame = frame_index;
        track.history.emplace_back(frame_index, instances[i].mask);
        assigned[i] = track.track_id;
        state.active.push_back(std::move(track));
    }
    return assigned;
}

struct FrameInstances {
    int frame_index = 0;
    std::vector<InstanceObservation> instances;
    std::vector<EmbeddingVector> embeddings;
};

/// Folds step over a whole sequence; returns every observation with its
/// assigned track id, in input order.
inline std::vector<InstanceObservation> run_sequence(const std::vector<FrameInstances>& frames,
                                                     const TrackerConfig& cfg) {
    TrackerState state;
    std::vector<InstanceObservation> out;
    for (const FrameInstances& frame : frames) {
        std::vector<int> ids = step(state, frame.frame_index, frame.instances,
                                    frame.embeddings, cfg);
        for (size_t i = 0; i < frame.instances.size(); ++i) {
            InstanceObservation obs = frame.instances[i];
            obs.frame_index = frame.frame_index;
            obs.track_id = ids[i];
            out.push_back(std::move(obs));
        }
    }
    return out;
}

}  // namespace mots
