#pragma once

// Metric learning over instance crops: a flattened crop database, triplet
// batch sampling, batch-hard mining with analytic gradients, an adaptive
// moment optimizer, the training loop, and a finite-difference check that
// covers the whole differentiable path from loss to parameters.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mots/dataset.hpp"
#include "mots/pipeline.hpp"

namespace mots {

struct TrainConfig {
    int ids_per_batch = 18;    // distinct identities per batch, 3 crops each
    double margin = 0.2;
    double learning_rate = 1e-3;
    int epochs = 20;
    uint64_t rng_seed = 0;
    int min_spacing = 1;       // frame gap between the 3 crops of one identity
    int max_spacing = 10;
    int batches_per_epoch = 0;  // 0: eligible tracks / ids_per_batch
    int n_fg = 96;
    int n_env = 48;
    int num_classes = 2;

    void validate() const {
        if (ids_per_batch < 2) throw Error("train config: ids_per_batch must be >= 2");
        if (margin <= 0) throw Error("train config: margin must be > 0");
        if (learning_rate <= 0) throw Error("train config: learning_rate must be > 0");
        if (epochs < 1) throw Error("train config: epochs must be >= 1");
        if (min_spacing < 1 || max_spacing < min_spacing)
            throw Error("train config: need 1 <= min_spacing <= max_spacing");
        if (batches_per_epoch < 0) throw Error("train config: batches_per_epoch must be >= 0");
        if (n_fg < 1 || n_env < 1) throw Error("train config: point counts must be >= 1");
        if (num_classes < 2) throw Error("train config: need at least 2 classes");
    }
};

inline TrainConfig parse_train_config(const nlohmann::json& doc, const std::string& origin) {
    if (!doc.is_object()) throw CorruptFile(origin + ": train config must be a JSON object");
    TrainConfig cfg;
    try {
        for (const auto& [key, value] : doc.items()) {
            if (key == "ids_per_batch") cfg.ids_per_batch = value.get<int>();
            else if (key == "margin") cfg.margin = value.get<double>();
            else if (key == "learning_rate") cfg.learning_rate = value.get<double>();
            else if (key == "epochs") cfg.epochs = value.get<int>();
            else if (key == "rng_seed") cfg.rng_seed = value.get<uint64_t>();
            else if (key == "min_spacing") cfg.min_spacing = value.get<int>();
            else if (key == "max_spacing") cfg.max_spacing = value.get<int>();
            else if (key == "batches_per_epoch") cfg.batches_per_epoch = value.get<int>();
            else if (key == "n_fg") cfg.n_fg = value.get<int>();
            else if (key == "n_env") cfg.n_env = value.get<int>();
            else if (key == "num_classes") cfg.num_classes = value.get<int>();
            else throw CorruptFile(origin + ": unknown train config key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFile(origin + ": " + e.what());
    }
    cfg.validate();
    return cfg;
}

inline TrainConfig load_train_config(const std::string& path) {
    std::ifstream in = open_input(path);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFile(path + ": " + e.what());
    }
    return parse_train_config(doc, path);
}

// One instance crop: the frame it lives in (index into the flattened frame
// store) plus its ground-truth observation.
struct CropEntry {
    int frame_store = 0;
    InstanceObservation obs;
};

struct CropDatabase {
    std::vector<Image> images;
    std::vector<ClassMap> class_maps;
    std::vector<std::vector<CropEntry>> tracks;  // chronological within a track
    std::vector<size_t> eligible;                // tracks holding >= 3 crops

    void rebuild_eligible() {
        eligible.clear();
        for (size_t t = 0; t < tracks.size(); ++t)
            if (tracks[t].size() >= 3) eligible.push_back(t);
    }
};

inline void append_sequence(CropDatabase& db, const SequenceData& seq) {
    int base = static_cast<int>(db.images.size());
    std::map<int, std::vector<CropEntry>> by_track;
    for (size_t f = 0; f < seq.frames.size(); ++f) {
        db.images.push_back(seq.images[f]);
        db.class_maps.push_back(seq.class_maps[f]);
        for (const auto& obs : seq.frames[f])
            by_track[obs.track_id].push_back(CropEntry{base + static_cast<int>(f), obs});
    }
    for (auto& [id, entries] : by_track) db.tracks.push_back(std::move(entries));
    db.rebuild_eligible();
}

inline CropDatabase build_crop_database(const std::string& root,
                                        const std::vector<std::string>& names) {
    CropDatabase db;
    for (const auto& name : names) append_sequence(db, load_sequence(root, name));
    return db;
}

struct CropRef {
    size_t track = 0;
    size_t entry = 0;
};

/// Draws ids_per_batch distinct eligible tracks and, for each, three crops
/// at frames t, t+s, t+2s with the (start, spacing) pair uniform over every
/// feasible combination, spacing within [min_spacing, max_spacing]. Tracks
/// whose frame gaps admit no such arithmetic triple fall back to a uniform
/// run of three consecutive crops. Returns 3 * ids_per_batch refs grouped
/// per identity.
inline std::vector<CropRef> sample_batch(const CropDatabase& db, const TrainConfig& cfg,
                                         Rng& rng) {
    cfg.validate();
    size_t want = static_cast<size_t>(cfg.ids_per_batch);
    if (db.eligible.size() < want)
        throw InsufficientTracks("batch needs " + std::to_string(want) +
                                 " tracks with >= 3 crops, dataset has " +
                                 std::to_string(db.eligible.size()));

    std::vector<size_t> pool = db.eligible;
    std::vector<CropRef> batch;
    batch.reserve(3 * want);
    for (size_t k = 0; k < want; ++k) {
        size_t pick = k + uniform_index(rng, pool.size() - k);
        std::swap(pool[k], pool[pick]);
        size_t track = pool[k];
        const auto& entries = db.tracks[track];

        std::map<int, size_t> by_frame;
        for (size_t e = 0; e < entries.size(); ++e)
            by_frame.emplace(entries[e].obs.frame_index, e);
        std::vector<std::array<size_t, 3>> feasible;
        for (size_t e = 0; e < entries.size(); ++e) {
            int start = entries[e].obs.frame_index;
            for (int s = cfg.min_spacing; s <= cfg.max_spacing; ++s) {
                auto mid = by_frame.find(start + s);
                auto far = by_frame.find(start + 2 * s);
                if (mid != by_frame.end() && far != by_frame.end())
                    feasible.push_back({e, mid->second, far->second});
            }
        }
        std::array<size_t, 3> triple;
        if (!feasible.empty()) {
            triple = feasible[uniform_index(rng, feasible.size())];
        } else {
            size_t start = uniform_index(rng, entries.size() - 2);
            triple = {start, start + 1, start + 2};
        }
        for (size_t e : triple) batch.push_back(CropRef{track, e});
    }
    return batch;
}

struct TripletLoss {
    double value = 0;
    Matrix grad;  // same shape as the embeddings argument
};

/// Batch-hard mining: per anchor, the farthest same-label and the nearest
/// different-label embedding feed a hinge with the given margin; the loss is
/// the mean over anchors that have at least one positive. Ties pick the
/// lowest index, and a zero pairwise distance contributes a zero gradient.
inline TripletLoss batch_hard_triplet_loss(const Matrix& embeddings,
                                           const std::vector<int64_t>& labels,
                                           double margin) {
    const int n = static_cast<int>(embeddings.cols());
    if (static_cast<int>(labels.size()) != n)
        throw ShapeMismatch("triplet loss: one label per embedding");
    if (n < 2) throw ShapeMismatch("triplet loss: need at least 2 embeddings");
    bool multiple = false;
    for (int i = 1; i < n; ++i) multiple |= labels[i] != labels[0];
    if (!multiple) throw SingleIdentityBatch("triplet loss: batch holds one identity");

    Matrix dist(n, n);
    for (int i = 0; i < n; ++i) {
        dist(i, i) = 0.0;
        for (int j = i + 1; j < n; ++j) {
            double d = (embeddings.col(i) - embeddings.col(j)).norm();
            dist(i, j) = d;
            dist(j, i) = d;
        }
    }

    TripletLoss out;
    out.grad = Matrix::Zero(embeddings.rows(), n);
    double total = 0.0;
    int anchors = 0;
    struct Active {
        int anchor, pos, neg;
    };
    std::vector<Active> active;
    for (int a = 0; a < n; ++a) {
        int pos = -1, neg = -1;
        for (int j = 0; j < n; ++j) {
            if (j == a) continue;
            if (labels[j] == labels[a]) {
                if (pos < 0 || dist(a, j) > dist(a, pos)) pos = j;
            } else {
                if (neg < 0 || dist(a, j) < dist(a, neg)) neg = j;
            }
        }
        if (pos < 0) continue;
        ++anchors;
        double hinge = dist(a, pos) - dist(a, neg) + margin;
        if (hinge <= 0.0) continue;
        total += hinge;
        active.push_back({a, pos, neg});
    }
    if (anchors == 0) return out;

    out.value = total / anchors;
    double scale = 1.0 / anchors;
    for (const Active& t : active) {
        if (dist(t.anchor, t.pos) > 0.0) {
            Vector u = (embeddings.col(t.anchor) - embeddings.col(t.pos)) / dist(t.anchor, t.pos);
            out.grad.col(t.anchor) += scale * u;
            out.grad.col(t.pos) -= scale * u;
        }
        if (dist(t.anchor, t.neg) > 0.0) {
            Vector u = (embeddings.col(t.anchor) - embeddings.col(t.neg)) / dist(t.anchor, t.neg);
            out.grad.col(t.anchor) -= scale * u;
            out.grad.col(t.neg) += scale * u;
        }
    }
    return out;
}

inline void set_zero(NetworkParams& params) {
    auto zero_mlp = [](Mlp& m) {
        for (auto& w : m.weights) w.setZero();
        for (auto& b : m.biases) b.setZero();
    };
    zero_mlp(params.fg_mlp);
    zero_mlp(params.weight_head);
    zero_mlp(params.env_mlp);
    zero_mlp(params.fusion);
}

inline void add_params(NetworkParams& dst, const NetworkParams& src) {
    auto add_mlp = [](Mlp& d, const Mlp& s) {
        if (d.weights.size() != s.weights.size())
            throw ShapeMismatch("parameter sum: layer counts differ");
        for (size_t l = 0; l < d.weights.size(); ++l) {
            if (d.weights[l].rows() != s.weights[l].rows() ||
                d.weights[l].cols() != s.weights[l].cols())
                throw ShapeMismatch("parameter sum: layer shapes differ");
            d.weights[l] += s.weights[l];
            d.biases[l] += s.biases[l];
        }
    };
    add_mlp(dst.fg_mlp, src.fg_mlp);
    add_mlp(dst.weight_head, src.weight_head);
    add_mlp(dst.env_mlp, src.env_mlp);
    add_mlp(dst.fusion, src.fusion);
}

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    NetworkParams first_moment;
    NetworkParams second_moment;
    int64_t step_count = 0;
};

inline AdamState make_adam_state(const NetworkParams& params) {
    return AdamState{zeros_like(params), zeros_like(params), 0};
}

/// One adaptive-moment update with bias-corrected moment estimates. A zero
/// gradient on fresh state leaves the parameters untouched.
inline void optimizer_step(NetworkParams& params, const NetworkParams& grads,
                           AdamState& state, double learning_rate,
                           const AdamConfig& cfg = {}) {
    ++state.step_count;
    double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step_count));
    double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step_count));
    auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
        if (p.rows() != g.rows() || p.cols() != g.cols())
            throw ShapeMismatch("optimizer step: gradient shape");
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        p.array() -=
            learning_rate * (m.array() / bias1) / ((v.array() / bias2).sqrt() + cfg.epsilon);
    };
    auto update_mlp = [&](Mlp& p, const Mlp& g, Mlp& m, Mlp& v) {
        if (p.weights.size() != g.weights.size())
            throw ShapeMismatch("optimizer step: layer counts differ");
        for (size_t l = 0; l < p.weights.size(); ++l) {
            update(p.weights[l], g.weights[l], m.weights[l], v.weights[l]);
            update(p.biases[l], g.biases[l], m.biases[l], v.biases[l]);
        }
    };
    update_mlp(params.fg_mlp, grads.fg_mlp, state.first_moment.fg_mlp,
               state.second_moment.fg_mlp);
    update_mlp(params.weight_head, grads.weight_head, state.first_moment.weight_head,
               state.second_moment.weight_head);
    update_mlp(params.env_mlp, grads.env_mlp, state.first_moment.env_mlp,
               state.second_moment.env_mlp);
    update_mlp(params.fusion, grads.fusion, state.first_moment.fusion,
               state.second_moment.fusion);
}

struct TrainResult {
    NetworkParams params;
    std::vector<double> epoch_mean_loss;
};

/// Runs epochs x batches of sample -> encode -> forward -> batch-hard loss ->
/// backward -> optimizer step. Per-sample point sampling is seeded from
/// (rng_seed, epoch, batch, sample), batch identity draws from a separate
/// stream, so the run is reproducible. Gradients accumulate in sample order
/// through per-slot buffers, which keeps results identical for any thread
/// count. When out_dir is set, writes loss_curve.csv, per-epoch checkpoints,
/// and params.bin.
inline TrainResult train(const CropDatabase& db, const TrainConfig& cfg,
                         const std::string& out_dir = "", int threads = 1,
                         const NetShape& shape = {}) {
    cfg.validate();
    if (db.eligible.size() < static_cast<size_t>(cfg.ids_per_batch))
        throw InsufficientTracks("training needs " + std::to_string(cfg.ids_per_batch) +
                                 " tracks with >= 3 crops, dataset has " +
                                 std::to_string(db.eligible.size()));

    TrainResult result;
    result.params = init_params(cfg.rng_seed, cfg.num_classes, shape);
    AdamState state = make_adam_state(result.params);

    SamplerConfig sampler;
    sampler.n_fg = cfg.n_fg;
    sampler.n_env = cfg.n_env;
    sampler.num_classes = cfg.num_classes;

    const int batches =
        cfg.batches_per_epoch > 0
            ? cfg.batches_per_epoch
            : std::max<int>(1, static_cast<int>(db.eligible.size()) / cfg.ids_per_batch);
    const int n = 3 * cfg.ids_per_batch;
    const int slots = std::max(1, threads);

    std::vector<ModalityTensors> mods(n);
    std::vector<ForwardTrace> traces(n);
    std::vector<int64_t> labels(n);
    std::vector<NetworkParams> slot_grads(slots, zeros_like(result.params));
    NetworkParams grads = zeros_like(result.params);
    Matrix embeddings(result.params.embedding_dim(), n);

    std::ofstream curve;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        curve = open_output(out_dir + "/loss_curve.csv");
        curve << "epoch,mean_loss\n";
    }

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double loss_sum = 0.0;
        for (int batch = 0; batch < batches; ++batch) {
            Rng id_rng(derive_seed(cfg.rng_seed, 0x1d5, static_cast<uint64_t>(epoch),
                                   static_cast<uint64_t>(batch)));
            std::vector<CropRef> refs = sample_batch(db, cfg, id_rng);

            parallel_for(static_cast<size_t>(n), threads, [&](size_t s) {
                const CropEntry& entry = db.tracks[refs[s].track][refs[s].entry];
                SamplerConfig local = sampler;
                local.rng_seed = derive_seed(cfg.rng_seed, static_cast<uint64_t>(epoch),
                                             static_cast<uint64_t>(batch), s);
                PointCloudPair pc =
                    sample_points(db.images[entry.frame_store],
                                  db.class_maps[entry.frame_store], entry.obs, local);
                mods[s] = encode_modalities(pc, local);
                labels[s] = static_cast<int64_t>(refs[s].track);
                embeddings.col(static_cast<Eigen::Index>(s)) =
                    forward(result.params, mods[s], traces[s]);
            });

            TripletLoss loss = batch_hard_triplet_loss(embeddings, labels, cfg.margin);
            loss_sum += loss.value;

            set_zero(grads);
            for (int base = 0; base < n; base += slots) {
                int group = std::min(slots, n - base);
                parallel_for(static_cast<size_t>(group), threads, [&](size_t k) {
                    int s = base + static_cast<int>(k);
                    set_zero(slot_grads[k]);
                    backward(result.params, traces[s], loss.grad.col(s), slot_grads[k]);
                });
                for (int k = 0; k < group; ++k) add_params(grads, slot_grads[k]);
            }
            optimizer_step(result.params, grads, state, cfg.learning_rate);
        }
        double mean = loss_sum / batches;
        result.epoch_mean_loss.push_back(mean);
        if (!out_dir.empty()) {
            curve << epoch << ',' << format_double(mean) << '\n';
            char leaf[40];
            std::snprintf(leaf, sizeof(leaf), "params_epoch_%03d.bin", epoch);
            save_params(out_dir + "/" + leaf, result.params);
        }
    }
    if (!out_dir.empty()) {
        save_params(out_dir + "/params.bin", result.params);
        curve.flush();
        if (!curve) throw IoError("cannot write " + out_dir + "/loss_curve.csv");
    }
    return result;
}

namespace detail {

// Walks matching scalar slots of two parameter sets in a fixed order.
template <typename Fn>
void visit_param_pairs(NetworkParams& a, NetworkParams& b, Fn&& fn) {
    auto visit_mlp = [&](Mlp& ma, Mlp& mb) {
        for (size_t l = 0; l < ma.weights.size(); ++l) {
            for (Eigen::Index i = 0; i < ma.weights[l].size(); ++i)
                fn(ma.weights[l].data()[i], mb.weights[l].data()[i]);
            for (Eigen::Index i = 0; i < ma.biases[l].size(); ++i)
                fn(ma.biases[l].data()[i], mb.biases[l].data()[i]);
        }
    };
    visit_mlp(a.fg_mlp, b.fg_mlp);
    visit_mlp(a.weight_head, b.weight_head);
    visit_mlp(a.env_mlp, b.env_mlp);
    visit_mlp(a.fusion, b.fusion);
}

}  // namespace detail

struct GradientCheckReport {
    double max_rel_error = 0;
    double loss = 0;
    int64_t parameter_count = 0;
};

/// Differentiates the batch-hard triplet loss through the network for every
/// parameter and compares against central finite differences with the given
/// step. Relative error uses max(|analytic|, |numeric|, 1e-6) as denominator.
inline GradientCheckReport gradient_check(NetworkParams params,
                                          const std::vector<ModalityTensors>& batch,
                                          const std::vector<int64_t>& labels, double margin,
                                          double step = 1e-4) {
    if (batch.empty() || batch.size() != labels.size())
        throw ShapeMismatch("gradient check: one label per sample");

    auto loss_at = [&](const NetworkParams& p) {
        Matrix emb(p.embedding_dim(), static_cast<Eigen::Index>(batch.size()));
        ForwardTrace trace;
        for (size_t s = 0; s < batch.size(); ++s)
            emb.col(static_cast<Eigen::Index>(s)) = forward(p, batch[s], trace);
        return batch_hard_triplet_loss(emb, labels, margin).value;
    };

    NetworkParams analytic = zeros_like(params);
    {
        Matrix emb(params.embedding_dim(), static_cast<Eigen::Index>(batch.size()));
        std::vector<ForwardTrace> traces(batch.size());
        for (size_t s = 0; s < batch.size(); ++s)
            emb.col(static_cast<Eigen::Index>(s)) = forward(params, batch[s], traces[s]);
        TripletLoss loss = batch_hard_triplet_loss(emb, labels, margin);
        for (size_t s = 0; s < batch.size(); ++s)
            backward(params, traces[s], loss.grad.col(static_cast<Eigen::Index>(s)), analytic);
    }

    GradientCheckReport report;
    report.loss = loss_at(params);
    detail::visit_param_pairs(params, analytic, [&](double& slot, double& grad) {
        ++report.parameter_count;
        double saved = slot;
        slot = saved + step;
        double up = loss_at(params);
        slot = saved - step;
        double down = loss_at(params);
        slot = saved;
        double numeric = (up - down) / (2.0 * step);
        double rel = std::abs(grad - numeric) /
                     std::max({std::abs(grad), std::abs(numeric), 1e-6});
        report.max_rel_error = std::max(report.max_rel_error, rel);
    });
    return report;
}

/// Canonical check instance: the reduced network over two identities with
/// three crops each, 32 foreground and 16 environment points per crop, all
/// synthesized from the seed.
inline GradientCheckReport reference_gradient_check(uint64_t seed = 0, double step = 1e-4,
                                                    int num_classes = 2) {
    Rng rng(derive_seed(seed, 0x6a, 1));
    NetworkParams params = init_params(derive_seed(seed, 0x6a, 2), num_classes,
                                       NetShape::tiny(num_classes));
    // The weight head initializes to zero; nudge it so its gradients are
    // exercised away from the uniform-softmax stationary point.
    for (auto& w : params.weight_head.weights)
        for (Eigen::Index i = 0; i < w.size(); ++i)
            w.data()[i] = uniform_range(rng, -0.3, 0.3);

    const int n_fg = 32, n_env = 16;
    std::vector<ModalityTensors> batch(6);
    std::vector<int64_t> labels = {0, 0, 0, 1, 1, 1};
    for (auto& mod : batch) {
        mod.fg_features = Matrix(5, n_fg);
        mod.env_features = Matrix(5 + num_classes, n_env);
        for (int c = 0; c < n_fg; ++c) {
            mod.fg_features(0, c) = uniform_range(rng, -0.5, 0.5);
            mod.fg_features(1, c) = uniform_range(rng, -0.5, 0.5);
            for (int r = 2; r < 5; ++r) mod.fg_features(r, c) = uniform_unit(rng);
        }
        mod.env_features.setZero();
        for (int c = 0; c < n_env; ++c) {
            mod.env_features(0, c) = uniform_range(rng, -1.0, 1.0);
            mod.env_features(1, c) = uniform_range(rng, -1.0, 1.0);
            for (int r = 2; r < 5; ++r) mod.env_features(r, c) = uniform_unit(rng);
            int class_id = 1 + static_cast<int>(uniform_index(rng, num_classes));
            mod.env_features(4 + class_id, c) = 1.0;
        }
        BBox crop{static_cast<int>(uniform_index(rng, 40)),
                  static_cast<int>(uniform_index(rng, 30)), 0, 0};
        crop.x1 = crop.x0 + 8 + static_cast<int>(uniform_index(rng, 40));
        crop.y1 = crop.y0 + 8 + static_cast<int>(uniform_index(rng, 30));
        mod.position_embedding = encode_position(crop, 128, 96);
    }
    return gradient_check(std::move(params), batch, labels, 0.2, step);
}

}  // namespace mots
