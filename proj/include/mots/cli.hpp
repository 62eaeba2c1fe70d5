#pragma once

// Command-line wiring for the whole toolkit: dataset generation, embedding
// training, online tracking, metric evaluation, the gradient check, and
// overlay export. Commands exit 0 on success, 1 on validation failures,
// and 2 on I/O failures.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mots/mots_eval.hpp"
#include "mots/pipeline.hpp"
#include "mots/synth.hpp"
#include "mots/triplet.hpp"

namespace mots {
namespace cli {

struct GenOptions {
    std::string out;
    int sequences = 1;
    std::string prefix = "seq";
    uint64_t seed = 0;
    int threads = 1;
    bool check_only = false;
    bool no_occlusion = false;
    WorldConfig world;
};

inline int run_gen(const GenOptions& opt) {
    if (!opt.check_only) {
        if (opt.sequences < 1) throw Error("gen: need at least one sequence");
        WorldConfig base = opt.world;
        base.allow_occlusion = !opt.no_occlusion;
        base.validate();
        std::filesystem::create_directories(opt.out);
        parallel_for(static_cast<size_t>(opt.sequences), opt.threads, [&](size_t index) {
            WorldConfig world = base;
            world.rng_seed = derive_seed(opt.seed, 0x9e, index);
            char name[64];
            std::snprintf(name, sizeof(name), "%s%04d", opt.prefix.c_str(),
                          static_cast<int>(index));
            write_sequence(opt.out, gen_sequence(world, name));
        });
    }
    DatasetReport report = validate_dataset(opt.out);
    std::cout << report.summary() << "\n";
    return report.ok() ? 0 : 1;
}

struct TrainOptions {
    std::string data;
    std::string out;
    std::string config_path;
    TrainConfig config;
    int threads = 1;
    // which flags were given, to layer over the config file
    bool has_epochs = false, has_ids = false, has_margin = false, has_lr = false;
    bool has_batches = false, has_min_spacing = false, has_max_spacing = false;
    bool has_n_fg = false, has_n_env = false, has_classes = false, has_seed = false;
    TrainConfig flags;
    uint64_t seed = 0;
};

inline int run_train(const TrainOptions& opt) {
    TrainConfig cfg = opt.config_path.empty() ? TrainConfig{} : load_train_config(opt.config_path);
    if (opt.has_epochs) cfg.epochs = opt.flags.epochs;
    if (opt.has_ids) cfg.ids_per_batch = opt.flags.ids_per_batch;
    if (opt.has_margin) cfg.margin = opt.flags.margin;
    if (opt.has_lr) cfg.learning_rate = opt.flags.learning_rate;
    if (opt.has_batches) cfg.batches_per_epoch = opt.flags.batches_per_epoch;
    if (opt.has_min_spacing) cfg.min_spacing = opt.flags.min_spacing;
    if (opt.has_max_spacing) cfg.max_spacing = opt.flags.max_spacing;
    if (opt.has_n_fg) cfg.n_fg = opt.flags.n_fg;
    if (opt.has_n_env) cfg.n_env = opt.flags.n_env;
    if (opt.has_classes) cfg.num_classes = opt.flags.num_classes;
    if (opt.has_seed) cfg.rng_seed = opt.seed;
    cfg.validate();

    CropDatabase db = build_crop_database(opt.data, list_sequences(opt.data));
    TrainResult result = train(db, cfg, opt.out, opt.threads);
    std::cout << "trained " << cfg.epochs << " epochs over " << db.eligible.size()
              << " tracks, final mean loss "
              << format_double(result.epoch_mean_loss.back()) << ", parameters in " << opt.out
              << "/params.bin\n";
    return 0;
}

struct TrackOptions {
    std::string masks;
    std::string params_path;
    std::string seq_dir;
    std::string out;
    TrackerConfig tracker;
    int n_fg = 1000;
    int n_env = 500;
    bool zero_color = false;
    bool zero_position = false;
    uint64_t seed = 0;
    int threads = 1;
};

inline int run_track(const TrackOptions& opt) {
    NetworkParams params = load_params(opt.params_path);
    SequenceData seq = load_sequence_dir(opt.seq_dir);
    std::vector<InstanceObservation> detections = read_mask_file(opt.masks);

    SamplerConfig sampler;
    sampler.n_fg = opt.n_fg;
    sampler.n_env = opt.n_env;
    AblationConfig ablation{opt.zero_color, opt.zero_position};
    TrackRunResult result = track_detections(seq, detections, params, opt.tracker, sampler,
                                             ablation, opt.seed, opt.threads);
    write_mask_file(opt.out, result.tracked);
    std::cout << "tracked " << result.tracked.size() << " instances, median embedding latency "
              << format_double(result.median_latency_ms()) << " ms, results in " << opt.out
              << "\n";
    return 0;
}

struct EvalOptions {
    std::string gt;
    std::string hyp;
    std::string report;
    std::string sequence;
};

inline int run_eval(const EvalOptions& opt) {
    EvalCounts counts = evaluate_files(read_mask_file(opt.gt), read_mask_file(opt.hyp));
    std::string name = opt.sequence;
    if (name.empty()) name = std::filesystem::path(opt.gt).stem().string();
    if (!opt.report.empty()) {
        std::ofstream out = open_output(opt.report);
        out << eval_report_header() << "\n" << eval_report_row(name, counts) << "\n";
        out.flush();
        if (!out) throw IoError("cannot write " + opt.report);
    }
    std::cout << "sMOTSA " << format_double(smotsa(counts)) << " MOTSA "
              << format_double(motsa(counts)) << " IDS " << counts.ids << " TP " << counts.tp
              << " FP " << counts.fp << " FN " << counts.fn << "\n";
    return 0;
}

struct GradcheckOptions {
    uint64_t seed = 0;
    double step = 1e-4;
};

inline int run_gradcheck(const GradcheckOptions& opt) {
    GradientCheckReport report = reference_gradient_check(opt.seed, opt.step);
    std::cout << "max relative error " << format_double(report.max_rel_error) << " over "
              << report.parameter_count << " parameters, loss " << format_double(report.loss)
              << "\n";
    return report.max_rel_error < 1e-4 ? 0 : 1;
}

struct VizOptions {
    std::string masks;
    std::string params_path;
    std::string seq_dir;
    std::string out;
    int n_fg = 1000;
    int n_env = 500;
    uint64_t seed = 0;
};

inline Rgb blend(Rgb base, Rgb tint) {
    auto mix = [](uint8_t a, uint8_t b) {
        return static_cast<uint8_t>((static_cast<int>(a) + static_cast<int>(b)) / 2);
    };
    return Rgb{mix(base.r, tint.r), mix(base.g, tint.g), mix(base.b, tint.b)};
}

inline int run_viz(const VizOptions& opt) {
    NetworkParams params = load_params(opt.params_path);
    SequenceData seq = load_sequence_dir(opt.seq_dir);
    auto frames = group_by_frame(read_mask_file(opt.masks));
    if (frames.size() > seq.images.size())
        throw DimensionMismatch("viz: masks reference frames beyond the sequence");

    std::filesystem::create_directories(opt.out);
    std::ofstream critical = open_output(opt.out + "/critical_points.txt");
    std::vector<Rgb> palette = detail::make_palette(24);

    SamplerConfig sampler;
    sampler.n_fg = opt.n_fg;
    sampler.n_env = opt.n_env;
    sampler.num_classes = params.num_classes;
    sampler.validate();

    for (size_t f = 0; f < frames.size(); ++f) {
        Image overlay = seq.images[f];
        for (size_t i = 0; i < frames[f].size(); ++i) {
            const InstanceObservation& obs = frames[f][i];
            Rgb tint = palette[static_cast<size_t>(std::max(0, obs.track_id)) % palette.size()];
            Bitmap dense = rle_decode(obs.mask);
            for (int y = 0; y < overlay.height(); ++y)
                for (int x = 0; x < overlay.width(); ++x)
                    if (dense.at(x, y)) overlay.at(x, y) = blend(overlay.at(x, y), tint);

            SamplerConfig local = sampler;
            local.rng_seed = derive_seed(opt.seed, f, i);
            EmbeddingResult res =
                extract_embedding(seq.images[f], seq.class_maps[f], obs, local, params);

            // top tenth of foreground points by learned weight, ties by index
            std::vector<int> order(res.cloud.foreground.size());
            std::iota(order.begin(), order.end(), 0);
            std::sort(order.begin(), order.end(), [&](int a, int b) {
                double wa = res.trace.softmax_weights[a], wb = res.trace.softmax_weights[b];
                return wa != wb ? wa > wb : a < b;
            });
            size_t keep = (order.size() + 9) / 10;
            for (size_t k = 0; k < keep; ++k) {
                const FgPoint& p = res.cloud.foreground[static_cast<size_t>(order[k])];
                int u = static_cast<int>(p.u), v = static_cast<int>(p.v);
                overlay.at(u, v) = Rgb{255, 255, 255};
                critical << f << ' ' << obs.track_id << " fg " << u << ' ' << v << '\n';
            }

            // five most critical environment points: the indices the pooled
            // environment features selected most often
            if (!res.cloud.env_empty) {
                std::map<int, int> hits;
                for (int index : res.trace.env_argmax) ++hits[index];
                std::vector<std::pair<int, int>> ranked(hits.begin(), hits.end());
                std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
                    return a.second != b.second ? a.second > b.second : a.first < b.first;
                });
                size_t env_keep = std::min<size_t>(5, ranked.size());
                for (size_t k = 0; k < env_keep; ++k) {
                    const EnvPoint& p =
                        res.cloud.environment[static_cast<size_t>(ranked[k].first)];
                    int u = static_cast<int>(p.u), v = static_cast<int>(p.v);
                    overlay.at(u, v) = Rgb{0, 0, 0};
                    critical << f << ' ' << obs.track_id << " env " << u << ' ' << v << '\n';
                }
            }
        }
        char leaf[32];
        std::snprintf(leaf, sizeof(leaf), "overlay_%06d.ppm", static_cast<int>(f));
        write_ppm(opt.out + "/" + leaf, overlay);
    }
    critical.flush();
    if (!critical) throw IoError("cannot write " + opt.out + "/critical_points.txt");
    std::cout << "wrote " << frames.size() << " overlays to " << opt.out << "\n";
    return 0;
}

inline void add_gen(CLI::App& app, int& exit_code) {
    auto opt = std::make_shared<GenOptions>();
    CLI::App* cmd = app.add_subcommand("gen", "generate or check a synthetic dataset");
    cmd->add_option("--out", opt->out, "dataset directory")->required();
    cmd->add_option("--sequences", opt->sequences, "number of sequences");
    cmd->add_option("--prefix", opt->prefix, "sequence name prefix");
    cmd->add_option("--seed", opt->seed, "master seed");
    cmd->add_option("--threads", opt->threads, "worker threads");
    cmd->add_flag("--check-only", opt->check_only, "validate an existing dataset");
    cmd->add_option("--width", opt->world.width, "image width");
    cmd->add_option("--height", opt->world.height, "image height");
    cmd->add_option("--frames", opt->world.frames, "frames per sequence");
    cmd->add_option("--min-objects", opt->world.min_objects, "object count lower bound");
    cmd->add_option("--max-objects", opt->world.max_objects, "object count upper bound");
    cmd->add_option("--classes", opt->world.num_classes, "semantic class count");
    cmd->add_option("--min-speed", opt->world.min_speed, "speed lower bound, px/frame");
    cmd->add_option("--max-speed", opt->world.max_speed, "speed upper bound, px/frame");
    cmd->add_option("--min-size", opt->world.min_size, "object extent lower bound");
    cmd->add_option("--max-size", opt->world.max_size, "object extent upper bound");
    cmd->add_option("--palette", opt->world.palette_size, "distinct base colors");
    cmd->add_flag("--no-occlusion", opt->no_occlusion, "keep objects in disjoint lanes");
    cmd->callback([opt, &exit_code] { exit_code = run_gen(*opt); });
}

inline void add_train(CLI::App& app, int& exit_code) {
    auto opt = std::make_shared<TrainOptions>();
    CLI::App* cmd = app.add_subcommand("train", "train the embedding network");
    cmd->add_option("--data", opt->data, "dataset directory")->required();
    cmd->add_option("--out", opt->out, "output directory")->required();
    cmd->add_option("--config", opt->config_path, "training config JSON");
    cmd->add_option("--threads", opt->threads, "worker threads");
    auto bind = [&](const char* flag, auto& slot, bool& has, const char* help) {
        cmd->add_option(flag, slot, help)->each([&has](const std::string&) { has = true; });
    };
    bind("--epochs", opt->flags.epochs, opt->has_epochs, "training epochs");
    bind("--ids-per-batch", opt->flags.ids_per_batch, opt->has_ids, "identities per batch");
    bind("--margin", opt->flags.margin, opt->has_margin, "triplet margin");
    bind("--lr", opt->flags.learning_rate, opt->has_lr, "learning rate");
    bind("--batches", opt->flags.batches_per_epoch, opt->has_batches,
         "batches per epoch, 0 for one pass");
    bind("--min-spacing", opt->flags.min_spacing, opt->has_min_spacing, "smallest crop gap");
    bind("--max-spacing", opt->flags.max_spacing, opt->has_max_spacing, "largest crop gap");
    bind("--n-fg", opt->flags.n_fg, opt->has_n_fg, "foreground points per crop");
    bind("--n-env", opt->flags.n_env, opt->has_n_env, "environment points per crop");
    bind("--classes", opt->flags.num_classes, opt->has_classes, "semantic class count");
    bind("--seed", opt->seed, opt->has_seed, "training seed");
    cmd->callback([opt, &exit_code] { exit_code = run_train(*opt); });
}

inline void add_track(CLI::App& app, int& exit_code) {
    auto opt = std::make_shared<TrackOptions>();
    CLI::App* cmd = app.add_subcommand("track", "associate detections into tracks");
    cmd->add_option("--masks", opt->masks, "detection mask file")->required();
    cmd->add_option("--params", opt->params_path, "trained network parameters")->required();
    cmd->add_option("--seq", opt->seq_dir, "sequence directory")->required();
    cmd->add_option("--out", opt->out, "tracked mask file")->required();
    cmd->add_option("--alpha", opt->tracker.alpha, "mask IoU weight");
    cmd->add_option("--beta", opt->tracker.beta, "idle frames before retirement");
    cmd->add_option("--gamma", opt->tracker.gamma, "association threshold");
    cmd->add_option("--n-fg", opt->n_fg, "foreground points per instance");
    cmd->add_option("--n-env", opt->n_env, "environment points per instance");
    cmd->add_flag("--zero-color", opt->zero_color, "blank the color modality");
    cmd->add_flag("--zero-position", opt->zero_position, "blank the position modality");
    cmd->add_option("--seed", opt->seed, "sampling seed");
    cmd->add_option("--threads", opt->threads, "worker threads");
    cmd->callback([opt, &exit_code] { exit_code = run_track(*opt); });
}

inline void add_eval(CLI::App& app, int& exit_code) {
    auto opt = std::make_shared<EvalOptions>();
    CLI::App* cmd = app.add_subcommand("eval", "score hypotheses against ground truth");
    cmd->add_option("--gt", opt->gt, "ground-truth mask file")->required();
    cmd->add_option("--hyp", opt->hyp, "hypothesis mask file")->required();
    cmd->add_option("--report", opt->report, "CSV report path");
    cmd->add_option("--sequence", opt->sequence, "sequence name for the report");
    cmd->callback([opt, &exit_code] { exit_code = run_eval(*opt); });
}

inline void add_gradcheck(CLI::App& app, int& exit_code) {
    auto opt = std::make_shared<GradcheckOptions>();
    CLI::App* cmd = app.add_subcommand("gradcheck", "finite-difference gradient check");
    cmd->add_option("--seed", opt->seed, "configuration seed");
    cmd->add_option("--step", opt->step, "finite-difference step");
    cmd->callback([opt, &exit_code] { exit_code = run_gradcheck(*opt); });
}

inline void add_viz(CLI::App& app, int& exit_code) {
    auto opt = std::make_shared<VizOptions>();
    CLI::App* cmd = app.add_subcommand("viz", "export overlays and critical points");
    cmd->add_option("--masks", opt->masks, "mask file with track ids")->required();
    cmd->add_option("--params", opt->params_path, "trained network parameters")->required();
    cmd->add_option("--seq", opt->seq_dir, "sequence directory")->required();
    cmd->add_option("--out", opt->out, "output directory")->required();
    cmd->add_option("--n-fg", opt->n_fg, "foreground points per instance");
    cmd->add_option("--n-env", opt->n_env, "environment points per instance");
    cmd->add_option("--seed", opt->seed, "sampling seed");
    cmd->callback([opt, &exit_code] { exit_code = run_viz(*opt); });
}

}  // namespace cli

inline int cli_main(int argc, const char* const* argv) {
    CLI::App app{"point-cloud instance embedding and tracking toolkit"};
    app.require_subcommand(1);
    int exit_code = 0;
    cli::add_gen(app, exit_code);
    cli::add_train(app, exit_code);
    cli::add_track(app, exit_code);
    cli::add_eval(app, exit_code);
    cli::add_gradcheck(app, exit_code);
    cli::add_viz(app, exit_code);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const CorruptFile& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return exit_code;
}

}  // namespace mots
