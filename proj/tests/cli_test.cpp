#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <gtest/gtest.h>

#include "mots/cli.hpp"

namespace fs = std::filesystem;
using namespace mots;

#ifndef MOTS_CLI_PATH
#error "MOTS_CLI_PATH must point at the command-line binary"
#endif

namespace {

struct CmdResult {
    int code = -1;
    std::string out;
};

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

fs::path fresh_dir(const std::string& leaf) {
    fs::path dir = fs::path(::testing::TempDir()) / leaf;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

CmdResult run_cli(const std::string& args, const fs::path& capture) {
    std::string cmd = std::string(MOTS_CLI_PATH) + " " + args + " >" + capture.string() +
                      " 2>&1";
    int status = std::system(cmd.c_str());
    CmdResult result;
    result.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    result.out = slurp(capture);
    return result;
}

std::vector<InstanceObservation> tiny_gt() {
    Bitmap a(16, 8, uint8_t(0)), b(16, 8, uint8_t(0));
    for (int y = 1; y < 5; ++y)
        for (int x = 1; x < 5; ++x) a.at(x, y) = 1;
    for (int y = 3; y < 7; ++y)
        for (int x = 9; x < 13; ++x) b.at(x, y) = 1;
    std::vector<InstanceObservation> out;
    for (int f = 0; f < 3; ++f) {
        InstanceObservation one{f, 1, 2, rle_encode(a)};
        InstanceObservation two{f, 2, 2, rle_encode(b)};
        out.push_back(one);
        out.push_back(two);
    }
    return out;
}

}  // namespace

TEST(CliEval, SelfEvaluationPrintsPerfectScoreAndWritesReport) {
    fs::path dir = fresh_dir("cli_eval_self");
    write_mask_file((dir / "gt.txt").string(), tiny_gt());
    CmdResult r = run_cli("eval --gt " + (dir / "gt.txt").string() + " --hyp " +
                              (dir / "gt.txt").string() + " --report " +
                              (dir / "report.csv").string(),
                          dir / "stdout.txt");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("sMOTSA 1 MOTSA 1 IDS 0"), std::string::npos) << r.out;
    std::string report = slurp(dir / "report.csv");
    EXPECT_EQ(report.rfind("sequence,sMOTSA,MOTSA,IDS,TP,FP,FN\ngt,1,1,0,", 0), 0u) << report;
}

TEST(CliEval, MissingInputExitsWithIoCode) {
    fs::path dir = fresh_dir("cli_eval_missing");
    CmdResult r = run_cli("eval --gt " + (dir / "absent.txt").string() + " --hyp " +
                              (dir / "absent.txt").string(),
                          dir / "stdout.txt");
    EXPECT_EQ(r.code, 2) << r.out;
    EXPECT_NE(r.out.find("error:"), std::string::npos) << r.out;
}

TEST(CliEval, CorruptMaskFileExitsWithIoCode) {
    fs::path dir = fresh_dir("cli_eval_corrupt");
    std::ofstream(dir / "bad.txt") << "0 1 2 not numbers at all\n";
    CmdResult r = run_cli("eval --gt " + (dir / "bad.txt").string() + " --hyp " +
                              (dir / "bad.txt").string(),
                          dir / "stdout.txt");
    EXPECT_EQ(r.code, 2) << r.out;
}

TEST(CliGradcheck, ReferenceConfigurationExitsZero) {
    fs::path dir = fresh_dir("cli_gradcheck");
    CmdResult r = run_cli("gradcheck", dir / "stdout.txt");
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("max relative error"), std::string::npos);
}

TEST(CliParsing, UnknownFlagsAndMissingSubcommandFail) {
    fs::path dir = fresh_dir("cli_parse");
    EXPECT_NE(run_cli("", dir / "a.txt").code, 0);
    EXPECT_NE(run_cli("eval --gt x", dir / "b.txt").code, 0);
    EXPECT_NE(run_cli("frobnicate", dir / "c.txt").code, 0);
}

TEST(CliGen, GeneratesValidatesAndFlagsCorruption) {
    fs::path dir = fresh_dir("cli_gen");
    fs::path data = dir / "data";
    CmdResult gen = run_cli("gen --out " + data.string() +
                                " --sequences 2 --frames 10 --width 96 --height 64 "
                                "--min-objects 4 --max-objects 5 --seed 3",
                            dir / "gen.txt");
    ASSERT_EQ(gen.code, 0) << gen.out;
    EXPECT_NE(gen.out.find("clean"), std::string::npos);

    CmdResult check = run_cli("gen --check-only --out " + data.string(), dir / "check.txt");
    EXPECT_EQ(check.code, 0) << check.out;

    SequenceData seq = load_sequence(data.string(), "seq0000");
    InstanceObservation clone = seq.frames[0][0];
    clone.track_id = 999;
    seq.frames[0].push_back(clone);
    write_sequence(data.string(), seq);
    CmdResult bad = run_cli("gen --check-only --out " + data.string(), dir / "bad.txt");
    EXPECT_EQ(bad.code, 1) << bad.out;
    EXPECT_NE(bad.out.find("overlaps"), std::string::npos) << bad.out;
}

TEST(CliPipeline, TrainTrackEvalRoundTrip) {
    fs::path dir = fresh_dir("cli_pipeline");
    fs::path data = dir / "data";
    ASSERT_EQ(run_cli("gen --out " + data.string() +
                          " --sequences 1 --frames 12 --width 96 --height 64 "
                          "--min-objects 4 --max-objects 5 --seed 5",
                      dir / "gen.txt")
                  .code,
              0);

    std::ofstream(dir / "cfg.json") << R"({"epochs": 3, "n_fg": 24, "n_env": 12})";
    CmdResult train = run_cli("train --data " + data.string() + " --out " +
                                  (dir / "run").string() + " --config " +
                                  (dir / "cfg.json").string() +
                                  " --epochs 1 --ids-per-batch 2 --seed 4",
                              dir / "train.txt");
    ASSERT_EQ(train.code, 0) << train.out;
    EXPECT_NE(train.out.find("trained 1 epochs"), std::string::npos) << train.out;

    fs::path masks = data / "seq0000" / "instances.txt";
    CmdResult track = run_cli("track --masks " + masks.string() + " --params " +
                                  (dir / "run" / "params.bin").string() + " --seq " +
                                  (data / "seq0000").string() + " --out " +
                                  (dir / "tracked.txt").string() +
                                  " --n-fg 24 --n-env 12 --seed 6",
                              dir / "track.txt");
    ASSERT_EQ(track.code, 0) << track.out;
    EXPECT_NE(track.out.find("median embedding latency"), std::string::npos);

    CmdResult eval = run_cli("eval --gt " + masks.string() + " --hyp " +
                                 (dir / "tracked.txt").string(),
                             dir / "eval.txt");
    EXPECT_EQ(eval.code, 0) << eval.out;
    EXPECT_NE(eval.out.find("sMOTSA"), std::string::npos);
}

TEST(CliTrack, MissingParamsFileExitsWithIoCode) {
    fs::path dir = fresh_dir("cli_track_missing");
    fs::path data = dir / "data";
    ASSERT_EQ(run_cli("gen --out " + data.string() +
                          " --sequences 1 --frames 6 --width 96 --height 64 --seed 2",
                      dir / "gen.txt")
                  .code,
              0);
    CmdResult r = run_cli("track --masks " + (data / "seq0000" / "instances.txt").string() +
                              " --params " + (dir / "nope.bin").string() + " --seq " +
                              (data / "seq0000").string() + " --out " +
                              (dir / "t.txt").string(),
                          dir / "track.txt");
    EXPECT_EQ(r.code, 2) << r.out;
}

TEST(CliViz, UniformWeightsKeepFirstTenthAndEnvPointsStayOffSegment) {
    fs::path dir = fresh_dir("cli_viz");
    fs::path data = dir / "data";
    ASSERT_EQ(run_cli("gen --out " + data.string() +
                          " --sequences 1 --frames 4 --width 96 --height 64 "
                          "--min-objects 3 --max-objects 3 --seed 9",
                      dir / "gen.txt")
                  .code,
              0);
    // a freshly initialized network has a zeroed weight head: uniform weights
    NetworkParams params = init_params(1, 2);
    save_params((dir / "fresh.bin").string(), params);

    fs::path masks = data / "seq0000" / "instances.txt";
    const int n_fg = 50, n_env = 30;
    CmdResult viz = run_cli("viz --masks " + masks.string() + " --params " +
                                (dir / "fresh.bin").string() + " --seq " +
                                (data / "seq0000").string() + " --out " +
                                (dir / "viz").string() + " --n-fg 50 --n-env 30 --seed 21",
                            dir / "viz.txt");
    ASSERT_EQ(viz.code, 0) << viz.out;
    ASSERT_TRUE(fs::exists(dir / "viz" / "overlay_000000.ppm"));

    SequenceData seq = load_sequence(data.string(), "seq0000");
    auto frames = group_by_frame(read_mask_file(masks.string()));

    struct Line {
        int frame, track;
        std::string kind;
        int u, v;
    };
    std::vector<Line> lines;
    std::ifstream crit(dir / "viz" / "critical_points.txt");
    Line line;
    while (crit >> line.frame >> line.track >> line.kind >> line.u >> line.v)
        lines.push_back(line);
    ASSERT_FALSE(lines.empty());

    // frame 0, first instance: its fg lines open the file and must be the
    // first ceil(n_fg/10) sampled points, the tie-break order under uniform
    // weights
    SamplerConfig sampler;
    sampler.n_fg = n_fg;
    sampler.n_env = n_env;
    sampler.num_classes = params.num_classes;
    sampler.rng_seed = derive_seed(21, 0, 0);
    PointCloudPair cloud =
        sample_points(seq.images[0], seq.class_maps[0], frames[0][0], sampler);
    const size_t keep = (n_fg + 9) / 10;
    for (size_t k = 0; k < keep; ++k) {
        ASSERT_EQ(lines[k].kind, "fg");
        ASSERT_EQ(lines[k].frame, 0);
        ASSERT_EQ(lines[k].track, frames[0][0].track_id);
        EXPECT_EQ(lines[k].u, int(cloud.foreground[k].u));
        EXPECT_EQ(lines[k].v, int(cloud.foreground[k].v));
    }

    // every env line: inside the instance's enlarged crop, off its segment,
    // and at most five per instance
    std::map<std::pair<int, int>, int> env_counts;
    for (const Line& l : lines) {
        if (l.kind != "env") continue;
        const InstanceObservation* obs = nullptr;
        for (const auto& cand : frames[size_t(l.frame)])
            if (cand.track_id == l.track) obs = &cand;
        ASSERT_NE(obs, nullptr);
        Bitmap dense = rle_decode(obs->mask);
        EXPECT_EQ(int(dense.at(l.u, l.v)), 0);
        BBox crop = enlarge_bbox(tight_bbox(obs->mask), sampler.crop_scale, seq.width,
                                 seq.height);
        EXPECT_TRUE(crop.contains(l.u, l.v));
        ++env_counts[{l.frame, l.track}];
    }
    EXPECT_FALSE(env_counts.empty());
    for (const auto& [key, count] : env_counts) EXPECT_LE(count, 5);
}
