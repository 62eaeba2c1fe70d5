#include <gtest/gtest.h>

#include <map>

#include "mots/mots_eval.hpp"

using namespace mots;

namespace {

constexpr int kW = 24, kH = 12;

InstanceObservation inst(int frame, int id, std::vector<std::pair<int, int>> pixels) {
    Bitmap dense(kW, kH);
    for (auto [x, y] : pixels) dense.at(x, y) = 1;
    InstanceObservation obs;
    obs.frame_index = frame;
    obs.track_id = id;
    obs.mask = rle_encode(dense);
    return obs;
}

// 2x2 square with top-left corner (x, y)
std::vector<std::pair<int, int>> square(int x, int y) {
    return {{x, y}, {x + 1, y}, {x, y + 1}, {x + 1, y + 1}};
}

// 3 of the 4 square pixels: IoU 0.75 against the full square
std::vector<std::pair<int, int>> square_minus_corner(int x, int y) {
    return {{x, y}, {x + 1, y}, {x, y + 1}};
}

TEST(MatchFrame, IdenticalSetsAllMatch) {
    std::vector<InstanceObservation> gt{inst(0, 1, square(1, 1)), inst(0, 2, square(6, 6))};
    FrameMatches m = match_frame(gt, gt);
    ASSERT_EQ(m.pairs.size(), 2u);
    EXPECT_DOUBLE_EQ(m.ious[0], 1.0);
    EXPECT_DOUBLE_EQ(m.ious[1], 1.0);
    EXPECT_TRUE(m.unmatched_gt.empty());
    EXPECT_TRUE(m.unmatched_hyp.empty());
}

TEST(MatchFrame, TwoThirdsOverlapMatches) {
    std::vector<InstanceObservation> gt{inst(0, 1, {{2, 2}, {3, 2}, {4, 2}})};
    std::vector<InstanceObservation> hyp{inst(0, 9, {{2, 2}, {3, 2}})};
    FrameMatches m = match_frame(gt, hyp);
    ASSERT_EQ(m.pairs.size(), 1u);
    EXPECT_DOUBLE_EQ(m.ious[0], 2.0 / 3.0);
}

TEST(MatchFrame, BelowThresholdNothingMatches) {
    // gt of 10 pixels; two hypotheses covering 4 disjoint pixels each:
    // both at IoU 0.4
    std::vector<std::pair<int, int>> strip;
    for (int x = 0; x < 10; ++x) strip.emplace_back(x, 0);
    std::vector<InstanceObservation> gt{inst(0, 1, strip)};
    std::vector<InstanceObservation> hyp{
        inst(0, 7, {{0, 0}, {1, 0}, {2, 0}, {3, 0}}),
        inst(0, 8, {{4, 0}, {5, 0}, {6, 0}, {7, 0}})};
    FrameMatches m = match_frame(gt, hyp);
    EXPECT_TRUE(m.pairs.empty());
    EXPECT_EQ(m.unmatched_gt.size(), 1u);
    EXPECT_EQ(m.unmatched_hyp.size(), 2u);
}

TEST(MatchFrame, RejectsOverlappingInputs) {
    std::vector<InstanceObservation> bad{inst(0, 1, square(1, 1)), inst(0, 2, square(2, 2))};
    std::vector<InstanceObservation> ok{inst(0, 1, square(8, 8))};
    EXPECT_THROW(match_frame(bad, ok), OverlappingMasks);
    EXPECT_THROW(match_frame(ok, bad), OverlappingMasks);
}

TEST(Accumulate, NoSwitchOnConstantIds) {
    std::vector<std::vector<InstanceObservation>> gt, hyp;
    for (int f = 0; f < 5; ++f) {
        gt.push_back({inst(f, 1, square(f, 1))});
        hyp.push_back({inst(f, 42, square(f, 1))});
    }
    EvalCounts c = accumulate(gt, hyp);
    EXPECT_EQ(c.ids, 0);
    EXPECT_EQ(c.tp, 5);
    EXPECT_EQ(c.fn, 0);
    EXPECT_EQ(c.fp, 0);
    EXPECT_EQ(c.gt_total, 5);
}

TEST(Accumulate, GapThenSameIdIsNoSwitch) {
    std::vector<std::vector<InstanceObservation>> gt, hyp;
    for (int f = 0; f < 8; ++f) {
        gt.push_back({inst(f, 1, square(f, 1))});
        bool detected = f < 2 || f > 4;  // unmatched frames 2..4
        hyp.push_back(detected ? std::vector<InstanceObservation>{inst(f, 3, square(f, 1))}
                               : std::vector<InstanceObservation>{});
    }
    EvalCounts c = accumulate(gt, hyp);
    EXPECT_EQ(c.ids, 0);
    EXPECT_EQ(c.fn, 3);
    // same gap but a different id afterwards: one switch
    for (int f = 5; f < 8; ++f) hyp[f] = {inst(f, 4, square(f, 1))};
    EXPECT_EQ(accumulate(gt, hyp).ids, 1);
}

// ten frames, two gt tracks; one injected id switch, one missed frame,
// one spurious detection; every quantity chased through by hand
TEST(Accumulate, HandTracedScenario) {
    std::vector<std::vector<InstanceObservation>> gt(10), hyp(10);
    for (int f = 0; f < 10; ++f) {
        gt[f].push_back(inst(f, 1, square(1 + f, 1)));   // track A
        gt[f].push_back(inst(f, 2, square(1 + f, 7)));   // track B

        // A: exact masks, hyp id 1 for frames 0-4, then id 3: 1 switch
        hyp[f].push_back(inst(f, f < 5 ? 1 : 3, square(1 + f, 1)));
        // B: 3/4 of the gt square (IoU 0.75), missing at frame 7
        if (f != 7) hyp[f].push_back(inst(f, 2, square_minus_corner(1 + f, 7)));
        // one spurious disjoint box at frame 2
        if (f == 2) hyp[f].push_back(inst(f, 4, square(20, 4)));
    }
    EvalCounts c = accumulate(gt, hyp);
    EXPECT_EQ(c.tp, 19);
    EXPECT_EQ(c.fn, 1);
    EXPECT_EQ(c.fp, 1);
    EXPECT_EQ(c.ids, 1);
    EXPECT_EQ(c.gt_total, 20);
    EXPECT_NEAR(c.soft_tp, 10.0 + 9 * 0.75, 1e-12);
    EXPECT_NEAR(motsa(c), 0.85, 1e-12);
    EXPECT_NEAR(smotsa(c), 0.7375, 1e-12);
    EXPECT_EQ(c.tp + c.fn, c.gt_total);
}

TEST(Scores, FormulaArithmetic) {
    EvalCounts c{8, 1, 2, 1, 7.2, 10};
    EXPECT_DOUBLE_EQ(motsa(c), 0.6);
    EXPECT_DOUBLE_EQ(smotsa(c), 0.52);

    EvalCounts perfect{10, 0, 0, 0, 10.0, 10};
    EXPECT_DOUBLE_EQ(motsa(perfect), 1.0);
    EXPECT_DOUBLE_EQ(smotsa(perfect), 1.0);

    EvalCounts miss{0, 0, 1, 0, 0.0, 1};
    EXPECT_DOUBLE_EQ(motsa(miss), 0.0);

    EvalCounts empty{};
    EXPECT_THROW(motsa(empty), EmptyGroundTruth);
    EXPECT_THROW(smotsa(empty), EmptyGroundTruth);
}

std::vector<InstanceObservation> random_tracked_file(uint64_t seed) {
    Rng rng(seed);
    std::vector<InstanceObservation> all;
    for (int f = 0; f < 12; ++f)
        for (int k = 0; k < 3; ++k) {
            if (uniform_unit(rng) < 0.2) continue;  // objects come and go
            int x = k * 8 + int(uniform_index(rng, 4));
            int y = 1 + int(uniform_index(rng, 8));
            auto obs = inst(f, k + 1, square(x, y));
            obs.class_id = 1 + k % 2;
            all.push_back(obs);
        }
    return all;
}

TEST(EvaluateFiles, SelfEvaluationIsPerfect) {
    auto file = random_tracked_file(5);
    EvalCounts c = evaluate_files(file, file);
    EXPECT_DOUBLE_EQ(motsa(c), 1.0);
    EXPECT_DOUBLE_EQ(smotsa(c), 1.0);
    EXPECT_EQ(c.ids, 0);
    EXPECT_EQ(c.fn, 0);
    EXPECT_EQ(c.fp, 0);
}

TEST(EvaluateFiles, InvariantUnderHypothesisRelabeling) {
    auto gt = random_tracked_file(6);
    auto hyp = random_tracked_file(7);
    EvalCounts before = evaluate_files(gt, hyp);
    std::map<int, int> relabel{{1, 17}, {2, 5}, {3, 99}};
    auto renamed = hyp;
    for (auto& obs : renamed) obs.track_id = relabel.at(obs.track_id);
    EvalCounts after = evaluate_files(gt, renamed);
    EXPECT_EQ(before.tp, after.tp);
    EXPECT_EQ(before.fp, after.fp);
    EXPECT_EQ(before.fn, after.fn);
    EXPECT_EQ(before.ids, after.ids);
    EXPECT_DOUBLE_EQ(before.soft_tp, after.soft_tp);
}

TEST(EvaluateFiles, SoftScoreNeverExceedsHard) {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        auto gt = random_tracked_file(seed);
        auto hyp = random_tracked_file(seed + 100);
        EvalCounts c = evaluate_files(gt, hyp);
        EXPECT_LE(c.soft_tp, double(c.tp) + 1e-12);
        EXPECT_EQ(c.tp + c.fn, c.gt_total);
        EXPECT_LE(smotsa(c), motsa(c) + 1e-12);
    }
}

TEST(Report, CsvShape) {
    EXPECT_EQ(eval_report_header(), "sequence,sMOTSA,MOTSA,IDS,TP,FP,FN");
    EvalCounts c{8, 1, 2, 1, 7.2, 10};
    EXPECT_EQ(eval_report_row("seq00", c), "seq00,0.52,0.6,1,8,1,2");
    EXPECT_EQ(std::stod(format_double(1.0 / 3.0)), 1.0 / 3.0);  // round-trips exactly
}

}  // namespace
