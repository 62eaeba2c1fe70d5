#pragma once

// Tracking-plus-segmentation evaluation: per-frame mask matching at
// IoU > 0.5, identity-switch counting against each ground-truth track's
// most recent match, and the MOTSA / sMOTSA summary scores.

#include <charconv>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mots/mask.hpp"

namespace mots {

struct EvalCounts {
    int64_t tp = 0;
    int64_t fp = 0;
    int64_t fn = 0;
    int64_t ids = 0;
    double soft_tp = 0.0;  // sum of matched-pair IoUs
    int64_t gt_total = 0;
};

struct FrameMatches {
    std::vector<std::pair<int, int>> pairs;  // (gt index, hyp index)
    std::vector<double> ious;                // one per pair
    std::vector<int> unmatched_gt;
    std::vector<int> unmatched_hyp;
};

namespace detail {

inline void require_disjoint(const std::vector<InstanceObservation>& set, const char* label) {
    for (size_t i = 0; i < set.size(); ++i)
        for (size_t j = i + 1; j < set.size(); ++j)
            if (mask_iou(set[i].mask, set[j].mask) > 0.0)
                throw OverlappingMasks(std::string(label) + " masks overlap in frame " +
                                       std::to_string(set[i].frame_index));
}

}  // namespace detail

/// Matches ground truth to hypotheses within one frame: a pair matches
/// iff mask IoU > 0.5. With mutually disjoint masks on both sides this
/// mapping is one-to-one without any search.
inline FrameMatches match_frame(const std::vector<InstanceObservation>& gt,
                                const std::vector<InstanceObservation>& hyp) {
    detail::require_disjoint(gt, "ground-truth");
    detail::require_disjoint(hyp, "hypothesis");
    FrameMatches out;
    std::vector<char> hyp_taken(hyp.size(), 0);
    for (size_t g = 0; g < gt.size(); ++g) {
        bool matched = false;
        for (size_t h = 0; h < hyp.size(); ++h) {
            double iou = mask_iou(gt[g].mask, hyp[h].mask);
            if (iou > 0.5) {
                out.pairs.emplace_back(int(g), int(h));
                out.ious.push_back(iou);
                hyp_taken[h] = 1;
                matched = true;
                break;  // disjointness makes further matches impossible
            }
        }
        if (!matched) out.unmatched_gt.push_back(int(g));
    }
    for (size_t h = 0; h < hyp.size(); ++h)
        if (!hyp_taken[h]) out.unmatched_hyp.push_back(int(h));
    return out;
}

/// Accumulates counts over an ordered frame sequence. An identity switch
/// is a ground-truth track matched to a hypothesis id different from the
/// hypothesis id of its most recent previous match, however long ago.
inline EvalCounts accumulate(const std::vector<std::vector<InstanceObservation>>& gt_frames,
                             const std::vector<std::vector<InstanceObservation>>& hyp_frames) {
    if (gt_frames.size() != hyp_frames.size())
        throw DimensionMismatch("accumulate: frame counts differ");
    EvalCounts counts;
    std::map<int, int> last_match;  // gt track id -> most recent hyp id
    for (size_t f = 0; f < gt_frames.size(); ++f) {
        FrameMatches m = match_frame(gt_frames[f], hyp_frames[f]);
        counts.tp += int64_t(m.pairs.size());
        counts.fn += int64_t(m.unmatched_gt.size());
        counts.fp += int64_t(m.unmatched_hyp.size());
        counts.gt_total += int64_t(gt_frames[f].size());
        for (size_t k = 0; k < m.pairs.size(); ++k) {
            counts.soft_tp += m.ious[k];
            int gt_id = gt_frames[f][m.pairs[k].first].track_id;
            int hyp_id = hyp_frames[f][m.pairs[k].second].track_id;
            auto it = last_match.find(gt_id);
            if (it != last_match.end() && it->second != hyp_id) ++counts.ids;
            last_match[gt_id] = hyp_id;
        }
    }
    return counts;
}

inline double motsa(const EvalCounts& c) {
    if (c.gt_total <= 0) throw EmptyGroundTruth("motsa: no ground-truth instances");
    return double(c.tp - c.fp - c.ids) / double(c.gt_total);
}

inline double smotsa(const EvalCounts& c) {
    if (c.gt_total <= 0) throw EmptyGroundTruth("smotsa: no ground-truth instances");
    return (c.soft_tp - double(c.fp) - double(c.ids)) / double(c.gt_total);
}

/// Accumulates two observation lists. Frames absent from one side count
/// as empty on that side.
inline EvalCounts evaluate_files(const std::vector<InstanceObservation>& gt,
                                 const std::vector<InstanceObservation>& hyp) {
    auto gt_seq = group_by_frame(gt);
    auto hyp_seq = group_by_frame(hyp);
    size_t n = std::max(gt_seq.size(), hyp_seq.size());
    gt_seq.resize(n);
    hyp_seq.resize(n);
    return accumulate(gt_seq, hyp_seq);
}

inline std::string eval_report_header() { return "sequence,sMOTSA,MOTSA,IDS,TP,FP,FN"; }

inline std::string eval_report_row(const std::string& sequence, const EvalCounts& c) {
    std::ostringstream row;
    row << sequence << ',' << format_double(smotsa(c)) << ',' << format_double(motsa(c)) << ','
        << c.ids << ',' << c.tp << ',' << c.fp << ',' << c.fn;
    return row.str();
}

}  // namespace mots
