#include "coe/reward.hpp"

#include <algorithm>
#include <cctype>

namespace coe {

namespace {

std::size_t intersection_size(const FrameSet& a, const FrameSet& b) {
    std::size_t n = 0;
    auto ia = a.indices.begin();
    auto ib = b.indices.begin();
    while (ia != a.indices.end() && ib != b.indices.end()) {
        if (*ia < *ib)
            ++ia;
        else if (*ib < *ia)
            ++ib;
        else {
            ++n;
            ++ia;
            ++ib;
        }
    }
    return n;
}

std::string normalize_answer(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    std::string out = s.substr(b, e - b);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

}  // namespace

double f1_frames(const FrameSet& pred, const FrameSet& gt) {
    const std::size_t denom = pred.size() + gt.size();
    if (denom == 0) return 0.0;
    return 2.0 * static_cast<double>(intersection_size(pred, gt)) / static_cast<double>(denom);
}

double temporal_iou(const FrameSet& cited, const FrameSet& anchored) {
    const std::size_t inter = intersection_size(cited, anchored);
    const std::size_t uni = cited.size() + anchored.size() - inter;
    if (uni == 0) return 0.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double answer_indicator(const std::string& pred_answer, const std::string& gt_answer) {
    return normalize_answer(pred_answer) == normalize_answer(gt_answer) ? 1.0 : 0.0;
}

RewardBreakdown composite_reward(const CoEResponse& resp, const FrameSet& gt_key_frames,
                                 const std::string& gt_answer, const RewardWeights& w,
                                 double fps, int n_frames) {
    const FrameSet anchored = intervals_to_frames(resp.anchors, fps, n_frames);
    const FrameSet cited = points_to_frames(extract_draft_timestamps(resp.draft), fps, n_frames);
    RewardBreakdown out;
    out.f1_grounding = f1_frames(anchored, gt_key_frames);
    out.iou_process = temporal_iou(cited, anchored);
    out.answer_correct = answer_indicator(resp.answer, gt_answer);
    out.total = w.grounding * out.f1_grounding + w.process * out.iou_process + w.answer * out.answer_correct;
    return out;
}

RewardBreakdown zero_reward() { return RewardBreakdown{}; }

}  // namespace coe
