#pragma once

#include <string>

#include "coe/protocol.hpp"

namespace coe {

struct RewardWeights {
    double grounding = 0.3;  // w_g
    double process = 0.3;    // w_p
    double answer = 0.4;     // w_a

    double sum() const { return grounding + process + answer; }
};

struct RewardBreakdown {
    double f1_grounding = 0.0;  // F1(A_pred, A_gt)
    double iou_process = 0.0;   // IoU(T_draft, A_pred)
    double answer_correct = 0.0;
    double total = 0.0;
};

// 2|pred ∩ gt| / (|pred| + |gt|); 0 when both sets are empty.
double f1_frames(const FrameSet& pred, const FrameSet& gt);

// |cited ∩ anchored| / |cited ∪ anchored|; 0 when the union is empty.
double temporal_iou(const FrameSet& cited, const FrameSet& anchored);

// Case-insensitive, whitespace-trimmed string equality.
double answer_indicator(const std::string& pred_answer, const std::string& gt_answer);

// R = w_g * F1(A_pred, A_gt) + w_p * IoU(T_draft, A_pred) + w_a * I(Ans == Ans_gt),
// all terms over discrete frame sets under the given fps / frame-count
// context. Callers map unparseable responses to zero_reward() before this
// point (protocol violation = worst outcome).
RewardBreakdown composite_reward(const CoEResponse& resp, const FrameSet& gt_key_frames,
                                 const std::string& gt_answer, const RewardWeights& w,
                                 double fps, int n_frames);

RewardBreakdown zero_reward();

}  // namespace coe
