#pragma once

#include <map>
#include <optional>
#include <vector>

#include "coe/decoder.hpp"
#include "coe/model.hpp"
#include "coe/optimizer.hpp"
#include "coe/reward.hpp"

namespace coe {

struct GrpoConfig {
    double beta = 0.1;
    double tie_epsilon = 1e-3;
    int samples_per_prompt = 2;
};

// One reward-ranked response pair. The chosen/rejected sequences must be
// scoreable under both the policy and the reference decoder against the
// stored condition vectors (which differ only when the EGM trains during RL).
struct PreferencePair {
    long sample_id = 0;
    std::vector<double> cond_policy;
    std::vector<double> cond_ref;
    TokenSequence chosen;    // y_w
    TokenSequence rejected;  // y_l
    double reward_gap = 0.0;
};

// Orders the two responses by composite reward; nullopt when the rewards are
// within tie_epsilon of each other.
std::optional<PreferencePair> build_pair(long sample_id, const std::vector<double>& cond_policy,
                                         const std::vector<double>& cond_ref, const TokenSequence& y1,
                                         const TokenSequence& y2, const RewardBreakdown& r1,
                                         const RewardBreakdown& r2, const GrpoConfig& cfg);

struct GrpoLossResult {
    double loss = 0.0;
    DecoderGrads decoder_grads;
    std::vector<std::vector<double>> d_cond_policy;  // per pair, for EGM backprop
};

// Mean over pairs of -log sigmoid(beta * ((log pi - log ref)(y_w) -
// (log pi - log ref)(y_l))). Gradients flow only through the policy terms.
// Throws NumericError when any sequence log-probability is non-finite.
GrpoLossResult grpo_loss(const DecoderParams& policy, const DecoderParams& reference,
                         const std::vector<PreferencePair>& pairs, const GrpoConfig& cfg,
                         const Vocab& vocab);

struct RlPrompt {
    long sample_id = 0;
    FrameFeatures features;  // already passed through prepare_features
    QuestionEmbedding question;
    FrameSet gt_key_frames;  // from the sealed reference file
    std::string gt_answer;
};

struct RlStepConfig {
    GrpoConfig grpo;
    RewardWeights weights;
    double temperature = 0.8;
    int max_gen_len = 64;
    bool train_egm = false;
};

struct RlStepMetrics {
    double mean_reward = 0.0;
    double mean_f1 = 0.0;
    double mean_iou = 0.0;
    double answer_acc = 0.0;
    double grpo_loss = 0.0;
    double pair_yield = 0.0;  // pairs / prompts
    int n_pairs = 0;
    bool stepped = false;  // false when every pair tied
};

// One policy update: per prompt, ground evidence, sample two responses,
// score them, build pairs, take one optimizer step on the accumulated
// preference gradient. Prompts are processed in ascending sample_id order so
// the step is seed-deterministic.
RlStepMetrics rl_step(Model& policy, const Model& reference, Optimizer& optimizer,
                      std::vector<const RlPrompt*> batch, const RlStepConfig& cfg, Rng& rng);

}  // namespace coe
