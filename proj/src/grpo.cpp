#include "coe/grpo.hpp"

#include <algorithm>
#include <cmath>

#include "coe/errors.hpp"
#include "coe/protocol.hpp"

namespace coe {

std::optional<PreferencePair> build_pair(long sample_id, const std::vector<double>& cond_policy,
                                         const std::vector<double>& cond_ref, const TokenSequence& y1,
                                         const TokenSequence& y2, const RewardBreakdown& r1,
                                         const RewardBreakdown& r2, const GrpoConfig& cfg) {
    if (std::fabs(r1.total - r2.total) < cfg.tie_epsilon) return std::nullopt;
    PreferencePair p;
    p.sample_id = sample_id;
    p.cond_policy = cond_policy;
    p.cond_ref = cond_ref;
    if (r1.total >= r2.total) {
        p.chosen = y1;
        p.rejected = y2;
    } else {
        p.chosen = y2;
        p.rejected = y1;
    }
    p.reward_gap = std::fabs(r1.total - r2.total);
    return p;
}

GrpoLossResult grpo_loss(const DecoderParams& policy, const DecoderParams& reference,
                         const std::vector<PreferencePair>& pairs, const GrpoConfig& cfg,
                         const Vocab& vocab) {
    if (cfg.beta <= 0.0) throw ConfigError("grpo_loss: beta must be positive");
    GrpoLossResult out;
    out.decoder_grads = DecoderGrads::zeros_like(policy);
    if (pairs.empty()) return out;

    const double inv_n = 1.0 / static_cast<double>(pairs.size());
    for (const PreferencePair& pair : pairs) {
        const double lp_w = sequence_logprob(policy, pair.cond_policy, pair.chosen, vocab);
        const double lp_l = sequence_logprob(policy, pair.cond_policy, pair.rejected, vocab);
        const double lr_w = sequence_logprob(reference, pair.cond_ref, pair.chosen, vocab);
        const double lr_l = sequence_logprob(reference, pair.cond_ref, pair.rejected, vocab);
        if (!std::isfinite(lp_w) || !std::isfinite(lp_l) || !std::isfinite(lr_w) || !std::isfinite(lr_l))
            throw NumericError("grpo_loss: non-finite sequence log-probability (policy diverged)");

        const double margin = cfg.beta * ((lp_w - lr_w) - (lp_l - lr_l));
        out.loss += -log_sigmoid(margin) * inv_n;

        // d(-log sigmoid(m))/dm = sigmoid(m) - 1; only policy terms carry
        // gradient.
        const double dmargin = (sigmoid(margin) - 1.0) * inv_n;
        std::vector<double> d_cond(pair.cond_policy.size(), 0.0);
        sequence_logprob_backward(policy, pair.cond_policy, pair.chosen, vocab, dmargin * cfg.beta,
                                  out.decoder_grads, d_cond);
        sequence_logprob_backward(policy, pair.cond_policy, pair.rejected, vocab, -dmargin * cfg.beta,
                                  out.decoder_grads, d_cond);
        out.d_cond_policy.push_back(std::move(d_cond));
    }
    return out;
}

RlStepMetrics rl_step(Model& policy, const Model& reference, Optimizer& optimizer,
                      std::vector<const RlPrompt*> batch, const RlStepConfig& cfg, Rng& rng) {
    std::sort(batch.begin(), batch.end(),
              [](const RlPrompt* a, const RlPrompt* b) { return a->sample_id < b->sample_id; });

    RlStepMetrics metrics;
    std::vector<PreferencePair> pairs;
    std::vector<EgmTrace> pair_traces;  // policy trace per pair, for EGM grads
    std::vector<const RlPrompt*> pair_prompts;
    int n_responses = 0;

    for (const RlPrompt* prompt : batch) {
        const EgmTrace trace = egm_forward(prompt->features, prompt->question, policy.egm);
        const std::vector<double> cond = condition_vector(trace.state, prompt->question);
        std::vector<double> cond_ref = cond;
        if (cfg.train_egm) {
            const EgmTrace ref_trace = egm_forward(prompt->features, prompt->question, reference.egm);
            cond_ref = condition_vector(ref_trace.state, prompt->question);
        }

        TokenSequence responses[2];
        RewardBreakdown rewards[2];
        for (int s = 0; s < cfg.grpo.samples_per_prompt && s < 2; ++s) {
            responses[s] = sample_response(policy.decoder, cond, cfg.temperature, rng, cfg.max_gen_len,
                                           policy.vocab);
            const std::string text = policy.vocab.detokenize(responses[s].ids);
            try {
                const CoEResponse parsed = parse_response(text);
                rewards[s] = composite_reward(parsed, prompt->gt_key_frames, prompt->gt_answer,
                                              cfg.weights, prompt->features.fps,
                                              static_cast<int>(prompt->features.features.rows()));
            } catch (const ParseError&) {
                rewards[s] = zero_reward();  // protocol violation = worst outcome
            }
            metrics.mean_reward += rewards[s].total;
            metrics.mean_f1 += rewards[s].f1_grounding;
            metrics.mean_iou += rewards[s].iou_process;
            metrics.answer_acc += rewards[s].answer_correct;
            ++n_responses;
        }

        auto pair = build_pair(prompt->sample_id, cond, cond_ref, responses[0], responses[1],
                               rewards[0], rewards[1], cfg.grpo);
        if (pair) {
            pairs.push_back(std::move(*pair));
            pair_traces.push_back(trace);
            pair_prompts.push_back(prompt);
        }
    }

    if (n_responses > 0) {
        metrics.mean_reward /= n_responses;
        metrics.mean_f1 /= n_responses;
        metrics.mean_iou /= n_responses;
        metrics.answer_acc /= n_responses;
    }
    metrics.n_pairs = static_cast<int>(pairs.size());
    metrics.pair_yield = batch.empty() ? 0.0 : static_cast<double>(pairs.size()) / batch.size();
    if (pairs.empty()) return metrics;  // all tied: skip the update

    GrpoLossResult result = grpo_loss(policy.decoder, reference.decoder, pairs, cfg.grpo, policy.vocab);
    metrics.grpo_loss = result.loss;

    std::vector<Matrix*> params = policy.decoder_param_ptrs();
    std::vector<Matrix> grads = {result.decoder_grads.embeddings, result.decoder_grads.w_hidden,
                                 result.decoder_grads.w_out, result.decoder_grads.pos_enc};
    if (cfg.train_egm) {
        Matrix d_base(policy.egm.base_queries.rows(), policy.egm.base_queries.cols());
        Matrix d_proj(policy.egm.question_proj.rows(), policy.egm.question_proj.cols());
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            const Matrix d_grounded = condition_backward_to_grounded(
                result.d_cond_policy[i], policy.config.egm_queries, policy.config.d_v);
            const EgmGrads g = egm_backward(pair_traces[i], pair_prompts[i]->features, policy.egm,
                                            Matrix(), d_grounded, Matrix());
            d_base += g.base_queries;
            d_proj += g.question_proj;
        }
        params.push_back(&policy.egm.base_queries);
        params.push_back(&policy.egm.question_proj);
        grads.push_back(std::move(d_base));
        grads.push_back(std::move(d_proj));
    }
    optimizer.step(params, grads);
    metrics.stepped = true;
    return metrics;
}

}  // namespace coe
