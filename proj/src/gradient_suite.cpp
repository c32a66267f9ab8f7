#include "coe/gradient_suite.hpp"

#include <algorithm>

#include "coe/decoder.hpp"
#include "coe/egm.hpp"
#include "coe/grad_check.hpp"
#include "coe/grpo.hpp"
#include "coe/matrix.hpp"
#include "coe/rng.hpp"
#include "coe/vocab.hpp"

namespace coe {

namespace {

// Small shapes keep the finite-difference sweeps fast while exercising every
// code path (multi-layer EGM, max-pool routing, full decoder stack).
constexpr int kN = 8, kDv = 6, kDl = 5, kK = 2, kLayers = 2, kL = 3;
constexpr int kDe = 4, kDp = 3, kH = 6, kTmax = 10;

struct Instance {
    FrameFeatures v;
    QuestionEmbedding q;
    EgmParams egm;
    KeyFrameTarget y;
};

Instance make_instance(Rng& rng) {
    Instance inst;
    inst.v.features = Matrix::gaussian(kN, kDv, rng);
    inst.v.fps = 1.0;
    inst.q.tokens = Matrix::gaussian(kL, kDl, rng);
    inst.egm.num_layers = kLayers;
    inst.egm.base_queries = Matrix::gaussian(kK, kDv, rng, 0.7);
    inst.egm.question_proj = Matrix::gaussian(kDl, kDv, rng, 0.7);
    inst.y.y.assign(kN, 0.0);
    inst.y.y[rng.below(kN)] = 1.0;
    inst.y.y[rng.below(kN)] = 1.0;
    return inst;
}

EgmParams params_from(const Instance& inst, const std::vector<Matrix>& p) {
    EgmParams e = inst.egm;
    e.base_queries = p[0];
    e.question_proj = p[1];
    return e;
}

double check_grounding(Rng& rng, const std::string& mode) {
    const Instance inst = make_instance(rng);
    auto f = [&](const std::vector<Matrix>& p) {
        const EgmTrace t = egm_forward(inst.v, inst.q, params_from(inst, p));
        const std::vector<double> scores =
            mode == "literal" ? t.state.importance : frame_importance(t.final_logits);
        return grounding_loss(scores, inst.y).loss;
    };
    const EgmTrace trace = egm_forward(inst.v, inst.q, inst.egm);
    const std::vector<double> scores =
        mode == "literal" ? trace.state.importance : frame_importance(trace.final_logits);
    const GroundingLoss gl = grounding_loss(scores, inst.y);
    Matrix d_attention, d_logits;
    if (mode == "literal")
        d_attention = frame_importance_backward(trace.state.attention, gl.grad_scores);
    else
        d_logits = frame_importance_backward(trace.final_logits, gl.grad_scores);
    const EgmGrads g = egm_backward(trace, inst.v, inst.egm, d_attention, Matrix(), d_logits);
    return grad_check(f, {inst.egm.base_queries, inst.egm.question_proj},
                      {g.base_queries, g.question_proj});
}

double check_reasoning_end_to_end(Rng& rng, const Vocab& vocab) {
    const Instance inst = make_instance(rng);
    DecoderParams dec =
        DecoderParams::init(vocab.size(), kDe, kDv + kDl, kDp, kH, kTmax, rng);
    // random target ending in EOS
    TokenSequence target;
    const int len = 3 + static_cast<int>(rng.below(4));
    for (int t = 0; t < len; ++t) target.ids.push_back(static_cast<int>(rng.below(vocab.size())));
    target.ids.push_back(vocab.eos());

    auto f = [&](const std::vector<Matrix>& p) {
        const EgmTrace t = egm_forward(inst.v, inst.q, params_from(inst, p));
        DecoderParams d = dec;
        d.embeddings = p[2];
        d.w_hidden = p[3];
        d.w_out = p[4];
        d.pos_enc = p[5];
        return reasoning_loss(d, condition_vector(t.state, inst.q), target, vocab).loss;
    };

    const EgmTrace trace = egm_forward(inst.v, inst.q, inst.egm);
    const ReasoningLoss rl =
        reasoning_loss(dec, condition_vector(trace.state, inst.q), target, vocab);
    const Matrix d_grounded = condition_backward_to_grounded(rl.d_cond, kK, kDv);
    const EgmGrads g = egm_backward(trace, inst.v, inst.egm, Matrix(), d_grounded, Matrix());
    return grad_check(f,
                      {inst.egm.base_queries, inst.egm.question_proj, dec.embeddings, dec.w_hidden,
                       dec.w_out, dec.pos_enc},
                      {g.base_queries, g.question_proj, rl.grads.embeddings, rl.grads.w_hidden,
                       rl.grads.w_out, rl.grads.pos_enc});
}

double check_grpo(Rng& rng, const Vocab& vocab) {
    DecoderParams policy = DecoderParams::init(vocab.size(), kDe, kDv + kDl, kDp, kH, kTmax, rng);
    DecoderParams reference = DecoderParams::init(vocab.size(), kDe, kDv + kDl, kDp, kH, kTmax, rng);
    GrpoConfig cfg;
    cfg.beta = 0.1 + rng.uniform();

    std::vector<PreferencePair> pairs;
    for (int p = 0; p < 2; ++p) {
        PreferencePair pair;
        pair.sample_id = p;
        pair.cond_policy.resize(kDv + kDl);
        for (double& c : pair.cond_policy) c = rng.gauss();
        pair.cond_ref = pair.cond_policy;
        for (int t = 0; t < 4; ++t) pair.chosen.ids.push_back(static_cast<int>(rng.below(vocab.size())));
        for (int t = 0; t < 5; ++t)
            pair.rejected.ids.push_back(static_cast<int>(rng.below(vocab.size())));
        pair.reward_gap = 0.5;
        pairs.push_back(std::move(pair));
    }

    auto f = [&](const std::vector<Matrix>& p) {
        DecoderParams d = policy;
        d.embeddings = p[0];
        d.w_hidden = p[1];
        d.w_out = p[2];
        d.pos_enc = p[3];
        return grpo_loss(d, reference, pairs, cfg, vocab).loss;
    };
    const GrpoLossResult res = grpo_loss(policy, reference, pairs, cfg, vocab);
    return grad_check(f, {policy.embeddings, policy.w_hidden, policy.w_out, policy.pos_enc},
                      {res.decoder_grads.embeddings, res.decoder_grads.w_hidden,
                       res.decoder_grads.w_out, res.decoder_grads.pos_enc});
}

}  // namespace

std::vector<GradientCheckResult> run_gradient_suite(std::uint64_t seed, int instances) {
    const Vocab vocab = Vocab::build(10);
    std::vector<GradientCheckResult> results = {
        {"grounding_loss/literal", 0.0, instances},
        {"grounding_loss/logit", 0.0, instances},
        {"reasoning_loss/end_to_end", 0.0, instances},
        {"grpo_loss/policy", 0.0, instances},
    };
    for (int i = 0; i < instances; ++i) {
        Rng rng = Rng(seed).fork("gradient-suite/" + std::to_string(i));
        results[0].max_rel_err = std::max(results[0].max_rel_err, check_grounding(rng, "literal"));
        results[1].max_rel_err = std::max(results[1].max_rel_err, check_grounding(rng, "logit"));
        results[2].max_rel_err =
            std::max(results[2].max_rel_err, check_reasoning_end_to_end(rng, vocab));
        results[3].max_rel_err = std::max(results[3].max_rel_err, check_grpo(rng, vocab));
    }
    return results;
}

}  // namespace coe
