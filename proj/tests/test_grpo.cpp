#include <doctest.h>

#include <cmath>

#include "coe/errors.hpp"
#include "coe/grad_check.hpp"
#include "coe/grpo.hpp"

using namespace coe;

namespace {

Vocab tiny_vocab(int size) {
    std::vector<std::string> tokens = {Vocab::kBosToken, Vocab::kEosToken};
    for (int i = 2; i < size; ++i) tokens.push_back("t" + std::to_string(i));
    return Vocab::from_tokens(tokens);
}

DecoderParams zero_params(int vocab_size, int d_cond) {
    DecoderParams p;
    p.embeddings = Matrix(vocab_size, 4);
    p.w_hidden = Matrix(4 + d_cond + 3, 8);
    p.w_out = Matrix(8, vocab_size);
    p.pos_enc = Matrix(16, 3);
    return p;
}

PreferencePair simple_pair(int d_cond, const std::vector<int>& w, const std::vector<int>& l) {
    PreferencePair p;
    p.sample_id = 1;
    p.cond_policy.assign(d_cond, 0.0);
    p.cond_policy[0] = 100.0;  // saturates one hidden unit to exactly 1
    p.cond_ref = p.cond_policy;
    p.chosen.ids = w;
    p.rejected.ids = l;
    p.reward_gap = 0.3;
    return p;
}

RewardBreakdown reward_of(double total) {
    RewardBreakdown b;
    b.total = total;
    return b;
}

}  // namespace

TEST_CASE("pair construction orders by reward and skips ties") {
    GrpoConfig cfg;
    cfg.tie_epsilon = 0.01;
    TokenSequence y1, y2;
    y1.ids = {2};
    y2.ids = {3};
    const std::vector<double> cond(4, 0.0);

    auto pair = build_pair(7, cond, cond, y1, y2, reward_of(0.9), reward_of(0.4), cfg);
    REQUIRE(pair.has_value());
    CHECK(pair->chosen.ids == y1.ids);
    CHECK(pair->rejected.ids == y2.ids);
    CHECK(pair->reward_gap == doctest::Approx(0.5));

    CHECK(!build_pair(7, cond, cond, y1, y2, reward_of(0.5), reward_of(0.5), cfg).has_value());
    CHECK(!build_pair(7, cond, cond, y1, y2, reward_of(0.505), reward_of(0.5), cfg).has_value());

    auto swapped = build_pair(7, cond, cond, y1, y2, reward_of(0.2), reward_of(0.8), cfg);
    REQUIRE(swapped.has_value());
    CHECK(swapped->chosen.ids == y2.ids);
}

TEST_CASE("identical policies sit exactly at log 2") {
    Rng rng(1);
    const Vocab v = tiny_vocab(6);
    const DecoderParams policy = DecoderParams::init(v.size(), 4, 4, 3, 8, 16, rng);
    GrpoConfig cfg;

    std::vector<PreferencePair> pairs;
    for (int i = 0; i < 3; ++i) {
        PreferencePair p;
        p.sample_id = i;
        p.cond_policy.assign(4, 0.25 * i);
        p.cond_ref = p.cond_policy;
        p.chosen.ids = {2, 3, v.eos()};
        p.rejected.ids = {4, v.eos()};
        pairs.push_back(std::move(p));
    }
    const GrpoLossResult res = grpo_loss(policy, policy, pairs, cfg, v);
    CHECK(std::fabs(res.loss - std::log(2.0)) < 1e-12);
    // at theta == ref the gradient still points toward widening the margin
    CHECK(res.decoder_grads.w_out.all_finite());
}

TEST_CASE("worked preference margin value") {
    // Policy assigns logratio +1 to y_w and -1 to y_l against a uniform
    // reference, so the margin is beta * 2 = 0.2 and the loss is
    // -log sigmoid(0.2).
    const Vocab v = tiny_vocab(6);
    const int d_cond = 4;
    DecoderParams reference = zero_params(v.size(), d_cond);  // uniform
    DecoderParams policy = zero_params(v.size(), d_cond);
    policy.w_hidden.at(4, 0) = 100.0;  // reads cond[0] = 100 -> tanh saturates to 1.0
    policy.w_out.at(0, 2) = 1.0;       // token 2 logit +1
    policy.w_out.at(0, 3) = -1.0;      // token 3 logit -1

    GrpoConfig cfg;
    cfg.beta = 0.1;
    const std::vector<PreferencePair> pairs = {simple_pair(d_cond, {2}, {3})};
    const GrpoLossResult res = grpo_loss(policy, reference, pairs, cfg, v);
    CHECK(res.loss == doctest::Approx(0.598138869381592).epsilon(1e-9));
}

TEST_CASE("the loss depends only on the margin") {
    const Vocab v = tiny_vocab(6);
    const int d_cond = 4;
    const DecoderParams reference = zero_params(v.size(), d_cond);
    GrpoConfig cfg;
    cfg.beta = 0.17;

    double losses[3];
    int i = 0;
    for (double shift : {0.0, 0.8, -2.5}) {
        DecoderParams policy = zero_params(v.size(), d_cond);
        policy.w_hidden.at(4, 0) = 100.0;
        policy.w_out.at(0, 2) = 1.3 + shift;  // both logits shifted together:
        policy.w_out.at(0, 3) = -0.4 + shift; // both logratios move by the same constant
        const std::vector<PreferencePair> pairs = {simple_pair(d_cond, {2}, {3})};
        losses[i++] = grpo_loss(policy, reference, pairs, cfg, v).loss;
    }
    CHECK(losses[0] == doctest::Approx(losses[1]).epsilon(1e-12));
    CHECK(losses[0] == doctest::Approx(losses[2]).epsilon(1e-12));
}

TEST_CASE("preference loss is nonnegative on random instances") {
    Rng rng(2);
    const Vocab v = tiny_vocab(8);
    for (int trial = 0; trial < 100; ++trial) {
        const DecoderParams policy = DecoderParams::init(v.size(), 4, 3, 3, 8, 16, rng);
        const DecoderParams reference = DecoderParams::init(v.size(), 4, 3, 3, 8, 16, rng);
        PreferencePair p;
        p.sample_id = trial;
        p.cond_policy.assign(3, rng.gauss());
        p.cond_ref.assign(3, rng.gauss());
        for (int t = 0; t < 3; ++t) p.chosen.ids.push_back(static_cast<int>(rng.below(v.size())));
        for (int t = 0; t < 4; ++t) p.rejected.ids.push_back(static_cast<int>(rng.below(v.size())));
        GrpoConfig cfg;
        cfg.beta = 0.05 + rng.uniform();
        CHECK(grpo_loss(policy, reference, {p}, cfg, v).loss >= 0.0);
    }
}

TEST_CASE("policy gradient matches finite differences") {
    Rng rng(3);
    const Vocab v = tiny_vocab(7);
    const DecoderParams policy = DecoderParams::init(v.size(), 4, 3, 3, 8, 16, rng);
    const DecoderParams reference = DecoderParams::init(v.size(), 4, 3, 3, 8, 16, rng);
    std::vector<PreferencePair> pairs;
    for (int i = 0; i < 2; ++i) {
        PreferencePair p;
        p.sample_id = i;
        p.cond_policy.assign(3, rng.gauss());
        p.cond_ref = p.cond_policy;
        for (int t = 0; t < 3; ++t) p.chosen.ids.push_back(static_cast<int>(rng.below(v.size())));
        for (int t = 0; t < 4; ++t) p.rejected.ids.push_back(static_cast<int>(rng.below(v.size())));
        pairs.push_back(std::move(p));
    }
    GrpoConfig cfg;
    auto f = [&](const std::vector<Matrix>& params) {
        DecoderParams d = policy;
        d.embeddings = params[0];
        d.w_hidden = params[1];
        d.w_out = params[2];
        d.pos_enc = params[3];
        return grpo_loss(d, reference, pairs, cfg, v).loss;
    };
    const GrpoLossResult res = grpo_loss(policy, reference, pairs, cfg, v);
    CHECK(grad_check(f, {policy.embeddings, policy.w_hidden, policy.w_out, policy.pos_enc},
                     {res.decoder_grads.embeddings, res.decoder_grads.w_hidden,
                      res.decoder_grads.w_out, res.decoder_grads.pos_enc}) < 1e-4);
}

TEST_CASE("one small step widens the preferred margin") {
    Rng rng(4);
    const Vocab v = tiny_vocab(7);
    DecoderParams policy = DecoderParams::init(v.size(), 4, 3, 3, 8, 16, rng);
    const DecoderParams reference = policy;
    PreferencePair p;
    p.sample_id = 0;
    p.cond_policy.assign(3, 0.4);
    p.cond_ref = p.cond_policy;
    p.chosen.ids = {2, 3, v.eos()};
    p.rejected.ids = {4, 5, v.eos()};
    GrpoConfig cfg;

    const double lp_w_before = sequence_logprob(policy, p.cond_policy, p.chosen, v);
    const double lp_l_before = sequence_logprob(policy, p.cond_policy, p.rejected, v);
    const GrpoLossResult res = grpo_loss(policy, reference, {p}, cfg, v);

    Optimizer opt(OptimizerKind::SgdMomentum, 1e-3, 0.0);
    std::vector<Matrix*> params = {&policy.embeddings, &policy.w_hidden, &policy.w_out,
                                   &policy.pos_enc};
    opt.step(params, {res.decoder_grads.embeddings, res.decoder_grads.w_hidden,
                      res.decoder_grads.w_out, res.decoder_grads.pos_enc});

    const GrpoLossResult after = grpo_loss(policy, reference, {p}, cfg, v);
    CHECK(after.loss < res.loss);
    CHECK(sequence_logprob(policy, p.cond_policy, p.chosen, v) > lp_w_before);
    CHECK(sequence_logprob(policy, p.cond_policy, p.rejected, v) < lp_l_before);
}

namespace {

Model small_model() {
    ModelConfig mc;
    mc.n_frames = 8;
    mc.fps = 1.0;
    mc.d_v = 8;
    mc.d_l = 4;
    mc.horizon_seconds = 8;
    mc.egm_layers = 1;
    mc.egm_queries = 2;
    mc.d_embed = 4;
    mc.d_pos = 3;
    mc.hidden = 8;
    mc.t_max = 24;
    return Model::init(mc, 11);
}

std::vector<RlPrompt> small_prompts(const Model& m, int count) {
    std::vector<RlPrompt> prompts;
    Rng rng(77);
    for (int i = 0; i < count; ++i) {
        RlPrompt p;
        p.sample_id = i;
        p.features.features = Matrix::gaussian(m.config.n_frames, m.config.d_v, rng);
        p.features.fps = 1.0;
        p.question.tokens = Matrix::gaussian(3, m.config.d_l, rng);
        p.gt_key_frames = frame_set_from_indices({2, 3}, 1.0, m.config.n_frames);
        p.gt_answer = "Yes";
        prompts.push_back(std::move(p));
    }
    return prompts;
}

}  // namespace

TEST_CASE("an infinite tie threshold freezes the policy") {
    Model policy = small_model();
    const Model reference = small_model();
    const Model before = policy;
    Optimizer opt;
    RlStepConfig cfg;
    cfg.grpo.tie_epsilon = std::numeric_limits<double>::infinity();
    const std::vector<RlPrompt> prompts = small_prompts(policy, 4);
    std::vector<const RlPrompt*> batch;
    for (const RlPrompt& p : prompts) batch.push_back(&p);
    Rng rng(5);
    const RlStepMetrics m = rl_step(policy, reference, opt, batch, cfg, rng);
    CHECK(!m.stepped);
    CHECK(m.n_pairs == 0);
    for (std::size_t i = 0; i < policy.decoder.w_out.size(); ++i)
        CHECK(policy.decoder.w_out.data()[i] == before.decoder.w_out.data()[i]);
}

TEST_CASE("rl steps are seed-deterministic") {
    const std::vector<RlPrompt> prompts = small_prompts(small_model(), 6);
    auto run_once = [&] {
        Model policy = small_model();
        const Model reference = small_model();
        Optimizer opt;
        RlStepConfig cfg;
        cfg.grpo.tie_epsilon = 0.0;  // maximize pair yield
        std::vector<const RlPrompt*> batch;
        for (const RlPrompt& p : prompts) batch.push_back(&p);
        Rng rng(123);
        rl_step(policy, reference, opt, batch, cfg, rng);
        return policy;
    };
    const Model a = run_once();
    const Model b = run_once();
    for (std::size_t i = 0; i < a.decoder.w_out.size(); ++i)
        CHECK(a.decoder.w_out.data()[i] == b.decoder.w_out.data()[i]);
    for (std::size_t i = 0; i < a.decoder.embeddings.size(); ++i)
        CHECK(a.decoder.embeddings.data()[i] == b.decoder.embeddings.data()[i]);
}

TEST_CASE("diverged policies raise a numeric error") {
    const Vocab v = tiny_vocab(5);
    DecoderParams policy = zero_params(v.size(), 3);
    policy.w_out.at(0, 0) = std::numeric_limits<double>::quiet_NaN();
    policy.w_hidden.at(4, 0) = 100.0;
    const DecoderParams reference = zero_params(v.size(), 3);
    PreferencePair p = simple_pair(3, {2}, {3});
    GrpoConfig cfg;
    CHECK_THROWS_AS(grpo_loss(policy, reference, {p}, cfg, v), NumericError);
}
