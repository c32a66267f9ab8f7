#pragma once

#include <optional>
#include <vector>

#include "coe/egm.hpp"
#include "coe/errors.hpp"
#include "coe/matrix.hpp"
#include "coe/rng.hpp"
#include "coe/vocab.hpp"

namespace coe {

struct SequenceLengthError : Error {
    explicit SequenceLengthError(const std::string& msg) : Error(msg) {}
};

// Single-hidden-layer conditional token model:
//   logits(t) = W_out^T tanh( W_h^T [ emb(prev); condition; pos_enc(pos) ] )
// Small enough to train from scratch while still expressing the
// order-sensitive protocol strings.
struct DecoderParams {
    Matrix embeddings;  // |Vocab| x D_e
    Matrix w_hidden;    // (D_e + D_c + D_p) x H
    Matrix w_out;       // H x |Vocab|
    Matrix pos_enc;     // T_max x D_p

    int vocab_size() const { return static_cast<int>(embeddings.rows()); }
    int d_embed() const { return static_cast<int>(embeddings.cols()); }
    int d_pos() const { return static_cast<int>(pos_enc.cols()); }
    int t_max() const { return static_cast<int>(pos_enc.rows()); }
    int hidden() const { return static_cast<int>(w_hidden.cols()); }
    int d_cond() const { return static_cast<int>(w_hidden.rows()) - d_embed() - d_pos(); }

    static DecoderParams init(int vocab_size, int d_embed, int d_cond, int d_pos, int hidden,
                              int t_max, Rng& rng);
};

struct DecoderGrads {
    Matrix embeddings;
    Matrix w_hidden;
    Matrix w_out;
    Matrix pos_enc;

    static DecoderGrads zeros_like(const DecoderParams& p);
    DecoderGrads& operator+=(const DecoderGrads& o);
    DecoderGrads& operator*=(double s);
};

struct TokenSequence {
    std::vector<int> ids;
    std::optional<double> logprob;
    bool truncated = false;
};

// Fixed-size decoder conditioning: mean over the K grounded-evidence rows
// concatenated with the mean question token embedding. Length D_v + D_l,
// independent of the frame count N.
std::vector<double> condition_vector(const AttentionState& e, const QuestionEmbedding& q);

// Spreads a condition-vector gradient back onto E_g (each row receives
// d_cond[0..D_v) / K). The question embedding is input data.
Matrix condition_backward_to_grounded(const std::vector<double>& d_cond, int num_queries, int d_v);

// Next-token logits. Throws SequenceLengthError when pos >= T_max and
// DataError on an out-of-range previous token id.
std::vector<double> step_logits(const DecoderParams& params, int prev_token, int pos,
                                const std::vector<double>& condition);

struct ReasoningLoss {
    double loss = 0.0;             // sum over positions of -log p(y_t | ...)
    DecoderGrads grads;
    std::vector<double> d_cond;    // gradient w.r.t. the condition vector
};

// Teacher-forced negative log-likelihood, summed over timesteps. The target
// must be nonempty and end with EOS; BOS is fed implicitly at position 0.
ReasoningLoss reasoning_loss(const DecoderParams& params, const std::vector<double>& condition,
                             const TokenSequence& target, const Vocab& vocab);

// Sum over tokens of log p(y_t | y_<t, condition). Defined for any valid id
// sequence (including truncated ones); equals -reasoning_loss for
// EOS-terminated targets.
double sequence_logprob(const DecoderParams& params, const std::vector<double>& condition,
                        const TokenSequence& y, const Vocab& vocab);

// weight * d(sequence_logprob)/d(params) accumulated into grads, plus the
// matching condition gradient. Shared by the preference-loss backward.
double sequence_logprob_backward(const DecoderParams& params, const std::vector<double>& condition,
                                 const TokenSequence& y, const Vocab& vocab, double weight,
                                 DecoderGrads& grads, std::vector<double>& d_cond);

// Ancestral sampling from softmax(logits / temperature) until EOS or
// max_len; temperature 0 switches to greedy argmax decoding. The recorded
// logprob is always measured under the temperature-1 policy.
TokenSequence sample_response(const DecoderParams& params, const std::vector<double>& condition,
                              double temperature, Rng& rng, int max_len, const Vocab& vocab);

}  // namespace coe
