#pragma once

#include <string>
#include <vector>

#include "coe/matrix.hpp"

namespace coe {

// Video stand-in: one feature row per frame.
struct FrameFeatures {
    Matrix features;  // N x D_v
    double fps = 1.0;
};

struct QuestionEmbedding {
    Matrix tokens;  // L x D_l
};

// Learnable state of the evidence grounding module. K evidence queries are
// shared across the M refinement layers; each layer is parameter-free
// scaled-dot-product attention.
struct EgmParams {
    int num_layers = 2;
    Matrix base_queries;   // K x D_v
    Matrix question_proj;  // D_l x D_v

    int num_queries() const { return static_cast<int>(base_queries.rows()); }
    int feature_dim() const { return static_cast<int>(base_queries.cols()); }

    static EgmParams init(int num_layers, int num_queries, int feature_dim, int question_dim, Rng& rng);
};

// Binary per-frame grounding target; at least one key frame per sample.
struct KeyFrameTarget {
    std::vector<double> y;  // entries in {0, 1}
};

struct AttentionState {
    Matrix attention;                // A, K x N; each row a distribution
    Matrix grounded;                 // E_g, K x D_v
    std::vector<double> importance;  // a_scores, length N: columnwise max of A
};

// Forward pass record kept for the hand-written backward: the input query of
// each layer and its attention matrix, plus the final-layer pre-softmax
// scores (used by the logit-mode grounding loss).
struct EgmTrace {
    AttentionState state;
    Matrix final_logits;                  // K x N, scaled by 1/sqrt(D_v)
    std::vector<Matrix> layer_queries;    // Q entering layer m, m = 0..M-1
    std::vector<Matrix> layer_attention;  // A of layer m
    Matrix pooled_question;               // 1 x D_l mean over question tokens
};

struct EgmGrads {
    Matrix base_queries;
    Matrix question_proj;
};

// Q_evidence[k] = base_queries[k] + mean_pool(q) * question_proj.
Matrix project_queries(const QuestionEmbedding& q, const EgmParams& p);

// M-layer refinement: A = softmax(Q V^T / sqrt(D_v)), E = A V, Q <- Q + E.
// Returns the final layer's attention, grounded evidence, and the
// frame-importance scores (columnwise max of A).
// Throws ConfigError when K > N, DimensionError on inconsistent shapes.
EgmTrace egm_forward(const FrameFeatures& v, const QuestionEmbedding& q, const EgmParams& p);

// out[i] = max over queries j of a[j, i].
std::vector<double> frame_importance(const Matrix& a);

// Routes a per-frame gradient to the argmax row of each column (first row on
// ties), i.e. backward of frame_importance.
Matrix frame_importance_backward(const Matrix& a, const std::vector<double>& grad_importance);

struct GroundingLoss {
    double loss = 0.0;
    std::vector<double> grad_scores;  // dL/d(scores), length N
};

// Binary cross-entropy with the logistic squashing applied inside:
//   L = -(1/N) * sum_i [ y_i log(sigmoid(s_i)) + (1-y_i) log(1-sigmoid(s_i)) ]
// Gradient per coordinate is (sigmoid(s_i) - y_i) / N.
GroundingLoss grounding_loss(const std::vector<double>& scores, const KeyFrameTarget& target);

// Backward through the full layer recurrence. Upstream gradients may arrive
// at the final attention matrix (d_attention), the grounded evidence
// (d_grounded) and/or the final pre-softmax scores (d_logits); pass empty
// matrices for absent terms. V is treated as constant input.
EgmGrads egm_backward(const EgmTrace& trace, const FrameFeatures& v, const EgmParams& p,
                      const Matrix& d_attention, const Matrix& d_grounded, const Matrix& d_logits);

// The temporal attention curve: "frame_index,time_seconds,importance" rows.
std::string attention_curve_csv(const AttentionState& state, double fps);

}  // namespace coe
