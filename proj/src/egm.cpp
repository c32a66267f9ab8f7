#include "coe/egm.hpp"

#include <cmath>
#include <cstdio>

#include "coe/errors.hpp"

namespace coe {

EgmParams EgmParams::init(int num_layers, int num_queries, int feature_dim, int question_dim, Rng& rng) {
    EgmParams p;
    p.num_layers = num_layers;
    Rng rq = rng.fork("egm/base_queries");
    Rng rp = rng.fork("egm/question_proj");
    p.base_queries = Matrix::gaussian(num_queries, feature_dim, rq, 0.5);
    p.question_proj = Matrix::gaussian(question_dim, feature_dim, rp, 0.5 / std::sqrt(question_dim));
    return p;
}

Matrix project_queries(const QuestionEmbedding& q, const EgmParams& p) {
    if (q.tokens.cols() != p.question_proj.rows())
        throw DimensionError("project_queries: question dim " + std::to_string(q.tokens.cols()) +
                             " vs projection rows " + std::to_string(p.question_proj.rows()));
    const std::size_t L = q.tokens.rows();
    Matrix pooled(1, q.tokens.cols());
    for (std::size_t t = 0; t < L; ++t)
        for (std::size_t d = 0; d < q.tokens.cols(); ++d) pooled.at(0, d) += q.tokens.at(t, d) / L;
    const Matrix shift = matmul(pooled, p.question_proj);  // 1 x D_v
    Matrix out = p.base_queries;
    for (std::size_t k = 0; k < out.rows(); ++k)
        for (std::size_t d = 0; d < out.cols(); ++d) out.at(k, d) += shift.at(0, d);
    return out;
}

EgmTrace egm_forward(const FrameFeatures& v, const QuestionEmbedding& q, const EgmParams& p) {
    const std::size_t n = v.features.rows();
    const std::size_t dv = p.base_queries.cols();
    if (v.features.cols() != dv)
        throw DimensionError("egm_forward: feature dim " + std::to_string(v.features.cols()) +
                             " vs query dim " + std::to_string(dv));
    if (static_cast<std::size_t>(p.num_queries()) > n)
        throw ConfigError("egm_forward: cannot ground " + std::to_string(p.num_queries()) +
                          " evidence pieces over " + std::to_string(n) + " frames");
    if (p.num_layers < 1 || p.num_queries() < 1)
        throw ConfigError("egm_forward: need at least one layer and one query");

    EgmTrace trace;
    {
        const std::size_t L = q.tokens.rows();
        Matrix pooled(1, q.tokens.cols());
        for (std::size_t t = 0; t < L; ++t)
            for (std::size_t d = 0; d < q.tokens.cols(); ++d)
                pooled.at(0, d) += q.tokens.at(t, d) / L;
        trace.pooled_question = pooled;
    }

    const double scale = 1.0 / std::sqrt(static_cast<double>(dv));
    const Matrix vt = v.features.transposed();
    Matrix query = project_queries(q, p);
    Matrix attention, grounded, logits;
    for (int m = 0; m < p.num_layers; ++m) {
        trace.layer_queries.push_back(query);
        logits = matmul(query, vt);
        logits *= scale;
        attention = softmax_rows(logits);
        trace.layer_attention.push_back(attention);
        grounded = matmul(attention, v.features);
        if (m + 1 < p.num_layers) query += grounded;
    }
    trace.final_logits = std::move(logits);
    trace.state.attention = attention;
    trace.state.grounded = std::move(grounded);
    trace.state.importance = frame_importance(attention);
    return trace;
}

std::vector<double> frame_importance(const Matrix& a) {
    std::vector<double> out(a.cols());
    for (std::size_t i = 0; i < a.cols(); ++i) {
        double mx = a.at(0, i);
        for (std::size_t j = 1; j < a.rows(); ++j) mx = std::max(mx, a.at(j, i));
        out[i] = mx;
    }
    return out;
}

Matrix frame_importance_backward(const Matrix& a, const std::vector<double>& grad_importance) {
    if (grad_importance.size() != a.cols())
        throw DimensionError("frame_importance_backward: gradient length mismatch");
    Matrix grad(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.cols(); ++i) {
        std::size_t argmax = 0;
        for (std::size_t j = 1; j < a.rows(); ++j)
            if (a.at(j, i) > a.at(argmax, i)) argmax = j;
        grad.at(argmax, i) = grad_importance[i];
    }
    return grad;
}

GroundingLoss grounding_loss(const std::vector<double>& scores, const KeyFrameTarget& target) {
    if (scores.size() != target.y.size())
        throw DimensionError("grounding_loss: scores length " + std::to_string(scores.size()) +
                             " vs target length " + std::to_string(target.y.size()));
    const double n = static_cast<double>(scores.size());
    GroundingLoss out;
    out.grad_scores.resize(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double y = target.y[i];
        out.loss += -(y * log_sigmoid(scores[i]) + (1.0 - y) * log_sigmoid(-scores[i])) / n;
        out.grad_scores[i] = (sigmoid(scores[i]) - y) / n;
    }
    return out;
}

EgmGrads egm_backward(const EgmTrace& trace, const FrameFeatures& v, const EgmParams& p,
                      const Matrix& d_attention, const Matrix& d_grounded, const Matrix& d_logits) {
    const std::size_t k = p.base_queries.rows();
    const std::size_t dv = p.base_queries.cols();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dv));
    const int layers = p.num_layers;

    // Final layer: gradients w.r.t. its attention come from d_attention and
    // from E_g = A V; gradients w.r.t. its pre-softmax scores additionally
    // from d_logits.
    Matrix da(k, v.features.rows());
    if (d_attention.size() > 0) da += d_attention;
    if (d_grounded.size() > 0) da += matmul(d_grounded, v.features.transposed());
    Matrix dz = softmax_rows_backward(trace.layer_attention[layers - 1], da);
    if (d_logits.size() > 0) dz += d_logits;
    Matrix dq = matmul(dz, v.features);  // d/dQ of (Q V^T) contracted with dz
    dq *= scale;

    // Earlier layers: Q_{m+1} = Q_m + A_m V, so dQ_m picks up dQ_{m+1}
    // directly plus the attention path.
    for (int m = layers - 2; m >= 0; --m) {
        Matrix da_m = matmul(dq, v.features.transposed());  // dE_m = dQ_{m+1}
        Matrix dz_m = softmax_rows_backward(trace.layer_attention[m], da_m);
        Matrix dq_m = matmul(dz_m, v.features);
        dq_m *= scale;
        dq += dq_m;
    }

    // project_queries: Q_evidence[k] = base_queries[k] + pooled * proj.
    EgmGrads grads;
    grads.base_queries = dq;
    Matrix col_sum(1, dv);
    for (std::size_t kk = 0; kk < k; ++kk)
        for (std::size_t d = 0; d < dv; ++d) col_sum.at(0, d) += dq.at(kk, d);
    grads.question_proj = matmul(trace.pooled_question.transposed(), col_sum);
    return grads;
}

std::string attention_curve_csv(const AttentionState& state, double fps) {
    std::string csv = "frame_index,time_seconds,importance\n";
    char line[96];
    for (std::size_t i = 0; i < state.importance.size(); ++i) {
        std::snprintf(line, sizeof(line), "%zu,%.6f,%.12g\n", i, static_cast<double>(i) / fps,
                      state.importance[i]);
        csv += line;
    }
    return csv;
}

}  // namespace coe
