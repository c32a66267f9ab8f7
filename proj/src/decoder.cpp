#include "coe/decoder.hpp"

#include <cmath>
#include <string>

#include "coe/errors.hpp"

namespace coe {

namespace {

struct StepWork {
    std::vector<double> x;       // [emb(prev); condition; pos_enc(pos)]
    std::vector<double> hidden;  // tanh activations
    std::vector<double> logits;
    int prev = 0;
    int pos = 0;
};

void check_token(const DecoderParams& params, int token, const char* ctx) {
    if (token < 0 || token >= params.vocab_size())
        throw DataError(std::string(ctx) + ": token id " + std::to_string(token) + " out of range [0, " +
                        std::to_string(params.vocab_size()) + ")");
}

void run_step(const DecoderParams& params, int prev, int pos, const std::vector<double>& cond,
              StepWork& w) {
    check_token(params, prev, "decoder");
    if (pos < 0 || pos >= params.t_max())
        throw SequenceLengthError("decoder: position " + std::to_string(pos) + " exceeds T_max " +
                                  std::to_string(params.t_max()));
    if (static_cast<int>(cond.size()) != params.d_cond())
        throw DimensionError("decoder: condition length " + std::to_string(cond.size()) +
                             " vs expected " + std::to_string(params.d_cond()));
    const int de = params.d_embed(), dc = params.d_cond(), dp = params.d_pos();
    const int din = de + dc + dp, h = params.hidden(), voc = params.vocab_size();
    w.prev = prev;
    w.pos = pos;
    w.x.resize(din);
    for (int i = 0; i < de; ++i) w.x[i] = params.embeddings.at(prev, i);
    for (int i = 0; i < dc; ++i) w.x[de + i] = cond[i];
    for (int i = 0; i < dp; ++i) w.x[de + dc + i] = params.pos_enc.at(pos, i);

    w.hidden.assign(h, 0.0);
    for (int i = 0; i < din; ++i) {
        const double xi = w.x[i];
        const double* row = params.w_hidden.row_ptr(i);
        for (int j = 0; j < h; ++j) w.hidden[j] += row[j] * xi;
    }
    for (int j = 0; j < h; ++j) w.hidden[j] = std::tanh(w.hidden[j]);

    w.logits.assign(voc, 0.0);
    for (int j = 0; j < h; ++j) {
        const double hj = w.hidden[j];
        const double* row = params.w_out.row_ptr(j);
        for (int t = 0; t < voc; ++t) w.logits[t] += row[t] * hj;
    }
}

// log softmax normalizer with max subtraction
double log_sum_exp(const std::vector<double>& logits, double& max_out) {
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - mx);
    max_out = mx;
    return std::log(sum);
}

// Backpropagates dlogits through one step, accumulating parameter and
// condition gradients.
void step_backward(const DecoderParams& params, const StepWork& w, const std::vector<double>& dlogits,
                   DecoderGrads& grads, std::vector<double>& d_cond) {
    const int de = params.d_embed(), dc = params.d_cond(), dp = params.d_pos();
    const int din = de + dc + dp, h = params.hidden(), voc = params.vocab_size();

    std::vector<double> dh(h, 0.0);
    for (int j = 0; j < h; ++j) {
        const double hj = w.hidden[j];
        double* grow = grads.w_out.row_ptr(j);
        const double* row = params.w_out.row_ptr(j);
        double acc = 0.0;
        for (int t = 0; t < voc; ++t) {
            grow[t] += hj * dlogits[t];
            acc += row[t] * dlogits[t];
        }
        dh[j] = acc * (1.0 - hj * hj);  // through tanh
    }
    std::vector<double> dx(din, 0.0);
    for (int i = 0; i < din; ++i) {
        const double xi = w.x[i];
        double* grow = grads.w_hidden.row_ptr(i);
        const double* row = params.w_hidden.row_ptr(i);
        double acc = 0.0;
        for (int j = 0; j < h; ++j) {
            grow[j] += xi * dh[j];
            acc += row[j] * dh[j];
        }
        dx[i] = acc;
    }
    for (int i = 0; i < de; ++i) grads.embeddings.at(w.prev, i) += dx[i];
    for (int i = 0; i < dc; ++i) d_cond[i] += dx[de + i];
    for (int i = 0; i < dp; ++i) grads.pos_enc.at(w.pos, i) += dx[de + dc + i];
}

}  // namespace

DecoderParams DecoderParams::init(int vocab_size, int d_embed, int d_cond, int d_pos, int hidden,
                                  int t_max, Rng& rng) {
    DecoderParams p;
    const int din = d_embed + d_cond + d_pos;
    Rng re = rng.fork("decoder/embeddings");
    Rng rh = rng.fork("decoder/w_hidden");
    Rng ro = rng.fork("decoder/w_out");
    Rng rp = rng.fork("decoder/pos_enc");
    p.embeddings = Matrix::gaussian(vocab_size, d_embed, re, 0.3);
    p.w_hidden = Matrix::gaussian(din, hidden, rh, 1.0 / std::sqrt(din));
    p.w_out = Matrix::gaussian(hidden, vocab_size, ro, 0.1);
    p.pos_enc = Matrix::gaussian(t_max, d_pos, rp, 0.3);
    return p;
}

DecoderGrads DecoderGrads::zeros_like(const DecoderParams& p) {
    DecoderGrads g;
    g.embeddings = Matrix(p.embeddings.rows(), p.embeddings.cols());
    g.w_hidden = Matrix(p.w_hidden.rows(), p.w_hidden.cols());
    g.w_out = Matrix(p.w_out.rows(), p.w_out.cols());
    g.pos_enc = Matrix(p.pos_enc.rows(), p.pos_enc.cols());
    return g;
}

DecoderGrads& DecoderGrads::operator+=(const DecoderGrads& o) {
    embeddings += o.embeddings;
    w_hidden += o.w_hidden;
    w_out += o.w_out;
    pos_enc += o.pos_enc;
    return *this;
}

DecoderGrads& DecoderGrads::operator*=(double s) {
    embeddings *= s;
    w_hidden *= s;
    w_out *= s;
    pos_enc *= s;
    return *this;
}

std::vector<double> condition_vector(const AttentionState& e, const QuestionEmbedding& q) {
    const std::size_t k = e.grounded.rows(), dv = e.grounded.cols();
    const std::size_t l = q.tokens.rows(), dl = q.tokens.cols();
    std::vector<double> c(dv + dl, 0.0);
    for (std::size_t j = 0; j < k; ++j)
        for (std::size_t d = 0; d < dv; ++d) c[d] += e.grounded.at(j, d) / static_cast<double>(k);
    for (std::size_t t = 0; t < l; ++t)
        for (std::size_t d = 0; d < dl; ++d) c[dv + d] += q.tokens.at(t, d) / static_cast<double>(l);
    return c;
}

Matrix condition_backward_to_grounded(const std::vector<double>& d_cond, int num_queries, int d_v) {
    Matrix d_grounded(num_queries, d_v);
    for (int j = 0; j < num_queries; ++j)
        for (int d = 0; d < d_v; ++d) d_grounded.at(j, d) = d_cond[d] / num_queries;
    return d_grounded;
}

std::vector<double> step_logits(const DecoderParams& params, int prev_token, int pos,
                                const std::vector<double>& condition) {
    StepWork w;
    run_step(params, prev_token, pos, condition, w);
    return w.logits;
}

ReasoningLoss reasoning_loss(const DecoderParams& params, const std::vector<double>& condition,
                             const TokenSequence& target, const Vocab& vocab) {
    if (target.ids.empty()) throw DataError("reasoning_loss: empty target sequence");
    if (target.ids.back() != vocab.eos())
        throw DataError("reasoning_loss: target must end with EOS");
    ReasoningLoss out;
    out.grads = DecoderGrads::zeros_like(params);
    out.d_cond.assign(condition.size(), 0.0);

    StepWork w;
    std::vector<double> dlogits;
    for (std::size_t t = 0; t < target.ids.size(); ++t) {
        const int y = target.ids[t];
        check_token(params, y, "reasoning_loss");
        const int prev = (t == 0) ? vocab.bos() : target.ids[t - 1];
        run_step(params, prev, static_cast<int>(t), condition, w);
        double mx;
        const double lse = log_sum_exp(w.logits, mx);
        out.loss += -(w.logits[y] - mx - lse);
        dlogits.resize(w.logits.size());
        for (std::size_t v = 0; v < w.logits.size(); ++v)
            dlogits[v] = std::exp(w.logits[v] - mx - lse);  // softmax prob
        dlogits[y] -= 1.0;
        step_backward(params, w, dlogits, out.grads, out.d_cond);
    }
    return out;
}

double sequence_logprob(const DecoderParams& params, const std::vector<double>& condition,
                        const TokenSequence& y, const Vocab& vocab) {
    double lp = 0.0;
    StepWork w;
    for (std::size_t t = 0; t < y.ids.size(); ++t) {
        check_token(params, y.ids[t], "sequence_logprob");
        const int prev = (t == 0) ? vocab.bos() : y.ids[t - 1];
        run_step(params, prev, static_cast<int>(t), condition, w);
        double mx;
        const double lse = log_sum_exp(w.logits, mx);
        lp += w.logits[y.ids[t]] - mx - lse;
    }
    return lp;
}

double sequence_logprob_backward(const DecoderParams& params, const std::vector<double>& condition,
                                 const TokenSequence& y, const Vocab& vocab, double weight,
                                 DecoderGrads& grads, std::vector<double>& d_cond) {
    double lp = 0.0;
    StepWork w;
    std::vector<double> dlogits;
    if (d_cond.size() != condition.size()) d_cond.assign(condition.size(), 0.0);
    for (std::size_t t = 0; t < y.ids.size(); ++t) {
        const int target = y.ids[t];
        check_token(params, target, "sequence_logprob");
        const int prev = (t == 0) ? vocab.bos() : y.ids[t - 1];
        run_step(params, prev, static_cast<int>(t), condition, w);
        double mx;
        const double lse = log_sum_exp(w.logits, mx);
        lp += w.logits[target] - mx - lse;
        // d(logprob)/dlogit = onehot - softmax, scaled by weight
        dlogits.resize(w.logits.size());
        for (std::size_t v = 0; v < w.logits.size(); ++v)
            dlogits[v] = -weight * std::exp(w.logits[v] - mx - lse);
        dlogits[target] += weight;
        step_backward(params, w, dlogits, grads, d_cond);
    }
    return lp;
}

TokenSequence sample_response(const DecoderParams& params, const std::vector<double>& condition,
                              double temperature, Rng& rng, int max_len, const Vocab& vocab) {
    if (temperature < 0.0) throw ConfigError("sample_response: temperature must be >= 0");
    TokenSequence seq;
    seq.logprob = 0.0;
    const int cap = std::min(max_len, params.t_max());
    int prev = vocab.bos();
    StepWork w;
    for (int pos = 0; pos < cap; ++pos) {
        run_step(params, prev, pos, condition, w);
        double mx;
        const double lse = log_sum_exp(w.logits, mx);
        int next;
        if (temperature == 0.0) {
            next = 0;
            for (std::size_t v = 1; v < w.logits.size(); ++v)
                if (w.logits[v] > w.logits[next]) next = static_cast<int>(v);
        } else {
            // softmax(logits / temperature), walked against one uniform draw
            double tmx = w.logits[0];
            for (double v : w.logits) tmx = std::max(tmx, v);
            double tsum = 0.0;
            for (double v : w.logits) tsum += std::exp((v - tmx) / temperature);
            const double u = rng.uniform() * tsum;
            double acc = 0.0;
            next = static_cast<int>(w.logits.size()) - 1;
            for (std::size_t v = 0; v < w.logits.size(); ++v) {
                acc += std::exp((w.logits[v] - tmx) / temperature);
                if (u < acc) {
                    next = static_cast<int>(v);
                    break;
                }
            }
        }
        *seq.logprob += w.logits[next] - mx - lse;  // temperature-1 measure
        seq.ids.push_back(next);
        if (next == vocab.eos()) return seq;
        prev = next;
    }
    seq.truncated = true;
    return seq;
}

}  // namespace coe
