#include "coe/optimizer.hpp"

#include <cmath>
#include <string>

#include "coe/errors.hpp"

namespace coe {

void Optimizer::step(std::vector<Matrix*> params, const std::vector<Matrix>& grads) {
    if (params.size() != grads.size())
        throw DimensionError("optimizer: " + std::to_string(params.size()) + " params vs " +
                             std::to_string(grads.size()) + " grads");
    if (slot_m_.empty()) {
        for (const Matrix* p : params) slot_m_.emplace_back(p->rows(), p->cols());
        if (kind_ == OptimizerKind::Adam)
            for (const Matrix* p : params) slot_v_.emplace_back(p->rows(), p->cols());
    }
    if (slot_m_.size() != params.size())
        throw DimensionError("optimizer: parameter list size changed between steps");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i]->same_shape(grads[i]) || !params[i]->same_shape(slot_m_[i]))
            throw DimensionError("optimizer: shape mismatch at parameter " + std::to_string(i));
        if (!grads[i].all_finite())
            throw NumericError("optimizer: non-finite gradient at parameter " + std::to_string(i) +
                               " (training diverged)");
    }

    ++step_;
    if (kind_ == OptimizerKind::SgdMomentum) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& v = slot_m_[i].data();
            auto& p = params[i]->data();
            const auto& g = grads[i].data();
            for (std::size_t j = 0; j < p.size(); ++j) {
                v[j] = beta1_ * v[j] + g[j];
                p[j] -= lr_ * v[j];
            }
        }
    } else {
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& m = slot_m_[i].data();
            auto& v = slot_v_[i].data();
            auto& p = params[i]->data();
            const auto& g = grads[i].data();
            for (std::size_t j = 0; j < p.size(); ++j) {
                m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
                v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
                const double mhat = m[j] / bc1;
                const double vhat = v[j] / bc2;
                p[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }
}

}  // namespace coe
