#pragma once

#include <vector>

#include "coe/matrix.hpp"

namespace coe {

enum class OptimizerKind { SgdMomentum, Adam };

// First-order optimizer over a fixed list of parameter matrices. State slots
// are allocated lazily on the first step and must keep matching shapes
// afterwards. Single-owner, single-threaded.
class Optimizer {
public:
    explicit Optimizer(OptimizerKind kind = OptimizerKind::Adam, double learning_rate = 1e-3,
                       double momentum_or_beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : kind_(kind), lr_(learning_rate), beta1_(momentum_or_beta1), beta2_(beta2), eps_(eps) {}

    OptimizerKind kind() const { return kind_; }
    double learning_rate() const { return lr_; }
    void set_learning_rate(double lr) { lr_ = lr; }
    long step_count() const { return step_; }

    // Applies one update in place. Throws DimensionError on shape mismatch
    // and NumericError when any gradient entry is non-finite.
    void step(std::vector<Matrix*> params, const std::vector<Matrix>& grads);

private:
    OptimizerKind kind_;
    double lr_;
    double beta1_;
    double beta2_;
    double eps_;
    long step_ = 0;
    std::vector<Matrix> slot_m_;  // momentum / first moment
    std::vector<Matrix> slot_v_;  // second moment (adam only)
};

}  // namespace coe
