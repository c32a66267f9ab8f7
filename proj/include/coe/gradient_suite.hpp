#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace coe {

struct GradientCheckResult {
    std::string name;
    double max_rel_err = 0.0;
    int instances = 0;
};

// Central-difference verification of every analytic gradient in the
// repository, each over `instances` random instances at eps = 1e-5:
//   - grounding loss through max-pool and softmax into the EGM parameters
//     (both literal and logit modes),
//   - reasoning loss end-to-end through the condition vector into EGM and
//     decoder parameters,
//   - preference loss w.r.t. the policy decoder.
std::vector<GradientCheckResult> run_gradient_suite(std::uint64_t seed, int instances);

}  // namespace coe
