#include "coe/grad_check.hpp"

#include <cmath>
#include <string>

#include "coe/errors.hpp"

namespace coe {

double grad_check(const ScalarFn& f, std::vector<Matrix> params,
                  const std::vector<Matrix>& analytic_grads, double eps) {
    if (params.size() != analytic_grads.size())
        throw DimensionError("grad_check: params/grads count mismatch");
    double max_rel = 0.0;
    for (std::size_t p = 0; p < params.size(); ++p) {
        if (!params[p].same_shape(analytic_grads[p]))
            throw DimensionError("grad_check: shape mismatch at parameter " + std::to_string(p));
        auto& data = params[p].data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double orig = data[i];
            data[i] = orig + eps;
            const double fp = f(params);
            data[i] = orig - eps;
            const double fm = f(params);
            data[i] = orig;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw NumericError("grad_check: non-finite objective at probe point (param " +
                                   std::to_string(p) + ", coord " + std::to_string(i) + ")");
            const double numeric = (fp - fm) / (2.0 * eps);
            const double analytic = analytic_grads[p].data()[i];
            const double denom = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
            max_rel = std::max(max_rel, std::fabs(analytic - numeric) / denom);
        }
    }
    return max_rel;
}

}  // namespace coe
