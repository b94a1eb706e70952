// SPDX-License-Identifier: Apache-2.0
#include "finerain/finite_diff.hpp"

#include <cmath>

#include "finerain/error.hpp"

namespace finerain {

std::vector<double> finite_diff_grad(
    const std::function<double(std::span<const float>)>& f,
    std::span<const float> params, double epsilon) {
    if (!(epsilon > 0.0)) throw InvalidArgument("finite_diff_grad: epsilon must be positive");
    std::vector<float> probe(params.begin(), params.end());
    std::vector<double> grad(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const float original = probe[i];
        const float hi = static_cast<float>(double(original) + epsilon);
        const float lo = static_cast<float>(double(original) - epsilon);
        probe[i] = hi;
        const double f_hi = f(probe);
        probe[i] = lo;
        const double f_lo = f(probe);
        probe[i] = original;
        if (!std::isfinite(f_hi) || !std::isfinite(f_lo))
            throw OracleError("finite_diff_grad: non-finite evaluation at coordinate " +
                              std::to_string(i));
        grad[i] = (f_hi - f_lo) / (double(hi) - double(lo));
    }
    return grad;
}

}  // namespace finerain
