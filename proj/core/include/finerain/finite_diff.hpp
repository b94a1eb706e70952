// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>
#include <vector>

namespace finerain {

// Central-difference gradient oracle over a float32 parameter vector.
//
// Each coordinate is probed at fl(p+eps) and fl(p-eps); the divisor is the
// realized float32 step, not 2*eps, which removes the quantization error of
// storing perturbed parameters. Completely independent of any analytic
// backward pass, which is the point.
//
// Throws OracleError if f returns a non-finite value anywhere it is probed.
std::vector<double> finite_diff_grad(
    const std::function<double(std::span<const float>)>& f,
    std::span<const float> params, double epsilon);

}  // namespace finerain
