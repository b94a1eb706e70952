// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "finerain/grid.hpp"

namespace finerain {

// Square odd-sized convolution filter bank, optionally with a per-output
// channel bias. weights laid out [out][in][ky][kx].
struct ConvKernel {
    int out_channels = 0;
    int in_channels = 0;
    int k = 0;
    std::vector<float> weights;
    std::vector<float> bias;  // length out_channels, or empty for no bias

    ConvKernel() = default;
    ConvKernel(int out_c, int in_c, int kk, bool with_bias = true);

    bool has_bias() const { return !bias.empty(); }
    std::int64_t weight_count() const { return std::int64_t(out_channels) * in_channels * k * k; }
    float& w(int o, int c, int ky, int kx) {
        return weights[((std::int64_t(o) * in_channels + c) * k + ky) * k + kx];
    }
    float w(int o, int c, int ky, int kx) const {
        return weights[((std::int64_t(o) * in_channels + c) * k + ky) * k + kx];
    }
};

// Zero-padded "same" 2-D convolution: output spatial size equals input size,
// out-of-range taps read 0. Accumulation is done in double and rounded to
// float once per output element.
Grid conv2d(const Grid& input, const ConvKernel& kernel);

// d(loss)/d(input) given d(loss)/d(output).
Grid conv2d_backward_input(const Grid& d_out, const ConvKernel& kernel);

// Accumulates d(loss)/d(weights) and d(loss)/d(bias) into `grads`
// (a kernel of the same shape, bias present iff the forward kernel had one).
void conv2d_backward_params(const Grid& d_out, const Grid& input, ConvKernel& grads);

}  // namespace finerain
