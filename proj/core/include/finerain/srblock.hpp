// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "finerain/conv.hpp"
#include "finerain/grid.hpp"
#include "finerain/rng.hpp"

namespace finerain {

// Skip-connected refinement block:
//   f1 = W1*x + B1                (linear)
//   f2 = relu(W2*f1 + B2)
//   f3 = relu(W3*f2 + B3)
//   f4 = concat(f1, f3)
//   out = W4*f4 + B4              (linear)
// Biases live inside the kernels.
struct SRBlockParams {
    ConvKernel W1, W2, W3, W4;

    SRBlockParams() = default;
    // Channel path in_c -> c1 -> c2 -> c3 -> (c1+c3) -> c4 with the given kernel sizes.
    SRBlockParams(int in_c, int c1, int c2, int c3, int c4, int k1, int k2, int k3, int k4);

    int out_channels() const { return W4.out_channels; }
};

using SRBlockGrads = SRBlockParams;

SRBlockParams zeros_like(const SRBlockParams& p);
void init_sr_block(SRBlockParams& p, Rng& rng);

struct SRBlockCache {
    Grid x, f1, f2, f3;
};

Grid sr_block_forward(const Grid& x, const SRBlockParams& p);
Grid sr_block_forward_cached(const Grid& x, const SRBlockParams& p, SRBlockCache& cache);
void sr_block_backward(const SRBlockCache& cache, const SRBlockParams& p, const Grid& d_out,
                       SRBlockGrads& grads, Grid& d_x);

// Projection head after the two SR blocks:
//   f6 = relu(Wh1*x + Bh1)   (1x1)
//   f7 = Wh2*f6 + Bh2        (3x3, linear)
//   y  = Wout*f7 + Bout      (1x1, linear, single output channel)
struct HeadParams {
    ConvKernel Wh1, Wh2, Wout;

    HeadParams() = default;
    HeadParams(int in_c, int c6, int c7);
};

using HeadGrads = HeadParams;

HeadParams zeros_like(const HeadParams& p);
void init_head(HeadParams& p, Rng& rng);

struct HeadCache {
    Grid x, f6, f7;
};

Grid head_forward(const Grid& x, const HeadParams& p);
Grid head_forward_cached(const Grid& x, const HeadParams& p, HeadCache& cache);
void head_backward(const HeadCache& cache, const HeadParams& p, const Grid& d_out,
                   HeadGrads& grads, Grid& d_x);

}  // namespace finerain
