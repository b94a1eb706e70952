// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "finerain/conv.hpp"
#include "finerain/grid.hpp"
#include "finerain/rng.hpp"

namespace test_support {

using finerain::ConvKernel;
using finerain::Grid;
using finerain::Rng;

inline Grid random_grid(int c, int h, int w, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Grid g(c, h, w);
    for (float& v : g.data) v = static_cast<float>(rng.uniform(lo, hi));
    return g;
}

inline ConvKernel random_kernel(int out_c, int in_c, int k, Rng& rng, bool with_bias = true,
                                double scale = 0.5) {
    ConvKernel ker(out_c, in_c, k, with_bias);
    for (float& w : ker.weights) w = static_cast<float>(rng.uniform(-scale, scale));
    for (float& b : ker.bias) b = static_cast<float>(rng.uniform(-scale, scale));
    return ker;
}

// Direct six-nested-loop reference convolution, written independently of the
// library kernel. Per-output accumulation order (c, ky, kx) with a double
// accumulator seeded by the bias, which is also the library's contract.
inline Grid conv2d_reference(const Grid& in, const ConvKernel& ker) {
    const int p = ker.k / 2;
    Grid out(ker.out_channels, in.height, in.width);
    for (int o = 0; o < ker.out_channels; ++o)
        for (int y = 0; y < in.height; ++y)
            for (int x = 0; x < in.width; ++x) {
                double acc = ker.has_bias() ? double(ker.bias[std::size_t(o)]) : 0.0;
                for (int c = 0; c < ker.in_channels; ++c)
                    for (int ky = 0; ky < ker.k; ++ky)
                        for (int kx = 0; kx < ker.k; ++kx) {
                            const int yy = y + ky - p;
                            const int xx = x + kx - p;
                            if (yy < 0 || yy >= in.height || xx < 0 || xx >= in.width) continue;
                            acc += double(ker.w(o, c, ky, kx)) * double(in.at(c, yy, xx));
                        }
                out.at(o, y, x) = static_cast<float>(acc);
            }
    return out;
}

// Max relative error with an absolute floor: coordinates smaller than
// `floor_abs` in both vectors are compared at absolute tolerance
// tol * floor_abs, which keeps float32 finite-difference noise from
// drowning genuinely tiny gradients. Any real sign/term bug still shows
// up orders of magnitude above 1e-3.
inline double max_rel_err(std::span<const double> a, std::span<const double> b,
                          double floor_abs = 1e-2) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor_abs});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

inline std::vector<double> widen(std::span<const float> v) {
    return std::vector<double>(v.begin(), v.end());
}

inline double max_abs_diff(const Grid& a, const Grid& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        worst = std::max(worst, std::abs(double(a.data[i]) - double(b.data[i])));
    return worst;
}

inline bool bitwise_equal(const Grid& a, const Grid& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        if (a.data[i] != b.data[i]) return false;
    return true;
}

}  // namespace test_support

#include "finerain/model.hpp"

namespace test_support {

// Finite differences require the loss to be smooth around the probe point;
// a relu pre-activation inside (-margin, margin) can flip sign under an
// epsilon-sized parameter nudge and corrupt the estimate. Draws violating
// the margin are re-sampled, never the tolerance loosened.
inline bool relu_kink_safe(const finerain::ModelParams& p, std::span<const finerain::Grid> window,
                           const finerain::DropoutPlan* plan, double margin) {
    using finerain::conv2d;
    finerain::NetworkCache cache;
    finerain::network_forward(window, p, plan, &cache);
    const auto clear = [&](const Grid& pre) {
        for (float v : pre.data)
            if (std::abs(double(v)) < margin) return false;
        return true;
    };
    return clear(conv2d(cache.sr1.f1, p.sr1.W2)) && clear(conv2d(cache.sr1.f2, p.sr1.W3)) &&
           clear(conv2d(cache.sr2.f1, p.sr2.W2)) && clear(conv2d(cache.sr2.f2, p.sr2.W3)) &&
           clear(conv2d(cache.head.x, p.head.Wh1));
}

inline finerain::ModelParams draw_kink_safe_model(const finerain::ModelConfig& cfg,
                                                  std::span<const finerain::Grid> window,
                                                  const finerain::DropoutPlan* plan,
                                                  std::uint64_t seed, double scale = 0.4,
                                                  double margin = 0.006) {
    for (int attempt = 0; attempt < 200; ++attempt) {
        Rng rng(finerain::mix_seed(seed, std::uint64_t(attempt)));
        finerain::ModelParams p = finerain::make_model(cfg);
        finerain::for_each_block(p, [&](const finerain::BlockRef& b) {
            for (float& v : b.values) v = static_cast<float>(rng.uniform(-scale, scale));
        });
        if (relu_kink_safe(p, window, plan, margin)) return p;
    }
    throw std::runtime_error("draw_kink_safe_model: no smooth draw found");
}

}  // namespace test_support
