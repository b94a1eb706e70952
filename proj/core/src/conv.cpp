// SPDX-License-Identifier: Apache-2.0
#include "finerain/conv.hpp"

#include <algorithm>

namespace finerain {

ConvKernel::ConvKernel(int out_c, int in_c, int kk, bool with_bias)
    : out_channels(out_c), in_channels(in_c), k(kk) {
    if (out_c <= 0 || in_c <= 0 || kk <= 0)
        throw InvalidArgument("ConvKernel dimensions must be positive");
    if (kk % 2 == 0)
        throw InvalidArgument("ConvKernel size must be odd for same-padding, got k=" +
                              std::to_string(kk));
    weights.assign(std::size_t(weight_count()), 0.0f);
    if (with_bias) bias.assign(std::size_t(out_c), 0.0f);
}

namespace {

void check_kernel(const Grid& input, const ConvKernel& ker, const char* op) {
    if (ker.k % 2 == 0)
        throw InvalidArgument(std::string(op) + ": kernel size must be odd, got k=" +
                              std::to_string(ker.k));
    if (input.channels != ker.in_channels)
        throw ShapeError(std::string(op) + ": input " + input.shape_str() + " vs kernel " +
                         std::to_string(ker.out_channels) + "x" + std::to_string(ker.in_channels) +
                         "x" + std::to_string(ker.k) + "x" + std::to_string(ker.k));
}

// Adds w * shifted(plane) into acc, where the shift reads source row y+dy and
// column x+dx, restricted to in-range source cells. Per-element accumulation
// order across calls stays (channel, ky, kx), matching a naive 6-loop sweep.
void accumulate_shifted(std::vector<double>& acc, const float* plane, int h, int w, double weight,
                        int dy, int dx) {
    const int ylo = std::max(0, -dy), yhi = std::min(h, h - dy);
    const int xlo = std::max(0, -dx), xhi = std::min(w, w - dx);
    for (int y = ylo; y < yhi; ++y) {
        double* arow = acc.data() + std::int64_t(y) * w;
        const float* irow = plane + std::int64_t(y + dy) * w + dx;
        for (int x = xlo; x < xhi; ++x) arow[x] += weight * double(irow[x]);
    }
}

}  // namespace

Grid conv2d(const Grid& input, const ConvKernel& ker) {
    check_kernel(input, ker, "conv2d");
    const int h = input.height, w = input.width, p = ker.k / 2;
    Grid out(ker.out_channels, h, w);
    std::vector<double> acc(std::size_t(h) * w);
    for (int o = 0; o < ker.out_channels; ++o) {
        std::fill(acc.begin(), acc.end(), ker.has_bias() ? double(ker.bias[o]) : 0.0);
        for (int c = 0; c < ker.in_channels; ++c) {
            const float* plane = input.channel_ptr(c);
            for (int ky = 0; ky < ker.k; ++ky)
                for (int kx = 0; kx < ker.k; ++kx)
                    accumulate_shifted(acc, plane, h, w, ker.w(o, c, ky, kx), ky - p, kx - p);
        }
        float* dst = out.channel_ptr(o);
        for (std::size_t i = 0; i < acc.size(); ++i) dst[i] = static_cast<float>(acc[i]);
    }
    return out;
}

Grid conv2d_backward_input(const Grid& d_out, const ConvKernel& ker) {
    if (d_out.channels != ker.out_channels)
        throw ShapeError("conv2d_backward_input: d_out " + d_out.shape_str() + " vs kernel out=" +
                         std::to_string(ker.out_channels));
    const int h = d_out.height, w = d_out.width, p = ker.k / 2;
    Grid d_in(ker.in_channels, h, w);
    std::vector<double> acc(std::size_t(h) * w);
    // d_in[c,y,x] = sum_{o,ky,kx} W[o,c,ky,kx] * d_out[o, y-ky+p, x-kx+p]
    for (int c = 0; c < ker.in_channels; ++c) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int o = 0; o < ker.out_channels; ++o) {
            const float* plane = d_out.channel_ptr(o);
            for (int ky = 0; ky < ker.k; ++ky)
                for (int kx = 0; kx < ker.k; ++kx)
                    accumulate_shifted(acc, plane, h, w, ker.w(o, c, ky, kx), p - ky, p - kx);
        }
        float* dst = d_in.channel_ptr(c);
        for (std::size_t i = 0; i < acc.size(); ++i) dst[i] = static_cast<float>(acc[i]);
    }
    return d_in;
}

void conv2d_backward_params(const Grid& d_out, const Grid& input, ConvKernel& grads) {
    if (d_out.channels != grads.out_channels || input.channels != grads.in_channels)
        throw ShapeError("conv2d_backward_params: d_out " + d_out.shape_str() + ", input " +
                         input.shape_str() + " vs kernel " + std::to_string(grads.out_channels) +
                         "x" + std::to_string(grads.in_channels));
    if (d_out.height != input.height || d_out.width != input.width)
        throw ShapeError("conv2d_backward_params: spatial mismatch " + d_out.shape_str() + " vs " +
                         input.shape_str());
    const int h = input.height, w = input.width, p = grads.k / 2;
    for (int o = 0; o < grads.out_channels; ++o) {
        const float* dplane = d_out.channel_ptr(o);
        for (int c = 0; c < grads.in_channels; ++c) {
            const float* iplane = input.channel_ptr(c);
            for (int ky = 0; ky < grads.k; ++ky) {
                for (int kx = 0; kx < grads.k; ++kx) {
                    const int dy = ky - p, dx = kx - p;
                    const int ylo = std::max(0, -dy), yhi = std::min(h, h - dy);
                    const int xlo = std::max(0, -dx), xhi = std::min(w, w - dx);
                    double acc = 0.0;
                    for (int y = ylo; y < yhi; ++y) {
                        const float* drow = dplane + std::int64_t(y) * w;
                        const float* irow = iplane + std::int64_t(y + dy) * w + dx;
                        for (int x = xlo; x < xhi; ++x) acc += double(drow[x]) * double(irow[x]);
                    }
                    grads.w(o, c, ky, kx) += static_cast<float>(acc);
                }
            }
        }
        if (grads.has_bias()) {
            double acc = 0.0;
            for (std::int64_t i = 0; i < d_out.plane(); ++i) acc += double(dplane[i]);
            grads.bias[o] += static_cast<float>(acc);
        }
    }
}

}  // namespace finerain
