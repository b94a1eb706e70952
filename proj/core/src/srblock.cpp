// SPDX-License-Identifier: Apache-2.0
#include "finerain/srblock.hpp"

#include <cmath>

namespace finerain {

namespace {

void glorot_fill(ConvKernel& k, Rng& rng) {
    const double fan_in = double(k.in_channels) * k.k * k.k;
    const double fan_out = double(k.out_channels) * k.k * k.k;
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (float& w : k.weights) w = static_cast<float>(rng.uniform(-limit, limit));
}

// d_pre = d_post masked by relu activity (output > 0).
Grid relu_backward(const Grid& d_post, const Grid& post) {
    Grid d_pre = d_post;
    for (std::size_t i = 0; i < d_pre.data.size(); ++i)
        if (!(post.data[i] > 0.0f)) d_pre.data[i] = 0.0f;
    return d_pre;
}

}  // namespace

SRBlockParams::SRBlockParams(int in_c, int c1, int c2, int c3, int c4, int k1, int k2, int k3,
                             int k4)
    : W1(c1, in_c, k1), W2(c2, c1, k2), W3(c3, c2, k3), W4(c4, c1 + c3, k4) {}

SRBlockParams zeros_like(const SRBlockParams& p) {
    SRBlockParams z;
    z.W1 = ConvKernel(p.W1.out_channels, p.W1.in_channels, p.W1.k);
    z.W2 = ConvKernel(p.W2.out_channels, p.W2.in_channels, p.W2.k);
    z.W3 = ConvKernel(p.W3.out_channels, p.W3.in_channels, p.W3.k);
    z.W4 = ConvKernel(p.W4.out_channels, p.W4.in_channels, p.W4.k);
    return z;
}

void init_sr_block(SRBlockParams& p, Rng& rng) {
    glorot_fill(p.W1, rng);
    glorot_fill(p.W2, rng);
    glorot_fill(p.W3, rng);
    glorot_fill(p.W4, rng);
}

Grid sr_block_forward(const Grid& x, const SRBlockParams& p) {
    SRBlockCache scratch;
    return sr_block_forward_cached(x, p, scratch);
}

Grid sr_block_forward_cached(const Grid& x, const SRBlockParams& p, SRBlockCache& cache) {
    cache.x = x;
    cache.f1 = conv2d(x, p.W1);
    cache.f2 = relu(conv2d(cache.f1, p.W2));
    cache.f3 = relu(conv2d(cache.f2, p.W3));
    return conv2d(concat_channels(cache.f1, cache.f3), p.W4);
}

void sr_block_backward(const SRBlockCache& cache, const SRBlockParams& p, const Grid& d_out,
                       SRBlockGrads& grads, Grid& d_x) {
    const Grid f4 = concat_channels(cache.f1, cache.f3);
    conv2d_backward_params(d_out, f4, grads.W4);
    const Grid d_f4 = conv2d_backward_input(d_out, p.W4);

    Grid d_f1 = slice_channels(d_f4, 0, cache.f1.channels);
    const Grid d_f3 = slice_channels(d_f4, cache.f1.channels, cache.f3.channels);

    const Grid d_pre3 = relu_backward(d_f3, cache.f3);
    conv2d_backward_params(d_pre3, cache.f2, grads.W3);
    const Grid d_f2 = conv2d_backward_input(d_pre3, p.W3);

    const Grid d_pre2 = relu_backward(d_f2, cache.f2);
    conv2d_backward_params(d_pre2, cache.f1, grads.W2);
    add_in_place(d_f1, conv2d_backward_input(d_pre2, p.W2));

    conv2d_backward_params(d_f1, cache.x, grads.W1);
    d_x = conv2d_backward_input(d_f1, p.W1);
}

HeadParams::HeadParams(int in_c, int c6, int c7)
    : Wh1(c6, in_c, 1), Wh2(c7, c6, 3), Wout(1, c7, 1) {}

HeadParams zeros_like(const HeadParams& p) {
    HeadParams z;
    z.Wh1 = ConvKernel(p.Wh1.out_channels, p.Wh1.in_channels, p.Wh1.k);
    z.Wh2 = ConvKernel(p.Wh2.out_channels, p.Wh2.in_channels, p.Wh2.k);
    z.Wout = ConvKernel(p.Wout.out_channels, p.Wout.in_channels, p.Wout.k);
    return z;
}

void init_head(HeadParams& p, Rng& rng) {
    glorot_fill(p.Wh1, rng);
    glorot_fill(p.Wh2, rng);
    glorot_fill(p.Wout, rng);
}

Grid head_forward(const Grid& x, const HeadParams& p) {
    HeadCache scratch;
    return head_forward_cached(x, p, scratch);
}

Grid head_forward_cached(const Grid& x, const HeadParams& p, HeadCache& cache) {
    cache.x = x;
    cache.f6 = relu(conv2d(x, p.Wh1));
    cache.f7 = conv2d(cache.f6, p.Wh2);
    return conv2d(cache.f7, p.Wout);
}

void head_backward(const HeadCache& cache, const HeadParams& p, const Grid& d_out,
                   HeadGrads& grads, Grid& d_x) {
    conv2d_backward_params(d_out, cache.f7, grads.Wout);
    const Grid d_f7 = conv2d_backward_input(d_out, p.Wout);

    conv2d_backward_params(d_f7, cache.f6, grads.Wh2);
    const Grid d_f6 = conv2d_backward_input(d_f7, p.Wh2);

    const Grid d_pre6 = relu_backward(d_f6, cache.f6);
    conv2d_backward_params(d_pre6, cache.x, grads.Wh1);
    d_x = conv2d_backward_input(d_pre6, p.Wh1);
}

}  // namespace finerain
