// SPDX-License-Identifier: Apache-2.0
#include "finerain/grid.hpp"

#include <cmath>

namespace finerain {

Grid::Grid(int c, int h, int w, float fill)
    : channels(c), height(h), width(w), data(std::size_t(std::int64_t(c) * h * w), fill) {
    if (c <= 0 || h <= 0 || w <= 0)
        throw InvalidArgument("Grid dimensions must be positive, got " + shape_str());
}

Grid::Grid(int c, int h, int w, std::vector<float> values)
    : channels(c), height(h), width(w), data(std::move(values)) {
    if (c <= 0 || h <= 0 || w <= 0)
        throw InvalidArgument("Grid dimensions must be positive, got " + shape_str());
    if (std::int64_t(data.size()) != size())
        throw ShapeError("Grid data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str());
}

std::string Grid::shape_str() const {
    return std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width);
}

Grid zeros_like(const Grid& g) { return Grid(g.channels, g.height, g.width, 0.0f); }

void require_same_shape(const Grid& a, const Grid& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
}

void require_finite(const Grid& g, const char* what) {
    for (float v : g.data)
        if (!std::isfinite(v))
            throw InvalidArgument(std::string(what) + " contains a non-finite value");
}

Grid sigmoid(const Grid& g) {
    Grid out = g;
    for (float& v : out.data) v = static_cast<float>(1.0 / (1.0 + std::exp(-double(v))));
    return out;
}

Grid tanh(const Grid& g) {
    Grid out = g;
    for (float& v : out.data) v = static_cast<float>(std::tanh(double(v)));
    return out;
}

Grid relu(const Grid& g) {
    Grid out = g;
    for (float& v : out.data) v = v > 0.0f ? v : 0.0f;
    return out;
}

Grid hadamard(const Grid& a, const Grid& b) {
    require_same_shape(a, b, "hadamard");
    Grid out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
    return out;
}

Grid concat_channels(const Grid& a, const Grid& b) {
    if (a.height != b.height || a.width != b.width)
        throw ShapeError("concat_channels: spatial mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
    Grid out(a.channels + b.channels, a.height, a.width);
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.data.size());
    return out;
}

Grid slice_channels(const Grid& g, int first, int count) {
    if (first < 0 || count <= 0 || first + count > g.channels)
        throw InvalidArgument("slice_channels: range [" + std::to_string(first) + ", " +
                              std::to_string(first + count) + ") out of " +
                              std::to_string(g.channels) + " channels");
    Grid out(count, g.height, g.width);
    std::copy(g.data.begin() + std::int64_t(first) * g.plane(),
              g.data.begin() + std::int64_t(first + count) * g.plane(), out.data.begin());
    return out;
}

Grid add(const Grid& a, const Grid& b) {
    require_same_shape(a, b, "add");
    Grid out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

void add_in_place(Grid& dst, const Grid& src) {
    require_same_shape(dst, src, "add_in_place");
    for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

void add_scaled_in_place(Grid& dst, const Grid& src, float scale) {
    require_same_shape(dst, src, "add_scaled_in_place");
    for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += scale * src.data[i];
}

void add_hadamard_in_place(Grid& dst, const Grid& a, const Grid& b) {
    require_same_shape(dst, a, "add_hadamard_in_place");
    require_same_shape(a, b, "add_hadamard_in_place");
    for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += a.data[i] * b.data[i];
}

void add_channel_bias_in_place(Grid& dst, std::span<const float> bias) {
    if (std::int64_t(bias.size()) != dst.channels)
        throw ShapeError("add_channel_bias_in_place: bias length " + std::to_string(bias.size()) +
                         " vs " + std::to_string(dst.channels) + " channels");
    const std::int64_t hw = dst.plane();
    for (int c = 0; c < dst.channels; ++c) {
        float* p = dst.channel_ptr(c);
        for (std::int64_t i = 0; i < hw; ++i) p[i] += bias[c];
    }
}

Grid scale(const Grid& g, float s) {
    Grid out = g;
    for (float& v : out.data) v *= s;
    return out;
}

}  // namespace finerain
