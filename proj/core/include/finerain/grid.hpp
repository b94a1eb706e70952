// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "finerain/error.hpp"

namespace finerain {

// Dense rank-3 field: channels x height x width, row-major float32.
// The one tensor type every module trades in. Values are immutable by
// convention once an operation has returned a Grid.
struct Grid {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data;  // [c][y][x] flattened

    Grid() = default;
    Grid(int c, int h, int w, float fill = 0.0f);
    Grid(int c, int h, int w, std::vector<float> values);

    std::int64_t size() const { return std::int64_t(channels) * height * width; }
    std::int64_t plane() const { return std::int64_t(height) * width; }

    float& at(int c, int y, int x) { return data[(std::int64_t(c) * height + y) * width + x]; }
    float at(int c, int y, int x) const { return data[(std::int64_t(c) * height + y) * width + x]; }

    const float* channel_ptr(int c) const { return data.data() + std::int64_t(c) * plane(); }
    float* channel_ptr(int c) { return data.data() + std::int64_t(c) * plane(); }

    bool same_shape(const Grid& other) const {
        return channels == other.channels && height == other.height && width == other.width;
    }
    std::string shape_str() const;
};

Grid zeros_like(const Grid& g);

// Throws ShapeError naming both shapes when they disagree.
void require_same_shape(const Grid& a, const Grid& b, const char* op);

// Throws InvalidArgument if any element is NaN/Inf; `what` names the grid.
void require_finite(const Grid& g, const char* what);

// Elementwise activations; shape-preserving, total on finite input.
Grid sigmoid(const Grid& g);
Grid tanh(const Grid& g);
Grid relu(const Grid& g);

// Elementwise product (the Hadamard operator in the cell equations).
Grid hadamard(const Grid& a, const Grid& b);

// Channel stack: a's channels first, then b's. Spatial dims must agree.
Grid concat_channels(const Grid& a, const Grid& b);

// Channels [first, first+count) as a new grid.
Grid slice_channels(const Grid& g, int first, int count);

// Arithmetic helpers shared by the forward/backward passes.
Grid add(const Grid& a, const Grid& b);
void add_in_place(Grid& dst, const Grid& src);
void add_scaled_in_place(Grid& dst, const Grid& src, float scale);
// dst += a o b without materializing the product.
void add_hadamard_in_place(Grid& dst, const Grid& a, const Grid& b);
// dst[c] += bias[c] broadcast over the spatial plane.
void add_channel_bias_in_place(Grid& dst, std::span<const float> bias);
Grid scale(const Grid& g, float s);

}  // namespace finerain
