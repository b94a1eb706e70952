// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <functional>
#include <span>
#include <string>

#include "finerain/convlstm.hpp"
#include "finerain/srblock.hpp"

namespace finerain {

// Hyperparameters of the full downscaling network. The defaults are the
// production configuration; tests shrink everything.
struct ModelConfig {
    int input_channels = 7;
    int height = 129;
    int width = 135;
    int window = 5;                               // T, days per input sequence
    std::array<int, 3> eta = {32, 16, 16};        // encoder filters per layer
    std::array<int, 3> kernels = {9, 5, 3};       // encoder kernel sizes
    std::array<int, 4> sr_channels = {16, 128, 64, 32};
    std::array<int, 4> sr_kernels = {9, 5, 3, 3};
    std::array<int, 2> head_channels = {128, 16};

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

// Every learnable tensor: three encoder cells, two refinement blocks, head.
struct ModelParams {
    std::array<ConvLSTMCellParams, 3> cells;
    SRBlockParams sr1, sr2;
    HeadParams head;
};

using ModelGrads = ModelParams;

ModelParams make_model(const ModelConfig& cfg);            // zero-valued
ModelParams init_model(const ModelConfig& cfg, std::uint64_t seed);
ModelParams zeros_like(const ModelParams& p);

// Parameter-block iteration in a fixed canonical order. `kind` drives the
// weight-decay mask and checkpoint layout.
enum class BlockKind {
    EncoderInputKernel,
    EncoderRecurrentKernel,
    EncoderPeephole,
    EncoderBias,
    SRWeight,
    SRBias,
    HeadWeight,
    HeadBias,
};

struct BlockRef {
    std::string name;
    BlockKind kind;
    std::span<float> values;
};

void for_each_block(ModelParams& p, const std::function<void(const BlockRef&)>& fn);
std::size_t param_count(const ModelParams& p);
std::vector<float> flatten_params(const ModelParams& p);
void unflatten_params(std::span<const float> flat, ModelParams& p);

// Whether parameters of this kind receive L2 weight decay (the encoder's
// kernels and peepholes do; biases and the refinement/head stages do not).
inline bool decays(BlockKind kind) {
    return kind == BlockKind::EncoderInputKernel || kind == BlockKind::EncoderRecurrentKernel ||
           kind == BlockKind::EncoderPeephole;
}

// dst += alpha * src, blockwise; shapes must match.
void accumulate_scaled(ModelParams& dst, const ModelParams& src, float alpha);
void scale_params(ModelParams& p, float alpha);

struct NetworkCache {
    StackedCache encoder;
    Grid encoder_out;
    SRBlockCache sr1, sr2;
    Grid sr1_out, sr2_out;
    HeadCache head;
};

// Full forward pass: window -> encoder -> SR x2 -> head -> 1 x H x W grid in
// normalized precipitation units. `plan` null = inference (no dropout).
Grid network_forward(std::span<const Grid> window, const ModelParams& p,
                     const DropoutPlan* plan = nullptr, NetworkCache* cache = nullptr);

// train|infer convenience; Train samples a dropout plan from rng.
Grid network_forward(std::span<const Grid> window, const ModelParams& p, RunMode mode,
                     double recurrent_rate, double inter_layer_rate, Rng* rng);

void network_backward(const NetworkCache& cache, const ModelParams& p, const DropoutPlan* plan,
                      const Grid& d_y, ModelGrads& grads);

// RMSE loss of one window against its target plus full backward pass;
// gradients accumulate into `grads`. Returns the loss.
double network_loss_grad(std::span<const Grid> window, const Grid& target, const ModelParams& p,
                         const DropoutPlan* plan, ModelGrads& grads);

}  // namespace finerain
