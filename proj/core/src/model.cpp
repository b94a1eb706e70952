// SPDX-License-Identifier: Apache-2.0
#include "finerain/model.hpp"

#include <cmath>

#include "finerain/optim.hpp"

namespace finerain {

void ModelConfig::validate() const {
    if (input_channels <= 0 || height <= 0 || width <= 0 || window <= 0)
        throw ConfigError("ModelConfig: sizes must be positive");
    for (int v : eta)
        if (v <= 0) throw ConfigError("ModelConfig: encoder filter counts must be positive");
    for (int v : kernels)
        if (v <= 0 || v % 2 == 0) throw ConfigError("ModelConfig: encoder kernels must be odd");
    for (int v : sr_kernels)
        if (v <= 0 || v % 2 == 0) throw ConfigError("ModelConfig: SR kernels must be odd");
    for (int v : sr_channels)
        if (v <= 0) throw ConfigError("ModelConfig: SR channel counts must be positive");
    for (int v : head_channels)
        if (v <= 0) throw ConfigError("ModelConfig: head channel counts must be positive");
}

ModelParams make_model(const ModelConfig& cfg) {
    cfg.validate();
    ModelParams p;
    p.cells[0] = ConvLSTMCellParams(cfg.eta[0], cfg.input_channels, cfg.kernels[0], cfg.height,
                                    cfg.width);
    p.cells[1] = ConvLSTMCellParams(cfg.eta[1], cfg.eta[0], cfg.kernels[1], cfg.height, cfg.width);
    p.cells[2] = ConvLSTMCellParams(cfg.eta[2], cfg.eta[1], cfg.kernels[2], cfg.height, cfg.width);
    p.sr1 = SRBlockParams(cfg.eta[2], cfg.sr_channels[0], cfg.sr_channels[1], cfg.sr_channels[2],
                          cfg.sr_channels[3], cfg.sr_kernels[0], cfg.sr_kernels[1],
                          cfg.sr_kernels[2], cfg.sr_kernels[3]);
    p.sr2 = SRBlockParams(cfg.sr_channels[3], cfg.sr_channels[0], cfg.sr_channels[1],
                          cfg.sr_channels[2], cfg.sr_channels[3], cfg.sr_kernels[0],
                          cfg.sr_kernels[1], cfg.sr_kernels[2], cfg.sr_kernels[3]);
    p.head = HeadParams(cfg.sr_channels[3], cfg.head_channels[0], cfg.head_channels[1]);
    return p;
}

ModelParams init_model(const ModelConfig& cfg, std::uint64_t seed) {
    ModelParams p = make_model(cfg);
    Rng rng(mix_seed(seed, 0x6d6f64656cULL));  // independent stream per purpose
    for (auto& cell : p.cells) init_cell(cell, rng);
    init_sr_block(p.sr1, rng);
    init_sr_block(p.sr2, rng);
    init_head(p.head, rng);
    return p;
}

ModelParams zeros_like(const ModelParams& p) {
    ModelParams z;
    for (int i = 0; i < 3; ++i) z.cells[std::size_t(i)] = zeros_like(p.cells[std::size_t(i)]);
    z.sr1 = zeros_like(p.sr1);
    z.sr2 = zeros_like(p.sr2);
    z.head = zeros_like(p.head);
    return z;
}

namespace {

void visit_kernel(const std::string& name, BlockKind wk, BlockKind bk, ConvKernel& k,
                  const std::function<void(const BlockRef&)>& fn) {
    fn(BlockRef{name, wk, std::span<float>(k.weights)});
    if (k.has_bias()) fn(BlockRef{name + ".bias", bk, std::span<float>(k.bias)});
}

}  // namespace

void for_each_block(ModelParams& p, const std::function<void(const BlockRef&)>& fn) {
    for (int i = 0; i < 3; ++i) {
        ConvLSTMCellParams& c = p.cells[std::size_t(i)];
        const std::string base = "cell" + std::to_string(i) + ".";
        fn({base + "W_i", BlockKind::EncoderInputKernel, std::span<float>(c.W_i.weights)});
        fn({base + "W_f", BlockKind::EncoderInputKernel, std::span<float>(c.W_f.weights)});
        fn({base + "W_o", BlockKind::EncoderInputKernel, std::span<float>(c.W_o.weights)});
        fn({base + "W_c", BlockKind::EncoderInputKernel, std::span<float>(c.W_c.weights)});
        fn({base + "R_i", BlockKind::EncoderRecurrentKernel, std::span<float>(c.R_i.weights)});
        fn({base + "R_f", BlockKind::EncoderRecurrentKernel, std::span<float>(c.R_f.weights)});
        fn({base + "R_o", BlockKind::EncoderRecurrentKernel, std::span<float>(c.R_o.weights)});
        fn({base + "R_c", BlockKind::EncoderRecurrentKernel, std::span<float>(c.R_c.weights)});
        fn({base + "rho_i", BlockKind::EncoderPeephole, std::span<float>(c.rho_i.data)});
        fn({base + "rho_f", BlockKind::EncoderPeephole, std::span<float>(c.rho_f.data)});
        fn({base + "rho_o", BlockKind::EncoderPeephole, std::span<float>(c.rho_o.data)});
        fn({base + "b_i", BlockKind::EncoderBias, std::span<float>(c.b_i)});
        fn({base + "b_f", BlockKind::EncoderBias, std::span<float>(c.b_f)});
        fn({base + "b_o", BlockKind::EncoderBias, std::span<float>(c.b_o)});
        fn({base + "b_c", BlockKind::EncoderBias, std::span<float>(c.b_c)});
    }
    for (int s = 0; s < 2; ++s) {
        SRBlockParams& b = s == 0 ? p.sr1 : p.sr2;
        const std::string base = "sr" + std::to_string(s + 1) + ".";
        visit_kernel(base + "W1", BlockKind::SRWeight, BlockKind::SRBias, b.W1, fn);
        visit_kernel(base + "W2", BlockKind::SRWeight, BlockKind::SRBias, b.W2, fn);
        visit_kernel(base + "W3", BlockKind::SRWeight, BlockKind::SRBias, b.W3, fn);
        visit_kernel(base + "W4", BlockKind::SRWeight, BlockKind::SRBias, b.W4, fn);
    }
    visit_kernel("head.Wh1", BlockKind::HeadWeight, BlockKind::HeadBias, p.head.Wh1, fn);
    visit_kernel("head.Wh2", BlockKind::HeadWeight, BlockKind::HeadBias, p.head.Wh2, fn);
    visit_kernel("head.Wout", BlockKind::HeadWeight, BlockKind::HeadBias, p.head.Wout, fn);
}

std::size_t param_count(const ModelParams& p) {
    std::size_t n = 0;
    for_each_block(const_cast<ModelParams&>(p), [&](const BlockRef& b) { n += b.values.size(); });
    return n;
}

std::vector<float> flatten_params(const ModelParams& p) {
    std::vector<float> flat;
    flat.reserve(param_count(p));
    for_each_block(const_cast<ModelParams&>(p), [&](const BlockRef& b) {
        flat.insert(flat.end(), b.values.begin(), b.values.end());
    });
    return flat;
}

void unflatten_params(std::span<const float> flat, ModelParams& p) {
    std::size_t cursor = 0;
    for_each_block(p, [&](const BlockRef& b) {
        if (cursor + b.values.size() > flat.size())
            throw ShapeError("unflatten_params: flat vector too short");
        std::copy(flat.begin() + std::ptrdiff_t(cursor),
                  flat.begin() + std::ptrdiff_t(cursor + b.values.size()), b.values.begin());
        cursor += b.values.size();
    });
    if (cursor != flat.size())
        throw ShapeError("unflatten_params: flat vector length " + std::to_string(flat.size()) +
                         " vs model size " + std::to_string(cursor));
}

void accumulate_scaled(ModelParams& dst, const ModelParams& src, float alpha) {
    std::vector<std::span<float>> dst_blocks;
    for_each_block(dst, [&](const BlockRef& b) { dst_blocks.push_back(b.values); });
    std::size_t i = 0;
    for_each_block(const_cast<ModelParams&>(src), [&](const BlockRef& b) {
        if (i >= dst_blocks.size() || dst_blocks[i].size() != b.values.size())
            throw ShapeError("accumulate_scaled: mismatched model layouts");
        float* d = dst_blocks[i].data();
        const float* s = b.values.data();
        for (std::size_t j = 0; j < b.values.size(); ++j) d[j] += alpha * s[j];
        ++i;
    });
}

void scale_params(ModelParams& p, float alpha) {
    for_each_block(p, [&](const BlockRef& b) {
        for (float& v : b.values) v *= alpha;
    });
}

Grid network_forward(std::span<const Grid> window, const ModelParams& p, const DropoutPlan* plan,
                     NetworkCache* cache) {
    NetworkCache local;
    NetworkCache& c = cache != nullptr ? *cache : local;
    const bool want_cache = cache != nullptr;
    c.encoder_out = stacked_forward(window, p.cells, plan, want_cache ? &c.encoder : nullptr);
    c.sr1_out = want_cache ? sr_block_forward_cached(c.encoder_out, p.sr1, c.sr1)
                           : sr_block_forward(c.encoder_out, p.sr1);
    c.sr2_out = want_cache ? sr_block_forward_cached(c.sr1_out, p.sr2, c.sr2)
                           : sr_block_forward(c.sr1_out, p.sr2);
    return want_cache ? head_forward_cached(c.sr2_out, p.head, c.head)
                      : head_forward(c.sr2_out, p.head);
}

Grid network_forward(std::span<const Grid> window, const ModelParams& p, RunMode mode,
                     double recurrent_rate, double inter_layer_rate, Rng* rng) {
    if (mode == RunMode::Infer) return network_forward(window, p, nullptr, nullptr);
    if (rng == nullptr) throw InvalidArgument("network_forward: train mode needs an Rng");
    DropoutPlan plan = sample_dropout_plan(p.cells, static_cast<int>(window.size()),
                                           p.cells[0].height, p.cells[0].width, recurrent_rate,
                                           inter_layer_rate, *rng);
    return network_forward(window, p, &plan, nullptr);
}

void network_backward(const NetworkCache& cache, const ModelParams& p, const DropoutPlan* plan,
                      const Grid& d_y, ModelGrads& grads) {
    Grid d_sr2;
    head_backward(cache.head, p.head, d_y, grads.head, d_sr2);
    Grid d_sr1;
    sr_block_backward(cache.sr2, p.sr2, d_sr2, grads.sr2, d_sr1);
    Grid d_enc;
    sr_block_backward(cache.sr1, p.sr1, d_sr1, grads.sr1, d_enc);
    stacked_backward(cache.encoder, p.cells, plan, d_enc, grads.cells);
}

double network_loss_grad(std::span<const Grid> window, const Grid& target, const ModelParams& p,
                         const DropoutPlan* plan, ModelGrads& grads) {
    NetworkCache cache;
    const Grid pred = network_forward(window, p, plan, &cache);
    const double loss = rmse_loss(pred, target);
    const Grid d_y = rmse_loss_grad(pred, target, loss);
    network_backward(cache, p, plan, d_y, grads);
    return loss;
}

}  // namespace finerain
