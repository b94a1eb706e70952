// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "finerain/convlstm.hpp"
#include "finerain/model.hpp"
#include "finerain/optim.hpp"
#include "finerain/pipeline.hpp"
#include "finerain/qmap.hpp"

namespace {

using namespace finerain;

Grid random_grid(int c, int h, int w, Rng& rng) {
    Grid g(c, h, w);
    for (float& v : g.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    return g;
}

ConvKernel random_kernel(int out_c, int in_c, int k, Rng& rng) {
    ConvKernel ker(out_c, in_c, k);
    for (float& w : ker.weights) w = static_cast<float>(rng.uniform(-0.5, 0.5));
    for (float& b : ker.bias) b = static_cast<float>(rng.uniform(-0.5, 0.5));
    return ker;
}

void BM_conv2d(benchmark::State& state) {
    const int ch = int(state.range(0)), size = int(state.range(1)), k = int(state.range(2));
    Rng rng(1);
    const Grid in = random_grid(ch, size, size, rng);
    const ConvKernel ker = random_kernel(ch, ch, k, rng);
    for (auto _ : state) benchmark::DoNotOptimize(conv2d(in, ker));
    state.SetItemsProcessed(state.iterations() * std::int64_t(ch) * ch * size * size * k * k);
}
BENCHMARK(BM_conv2d)->Args({8, 32, 3})->Args({16, 64, 3})->Args({16, 32, 9});

void BM_conv2d_backward(benchmark::State& state) {
    Rng rng(2);
    const Grid in = random_grid(8, 32, 32, rng);
    const ConvKernel ker = random_kernel(8, 8, 3, rng);
    const Grid d_out = random_grid(8, 32, 32, rng);
    for (auto _ : state) {
        ConvKernel grads(8, 8, 3);
        conv2d_backward_params(d_out, in, grads);
        benchmark::DoNotOptimize(conv2d_backward_input(d_out, ker));
        benchmark::DoNotOptimize(grads);
    }
}
BENCHMARK(BM_conv2d_backward);

void BM_cell_step(benchmark::State& state) {
    const int eta = int(state.range(0)), size = int(state.range(1));
    Rng rng(3);
    ConvLSTMCellParams cell(eta, 7, 3, size, size);
    init_cell(cell, rng);
    const Grid x = random_grid(7, size, size, rng);
    const CellState prev{random_grid(eta, size, size, rng), random_grid(eta, size, size, rng)};
    for (auto _ : state) benchmark::DoNotOptimize(cell_step(x, prev, cell));
}
BENCHMARK(BM_cell_step)->Args({8, 16})->Args({16, 32});

void BM_network_forward_desk(benchmark::State& state) {
    ModelConfig cfg;
    cfg.input_channels = 7;
    cfg.height = 16;
    cfg.width = 16;
    cfg.window = 5;
    cfg.eta = {5, 4, 4};
    cfg.kernels = {3, 3, 3};
    cfg.sr_channels = {4, 8, 6, 4};
    cfg.sr_kernels = {3, 3, 3, 3};
    cfg.head_channels = {8, 6};
    const ModelParams params = init_model(cfg, 4);
    Rng rng(5);
    std::vector<Grid> window;
    for (int t = 0; t < cfg.window; ++t) window.push_back(random_grid(7, 16, 16, rng));
    for (auto _ : state) benchmark::DoNotOptimize(network_forward(window, params));
}
BENCHMARK(BM_network_forward_desk);

void BM_network_loss_grad_desk(benchmark::State& state) {
    ModelConfig cfg;
    cfg.input_channels = 7;
    cfg.height = 16;
    cfg.width = 16;
    cfg.window = 5;
    cfg.eta = {5, 4, 4};
    cfg.kernels = {3, 3, 3};
    cfg.sr_channels = {4, 8, 6, 4};
    cfg.sr_kernels = {3, 3, 3, 3};
    cfg.head_channels = {8, 6};
    const ModelParams params = init_model(cfg, 6);
    Rng rng(7);
    std::vector<Grid> window;
    for (int t = 0; t < cfg.window; ++t) window.push_back(random_grid(7, 16, 16, rng));
    const Grid target = random_grid(1, 16, 16, rng);
    for (auto _ : state) {
        ModelGrads grads = zeros_like(params);
        benchmark::DoNotOptimize(network_loss_grad(window, target, params, nullptr, grads));
    }
}
BENCHMARK(BM_network_loss_grad_desk);

void BM_interpolate(benchmark::State& state) {
    Rng rng(8);
    const Grid coarse = random_grid(7, 33, 34, rng);
    for (auto _ : state) benchmark::DoNotOptimize(interpolate_to_grid(coarse, 129, 135));
}
BENCHMARK(BM_interpolate);

void BM_qmap_apply_day(benchmark::State& state) {
    Rng rng(9);
    std::vector<Grid> model_series, obs_series;
    for (int d = 0; d < 365; ++d) {
        model_series.push_back(random_grid(1, 16, 16, rng));
        obs_series.push_back(random_grid(1, 16, 16, rng));
    }
    const QuantileMapModel qm = fit_qmap(model_series, obs_series);
    const Grid day = model_series.front();
    for (auto _ : state) {
        Grid out(1, 16, 16);
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x)
                out.at(0, y, x) =
                    static_cast<float>(apply_qmap(double(day.at(0, y, x)), y, x, qm));
        benchmark::DoNotOptimize(out);
    }
}
BENCHMARK(BM_qmap_apply_day);

void BM_synthetic_day(benchmark::State& state) {
    for (auto _ : state) {
        SyntheticConfig cfg;
        cfg.height = 16;
        cfg.width = 16;
        cfg.n_days = 10;
        cfg.seed = 11;
        benchmark::DoNotOptimize(generate_synthetic(cfg));
    }
}
BENCHMARK(BM_synthetic_day);

}  // namespace

BENCHMARK_MAIN();
