// SPDX-License-Identifier: Apache-2.0
#include "finerain/convlstm.hpp"

#include <cmath>

namespace finerain {

namespace {

void glorot_fill(ConvKernel& k, Rng& rng) {
    const double fan_in = double(k.in_channels) * k.k * k.k;
    const double fan_out = double(k.out_channels) * k.k * k.k;
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (float& w : k.weights) w = static_cast<float>(rng.uniform(-limit, limit));
}

// d(bias)[c] += sum over the spatial plane of d_a[c].
void accumulate_bias_grad(std::vector<float>& b_grad, const Grid& d_a) {
    for (int c = 0; c < d_a.channels; ++c) {
        const float* p = d_a.channel_ptr(c);
        double acc = 0.0;
        for (std::int64_t i = 0; i < d_a.plane(); ++i) acc += double(p[i]);
        b_grad[std::size_t(c)] += static_cast<float>(acc);
    }
}

// Gate pre-activation: W*x + R*h_rec (+ rho o c_peep) + b, in that order.
Grid gate_preactivation(const Grid& x, const Grid& h_rec, const ConvKernel& W, const ConvKernel& R,
                        const Grid* rho, const Grid* c_peep, std::span<const float> b) {
    Grid a = conv2d(x, W);
    add_in_place(a, conv2d(h_rec, R));
    if (rho != nullptr) add_hadamard_in_place(a, *rho, *c_peep);
    add_channel_bias_in_place(a, b);
    return a;
}

// Shared backward for one gate: given d_a (gradient at the pre-activation),
// accumulate kernel/bias gradients and route input/recurrent gradients.
void gate_backward(const Grid& d_a, const CellStepCache& cache, const ConvKernel& W,
                   const ConvKernel& R, ConvKernel& dW, ConvKernel& dR, std::vector<float>& db,
                   Grid& d_x, Grid& d_h_rec) {
    conv2d_backward_params(d_a, cache.x, dW);
    conv2d_backward_params(d_a, cache.h_rec, dR);
    accumulate_bias_grad(db, d_a);
    add_in_place(d_x, conv2d_backward_input(d_a, W));
    add_in_place(d_h_rec, conv2d_backward_input(d_a, R));
}

Grid sigmoid_derivative_times(const Grid& d_gate, const Grid& gate) {
    Grid d_a = d_gate;
    for (std::size_t i = 0; i < d_a.data.size(); ++i) {
        const float s = gate.data[i];
        d_a.data[i] *= s * (1.0f - s);
    }
    return d_a;
}

}  // namespace

ConvLSTMCellParams::ConvLSTMCellParams(int eta_, int in_channels, int k_, int h, int w)
    : eta(eta_), input_channels(in_channels), k(k_), height(h), width(w),
      W_i(eta_, in_channels, k_, false), W_f(eta_, in_channels, k_, false),
      W_o(eta_, in_channels, k_, false), W_c(eta_, in_channels, k_, false),
      R_i(eta_, eta_, k_, false), R_f(eta_, eta_, k_, false), R_o(eta_, eta_, k_, false),
      R_c(eta_, eta_, k_, false), rho_i(eta_, h, w), rho_f(eta_, h, w), rho_o(eta_, h, w),
      b_i(std::size_t(eta_), 0.0f), b_f(std::size_t(eta_), 0.0f), b_o(std::size_t(eta_), 0.0f),
      b_c(std::size_t(eta_), 0.0f) {}

ConvLSTMCellParams zeros_like(const ConvLSTMCellParams& p) {
    return ConvLSTMCellParams(p.eta, p.input_channels, p.k, p.height, p.width);
}

void init_cell(ConvLSTMCellParams& p, Rng& rng) {
    glorot_fill(p.W_i, rng);
    glorot_fill(p.W_f, rng);
    glorot_fill(p.W_o, rng);
    glorot_fill(p.W_c, rng);
    glorot_fill(p.R_i, rng);
    glorot_fill(p.R_f, rng);
    glorot_fill(p.R_o, rng);
    glorot_fill(p.R_c, rng);
    // Peepholes start at zero; forget-gate bias at 1 so early training keeps memory.
    std::fill(p.b_f.begin(), p.b_f.end(), 1.0f);
}

CellState cell_step(const Grid& x_t, const CellState& prev, const ConvLSTMCellParams& p) {
    CellStepCache scratch;
    return cell_step_cached(x_t, prev, p, nullptr, scratch);
}

CellState cell_step_cached(const Grid& x_t, const CellState& prev, const ConvLSTMCellParams& p,
                           const Grid* recurrent_mask, CellStepCache& cache) {
    if (x_t.channels != p.input_channels)
        throw ShapeError("cell_step: input " + x_t.shape_str() + " vs cell expecting " +
                         std::to_string(p.input_channels) + " channels");
    if (prev.h.channels != p.eta || prev.h.height != p.height || prev.h.width != p.width)
        throw ShapeError("cell_step: state " + prev.h.shape_str() + " vs cell " +
                         std::to_string(p.eta) + "x" + std::to_string(p.height) + "x" +
                         std::to_string(p.width));
    require_same_shape(prev.h, prev.c, "cell_step state");

    cache.x = x_t;
    cache.h_rec = recurrent_mask != nullptr ? hadamard(prev.h, *recurrent_mask) : prev.h;
    cache.c_prev = prev.c;

    cache.i = sigmoid(gate_preactivation(x_t, cache.h_rec, p.W_i, p.R_i, &p.rho_i, &prev.c, p.b_i));
    cache.f = sigmoid(gate_preactivation(x_t, cache.h_rec, p.W_f, p.R_f, &p.rho_f, &prev.c, p.b_f));
    cache.g = tanh(gate_preactivation(x_t, cache.h_rec, p.W_c, p.R_c, nullptr, nullptr, p.b_c));

    cache.c = hadamard(cache.f, prev.c);
    add_hadamard_in_place(cache.c, cache.i, cache.g);

    // The output gate peeps at the NEW cell state.
    cache.o = sigmoid(gate_preactivation(x_t, cache.h_rec, p.W_o, p.R_o, &p.rho_o, &cache.c, p.b_o));
    cache.tanh_c = tanh(cache.c);
    return CellState{hadamard(cache.o, cache.tanh_c), cache.c};
}

void cell_step_backward(const CellStepCache& cache, const ConvLSTMCellParams& p, const Grid& d_h,
                        const Grid& d_c_in, ConvLSTMCellGrads& grads, Grid& d_x,
                        Grid& d_h_rec_prev, Grid& d_c_prev) {
    d_x = zeros_like(cache.x);
    d_h_rec_prev = zeros_like(cache.h_rec);

    // h = o o tanh(c)
    Grid d_o = hadamard(d_h, cache.tanh_c);
    Grid d_c = d_c_in;
    for (std::size_t i = 0; i < d_c.data.size(); ++i) {
        const float tc = cache.tanh_c.data[i];
        d_c.data[i] += d_h.data[i] * cache.o.data[i] * (1.0f - tc * tc);
    }

    // Output gate first: its peephole reads the new c.
    Grid d_a_o = sigmoid_derivative_times(d_o, cache.o);
    add_hadamard_in_place(d_c, d_a_o, p.rho_o);
    add_hadamard_in_place(grads.rho_o, d_a_o, cache.c);
    gate_backward(d_a_o, cache, p.W_o, p.R_o, grads.W_o, grads.R_o, grads.b_o, d_x, d_h_rec_prev);

    // c = f o c_prev + i o g
    Grid d_f = hadamard(d_c, cache.c_prev);
    Grid d_i = hadamard(d_c, cache.g);
    Grid d_g = hadamard(d_c, cache.i);
    d_c_prev = hadamard(d_c, cache.f);

    Grid d_a_f = sigmoid_derivative_times(d_f, cache.f);
    add_hadamard_in_place(grads.rho_f, d_a_f, cache.c_prev);
    add_hadamard_in_place(d_c_prev, d_a_f, p.rho_f);
    gate_backward(d_a_f, cache, p.W_f, p.R_f, grads.W_f, grads.R_f, grads.b_f, d_x, d_h_rec_prev);

    Grid d_a_i = sigmoid_derivative_times(d_i, cache.i);
    add_hadamard_in_place(grads.rho_i, d_a_i, cache.c_prev);
    add_hadamard_in_place(d_c_prev, d_a_i, p.rho_i);
    gate_backward(d_a_i, cache, p.W_i, p.R_i, grads.W_i, grads.R_i, grads.b_i, d_x, d_h_rec_prev);

    Grid d_a_g = d_g;
    for (std::size_t i = 0; i < d_a_g.data.size(); ++i) {
        const float g = cache.g.data[i];
        d_a_g.data[i] *= 1.0f - g * g;
    }
    gate_backward(d_a_g, cache, p.W_c, p.R_c, grads.W_c, grads.R_c, grads.b_c, d_x, d_h_rec_prev);
}

std::vector<Grid> run_sequence_outputs(std::span<const Grid> window, const ConvLSTMCellParams& p,
                                       const Grid* recurrent_dropout_mask) {
    if (window.empty()) throw InvalidArgument("run_sequence: empty window");
    CellState state = CellState::zeros(p.eta, p.height, p.width);
    std::vector<Grid> outputs;
    outputs.reserve(window.size());
    CellStepCache scratch;
    for (const Grid& x : window) {
        state = cell_step_cached(x, state, p, recurrent_dropout_mask, scratch);
        outputs.push_back(state.h);
    }
    return outputs;
}

Grid run_sequence(std::span<const Grid> window, const ConvLSTMCellParams& p,
                  const Grid* recurrent_dropout_mask) {
    return run_sequence_outputs(window, p, recurrent_dropout_mask).back();
}

Grid bernoulli_mask(int channels, int height, int width, double rate, Rng& rng) {
    Grid mask(channels, height, width);
    const float keep = static_cast<float>(1.0 / (1.0 - rate));
    for (float& v : mask.data) v = rng.bernoulli(rate) ? 0.0f : keep;
    return mask;
}

DropoutPlan sample_dropout_plan(const std::array<ConvLSTMCellParams, 3>& cells, int window_len,
                                int height, int width, double recurrent_rate,
                                double inter_layer_rate, Rng& rng) {
    DropoutPlan plan;
    if (recurrent_rate > 0.0)
        for (int l = 0; l < 3; ++l)
            plan.recurrent[std::size_t(l)] =
                bernoulli_mask(cells[std::size_t(l)].eta, height, width, recurrent_rate, rng);
    if (inter_layer_rate > 0.0)
        for (int b = 0; b < 2; ++b) {
            auto& masks = plan.inter[std::size_t(b)];
            masks.reserve(std::size_t(window_len));
            for (int t = 0; t < window_len; ++t)
                masks.push_back(
                    bernoulli_mask(cells[std::size_t(b)].eta, height, width, inter_layer_rate, rng));
        }
    return plan;
}

Grid stacked_forward(std::span<const Grid> window, const std::array<ConvLSTMCellParams, 3>& cells,
                     const DropoutPlan* plan, StackedCache* cache) {
    if (window.empty()) throw InvalidArgument("stacked_forward: empty window");
    for (int l = 0; l < 2; ++l)
        if (cells[std::size_t(l)].eta != cells[std::size_t(l) + 1].input_channels)
            throw ConfigError("stacked_forward: layer " + std::to_string(l) + " emits " +
                              std::to_string(cells[std::size_t(l)].eta) + " channels but layer " +
                              std::to_string(l + 1) + " expects " +
                              std::to_string(cells[std::size_t(l) + 1].input_channels));

    std::vector<Grid> inputs(window.begin(), window.end());
    Grid top;
    for (int l = 0; l < 3; ++l) {
        const ConvLSTMCellParams& cell = cells[std::size_t(l)];
        const Grid* rmask = nullptr;
        if (plan != nullptr && plan->recurrent[std::size_t(l)].size() > 0)
            rmask = &plan->recurrent[std::size_t(l)];

        CellState state = CellState::zeros(cell.eta, cell.height, cell.width);
        std::vector<Grid> outputs;
        outputs.reserve(inputs.size());
        if (cache != nullptr) cache->steps[std::size_t(l)].resize(inputs.size());
        CellStepCache scratch;
        for (std::size_t t = 0; t < inputs.size(); ++t) {
            CellStepCache& slot = cache != nullptr ? cache->steps[std::size_t(l)][t] : scratch;
            state = cell_step_cached(inputs[t], state, cell, rmask, slot);
            outputs.push_back(state.h);
        }
        if (l == 2) {
            top = outputs.back();
            break;
        }
        const bool masked = plan != nullptr && !plan->inter[std::size_t(l)].empty();
        std::vector<Grid> fed;
        fed.reserve(outputs.size());
        for (std::size_t t = 0; t < outputs.size(); ++t)
            fed.push_back(masked ? hadamard(outputs[t], plan->inter[std::size_t(l)][t])
                                 : outputs[t]);
        if (cache != nullptr) cache->fed_forward[std::size_t(l)] = fed;
        inputs = std::move(fed);
    }
    return top;
}

Grid stacked_forward(std::span<const Grid> window, const std::array<ConvLSTMCellParams, 3>& cells,
                     RunMode mode, double recurrent_rate, double inter_layer_rate, Rng* rng) {
    if (mode == RunMode::Infer) return stacked_forward(window, cells, nullptr, nullptr);
    if (rng == nullptr) throw InvalidArgument("stacked_forward: train mode needs an Rng");
    DropoutPlan plan =
        sample_dropout_plan(cells, static_cast<int>(window.size()), cells[0].height,
                            cells[0].width, recurrent_rate, inter_layer_rate, *rng);
    return stacked_forward(window, cells, &plan, nullptr);
}

void stacked_backward(const StackedCache& cache, const std::array<ConvLSTMCellParams, 3>& cells,
                      const DropoutPlan* plan, const Grid& d_top,
                      std::array<ConvLSTMCellGrads, 3>& grads) {
    const std::size_t window_len = cache.steps[0].size();
    // Gradient w.r.t. the current layer's per-step hidden outputs.
    std::vector<Grid> d_out(window_len);
    for (std::size_t t = 0; t + 1 < window_len; ++t)
        d_out[t] = Grid(d_top.channels, d_top.height, d_top.width);
    d_out[window_len - 1] = d_top;

    for (int l = 2; l >= 0; --l) {
        const ConvLSTMCellParams& cell = cells[std::size_t(l)];
        const Grid* rmask = nullptr;
        if (plan != nullptr && plan->recurrent[std::size_t(l)].size() > 0)
            rmask = &plan->recurrent[std::size_t(l)];

        Grid d_h_rec_carry(cell.eta, cell.height, cell.width);
        Grid d_c_carry(cell.eta, cell.height, cell.width);
        std::vector<Grid> d_inputs(window_len);
        for (std::size_t ti = window_len; ti-- > 0;) {
            Grid d_h_total = d_out[ti];
            if (ti + 1 < window_len) {
                // Recurrent path from step ti+1 saw h_ti through the mask.
                if (rmask != nullptr)
                    add_hadamard_in_place(d_h_total, d_h_rec_carry, *rmask);
                else
                    add_in_place(d_h_total, d_h_rec_carry);
            }
            Grid d_x, d_h_rec_prev, d_c_prev;
            cell_step_backward(cache.steps[std::size_t(l)][ti], cell, d_h_total, d_c_carry,
                               grads[std::size_t(l)], d_x, d_h_rec_prev, d_c_prev);
            d_inputs[ti] = std::move(d_x);
            d_h_rec_carry = std::move(d_h_rec_prev);
            d_c_carry = std::move(d_c_prev);
        }
        if (l == 0) break;
        const bool masked = plan != nullptr && !plan->inter[std::size_t(l) - 1].empty();
        for (std::size_t t = 0; t < window_len; ++t)
            d_out[t] = masked ? hadamard(d_inputs[t], plan->inter[std::size_t(l) - 1][t])
                              : std::move(d_inputs[t]);
    }
}

}  // namespace finerain
