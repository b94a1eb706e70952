// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "finerain/conv.hpp"
#include "finerain/grid.hpp"
#include "finerain/rng.hpp"

namespace finerain {

// Peephole ConvLSTM cell. Input kernels W_* consume the layer input,
// recurrent kernels R_* consume the previous hidden state, peepholes rho_*
// read the cell state elementwise, and gate biases are per-channel.
//
// Gate math per step (o reads the freshly updated c):
//   i = sigmoid(W_i*x + R_i*h_prev + rho_i o c_prev + b_i)
//   f = sigmoid(W_f*x + R_f*h_prev + rho_f o c_prev + b_f)
//   c = f o c_prev + i o tanh(W_c*x + R_c*h_prev + b_c)
//   o = sigmoid(W_o*x + R_o*h_prev + rho_o o c + b_o)
//   h = o o tanh(c)
struct ConvLSTMCellParams {
    int eta = 0;             // filter count (state channels)
    int input_channels = 0;
    int k = 0;               // kernel size, odd
    int height = 0;          // working grid shape (peepholes are full grids)
    int width = 0;

    ConvKernel W_i, W_f, W_o, W_c;  // eta x input_channels x k x k, no bias
    ConvKernel R_i, R_f, R_o, R_c;  // eta x eta x k x k, no bias
    Grid rho_i, rho_f, rho_o;       // eta x height x width
    std::vector<float> b_i, b_f, b_o, b_c;  // per-channel gate biases

    ConvLSTMCellParams() = default;
    ConvLSTMCellParams(int eta_, int in_channels, int k_, int h, int w);
};

// Gradients use the same layout as the parameters.
using ConvLSTMCellGrads = ConvLSTMCellParams;

ConvLSTMCellParams zeros_like(const ConvLSTMCellParams& p);

// Glorot-uniform kernels, zero peepholes, zero biases except forget bias 1.
void init_cell(ConvLSTMCellParams& p, Rng& rng);

struct CellState {
    Grid h;  // hidden state, elementwise in (-1, 1)
    Grid c;  // cell state

    static CellState zeros(int eta, int height, int width) {
        return CellState{Grid(eta, height, width), Grid(eta, height, width)};
    }
};

// One gate pass. `prev` must match the cell's eta x height x width.
CellState cell_step(const Grid& x_t, const CellState& prev, const ConvLSTMCellParams& p);

// Everything the backward pass needs from one forward step.
struct CellStepCache {
    Grid x;       // layer input at this step
    Grid h_rec;   // h_prev after the recurrent-dropout mask (h_prev itself if none)
    Grid c_prev;
    Grid i, f, o, g;  // gate activations; g = tanh(candidate)
    Grid c, tanh_c;
};

// Forward step that also fills `cache`. If `recurrent_mask` is non-null it is
// applied to h_prev before the recurrent convolutions (variational dropout:
// same mask every step of a sequence).
CellState cell_step_cached(const Grid& x_t, const CellState& prev, const ConvLSTMCellParams& p,
                           const Grid* recurrent_mask, CellStepCache& cache);

// Reverse-mode step. d_h/d_c_in are the losses' gradients w.r.t. this step's
// h and (from later steps) c. Parameter gradients accumulate into `grads`;
// d_x, d_h_rec_prev and d_c_prev come back for the caller to route. Note
// d_h_rec_prev is w.r.t. the MASKED previous hidden state.
void cell_step_backward(const CellStepCache& cache, const ConvLSTMCellParams& p, const Grid& d_h,
                        const Grid& d_c_in, ConvLSTMCellGrads& grads, Grid& d_x,
                        Grid& d_h_rec_prev, Grid& d_c_prev);

// Runs the cell over a chronological window from a zero state and returns the
// final hidden state h_T.
Grid run_sequence(std::span<const Grid> window, const ConvLSTMCellParams& p,
                  const Grid* recurrent_dropout_mask = nullptr);

// Same, but returns every per-step hidden state (needed to stack layers).
std::vector<Grid> run_sequence_outputs(std::span<const Grid> window, const ConvLSTMCellParams& p,
                                       const Grid* recurrent_dropout_mask = nullptr);

enum class RunMode { Train, Infer };

// Sampled dropout masks for one sequence pass, inverted-scaled by 1/(1-rate).
// recurrent: one mask per layer, applied to h_prev inside that layer.
// inter: masks applied to the per-step outputs of layers 1 and 2 before the
// next layer consumes them; one fresh mask per time step.
struct DropoutPlan {
    std::array<Grid, 3> recurrent;              // empty grid = no mask
    std::array<std::vector<Grid>, 2> inter;     // [boundary][t], empty vector = no mask
};

Grid bernoulli_mask(int channels, int height, int width, double rate, Rng& rng);

DropoutPlan sample_dropout_plan(const std::array<ConvLSTMCellParams, 3>& cells, int window_len,
                                int height, int width, double recurrent_rate,
                                double inter_layer_rate, Rng& rng);

// Full encoder cache: per layer, the per-step caches plus that layer's
// per-step outputs after inter-layer dropout (what the next layer consumed).
struct StackedCache {
    std::array<std::vector<CellStepCache>, 3> steps;
    std::array<std::vector<Grid>, 2> fed_forward;  // layer l output sequence post-mask
};

// Three stacked sequence-to-sequence layers; returns the top layer's final
// hidden state. `plan` null means inference (no dropout).
Grid stacked_forward(std::span<const Grid> window, const std::array<ConvLSTMCellParams, 3>& cells,
                     const DropoutPlan* plan = nullptr, StackedCache* cache = nullptr);

// Convenience overload matching the train|infer calling convention.
Grid stacked_forward(std::span<const Grid> window, const std::array<ConvLSTMCellParams, 3>& cells,
                     RunMode mode, double recurrent_rate, double inter_layer_rate, Rng* rng);

// Backprop through the stack given d(loss)/d(top-layer h_T).
void stacked_backward(const StackedCache& cache, const std::array<ConvLSTMCellParams, 3>& cells,
                      const DropoutPlan* plan, const Grid& d_top,
                      std::array<ConvLSTMCellGrads, 3>& grads);

}  // namespace finerain
