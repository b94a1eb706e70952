// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "finerain/grid.hpp"
#include "finerain/model.hpp"

namespace finerain {

// sqrt(mean((pred - target)^2)), reduced in double.
double rmse_loss(const Grid& pred, const Grid& target);

// d(rmse)/d(pred) = (pred - target) / (N * rmse); zero when rmse vanishes.
Grid rmse_loss_grad(const Grid& pred, const Grid& target, double loss);

struct AdamState {
    std::vector<float> m, v;   // first/second moment estimates
    std::int64_t step_count = 0;
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState for_size(std::size_t n, double lr_) {
        AdamState s;
        s.m.assign(n, 0.0f);
        s.v.assign(n, 0.0f);
        s.lr = lr_;
        return s;
    }
};

// Bias-corrected Adam update over a contiguous block at `offset` within the
// state vectors. Throws DivergenceError naming `block` on non-finite grads.
// step_count is NOT advanced here so one optimization step can span blocks;
// call adam_advance_step once per optimizer step before updating blocks.
void adam_update_block(std::span<float> params, std::span<const float> grads, AdamState& state,
                       std::size_t offset, const std::string& block_name);

inline void adam_advance_step(AdamState& state) { ++state.step_count; }

// Whole-vector convenience: one step over a standalone parameter vector.
void adam_step(std::span<float> params, std::span<const float> grads, AdamState& state);

// One Adam step over every model block, honoring the block layout.
void adam_step_model(ModelParams& params, const ModelParams& grads, AdamState& state);

struct TrainConfig {
    double initial_lr = 3e-4;
    double lr_decay_alpha = 0.2;
    int decay_patience = 50;          // plateau length (epochs) that triggers decay
    double plateau_min_delta = 1e-4;  // improvement smaller than this counts as stall
    double min_lr = 1e-8;
    double weight_decay = 0.02;       // L2, encoder kernels and peepholes only
    double recurrent_dropout = 0.2;
    double inter_layer_dropout = 0.1;
    int epochs = 1500;
    int batch_size = 15;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

// Plateau tracker driving the step decay lr <- lr * alpha.
struct PlateauState {
    double best = 0.0;
    bool has_best = false;
    int stalled = 0;

    bool operator==(const PlateauState&) const = default;
};

// Feed one epoch's validation loss; decays state.lr when the loss has not
// improved by more than plateau_min_delta for decay_patience consecutive
// epochs. Returns true when a decay fired.
bool plateau_step(PlateauState& tracker, double val_loss, AdamState& state,
                  const TrainConfig& cfg);

// Replays a whole loss history through the plateau rule and returns the
// resulting state (pure form of the schedule, for inspection/tests).
AdamState lr_schedule_update(AdamState state, std::span<const double> history,
                             const TrainConfig& cfg);

// g += decay * p over a flat block (the L2-as-gradient-augmentation form).
void apply_weight_decay(std::span<float> grads, std::span<const float> params, double decay);

// Masked model form: only encoder kernels/peepholes decay, never biases.
void apply_weight_decay(ModelGrads& grads, const ModelParams& params, double decay);

struct EpochStats {
    int epoch = 0;                     // 1-based
    double train_loss = 0.0;
    std::optional<double> val_loss;
    double lr = 0.0;                   // rate used for this epoch's updates
};

struct FitOptions {
    int threads = 1;
    int start_epoch = 0;  // resume point; epochs [start_epoch+1, cfg.epochs] run
    std::function<void(const EpochStats&)> on_epoch;
};

struct FitResult {
    std::vector<EpochStats> log;
    int epochs_completed = 0;
};

struct SequenceWindow;  // pipeline.hpp

// Mini-batch training loop: shuffle (seeded per epoch), forward in train
// mode, RMSE loss, analytic backward, weight decay, Adam. Per-sample
// gradients are summed in sample order, so results do not depend on
// opts.threads. Losses in the log are per-sample RMSE means.
//
// On a non-finite training loss the model is rolled back to the last
// completed epoch and DivergenceError is thrown; `params`, `adam` and
// `sched` are left at that last-good state.
FitResult fit(std::span<const SequenceWindow> train, std::span<const SequenceWindow> validation,
              const ModelConfig& mc, ModelParams& params, AdamState& adam, PlateauState& sched,
              const TrainConfig& cfg, const FitOptions& opts = {});

}  // namespace finerain
