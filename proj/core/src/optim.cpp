// SPDX-License-Identifier: Apache-2.0
#include "finerain/optim.hpp"

#include <cmath>
#include <numeric>

#include "finerain/pipeline.hpp"
#include "finerain/threading.hpp"

namespace finerain {

double rmse_loss(const Grid& pred, const Grid& target) {
    require_same_shape(pred, target, "rmse_loss");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const double e = double(pred.data[i]) - double(target.data[i]);
        acc += e * e;
    }
    return std::sqrt(acc / double(pred.data.size()));
}

Grid rmse_loss_grad(const Grid& pred, const Grid& target, double loss) {
    require_same_shape(pred, target, "rmse_loss_grad");
    Grid d = zeros_like(pred);
    if (loss <= 1e-12) return d;  // flat minimum; the subgradient 0 is safe
    const double scale = 1.0 / (double(pred.data.size()) * loss);
    for (std::size_t i = 0; i < d.data.size(); ++i)
        d.data[i] = static_cast<float>((double(pred.data[i]) - double(target.data[i])) * scale);
    return d;
}

void adam_update_block(std::span<float> params, std::span<const float> grads, AdamState& state,
                       std::size_t offset, const std::string& block_name) {
    if (params.size() != grads.size())
        throw ShapeError("adam_update_block: params/grads length mismatch in " + block_name);
    if (offset + params.size() > state.m.size())
        throw ShapeError("adam_update_block: state too small for block " + block_name);
    if (state.step_count < 1)
        throw InvalidArgument("adam_update_block: call adam_advance_step first");
    const double t = double(state.step_count);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        if (!std::isfinite(g))
            throw DivergenceError("non-finite gradient in parameter block " + block_name);
        const double m = state.beta1 * double(state.m[offset + i]) + (1.0 - state.beta1) * g;
        const double v = state.beta2 * double(state.v[offset + i]) + (1.0 - state.beta2) * g * g;
        state.m[offset + i] = static_cast<float>(m);
        state.v[offset + i] = static_cast<float>(v);
        const double m_hat = m / bc1;
        const double v_hat = v / bc2;
        params[i] = static_cast<float>(double(params[i]) -
                                       state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon));
    }
}

void adam_step(std::span<float> params, std::span<const float> grads, AdamState& state) {
    if (state.m.size() != params.size())
        throw ShapeError("adam_step: state sized for " + std::to_string(state.m.size()) +
                         " parameters, got " + std::to_string(params.size()));
    adam_advance_step(state);
    adam_update_block(params, grads, state, 0, "params");
}

void adam_step_model(ModelParams& params, const ModelParams& grads, AdamState& state) {
    adam_advance_step(state);
    std::vector<std::pair<std::string, std::span<float>>> param_blocks;
    for_each_block(params, [&](const BlockRef& b) { param_blocks.emplace_back(b.name, b.values); });
    std::size_t i = 0, offset = 0;
    for_each_block(const_cast<ModelParams&>(grads), [&](const BlockRef& b) {
        adam_update_block(param_blocks[i].second, b.values, state, offset, param_blocks[i].first);
        offset += b.values.size();
        ++i;
    });
}

void TrainConfig::validate() const {
    if (initial_lr <= 0.0) throw ConfigError("TrainConfig: initial_lr must be positive");
    if (lr_decay_alpha <= 0.0 || lr_decay_alpha > 1.0)
        throw ConfigError("TrainConfig: lr_decay_alpha must be in (0, 1]");
    if (decay_patience < 1) throw ConfigError("TrainConfig: decay_patience must be >= 1");
    if (weight_decay < 0.0) throw ConfigError("TrainConfig: weight_decay must be >= 0");
    for (double r : {recurrent_dropout, inter_layer_dropout})
        if (r < 0.0 || r >= 1.0) throw ConfigError("TrainConfig: dropout rates must be in [0, 1)");
    if (epochs < 0) throw ConfigError("TrainConfig: epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
}

bool plateau_step(PlateauState& tracker, double val_loss, AdamState& state,
                  const TrainConfig& cfg) {
    if (!tracker.has_best || val_loss < tracker.best - cfg.plateau_min_delta) {
        tracker.best = val_loss;
        tracker.has_best = true;
        tracker.stalled = 0;
        return false;
    }
    if (++tracker.stalled < cfg.decay_patience) return false;
    tracker.stalled = 0;
    state.lr = std::max(state.lr * cfg.lr_decay_alpha, cfg.min_lr);
    return true;
}

AdamState lr_schedule_update(AdamState state, std::span<const double> history,
                             const TrainConfig& cfg) {
    if (history.empty()) throw InvalidArgument("lr_schedule_update: empty history");
    state.lr = cfg.initial_lr;
    PlateauState tracker;
    for (double loss : history) plateau_step(tracker, loss, state, cfg);
    return state;
}

void apply_weight_decay(std::span<float> grads, std::span<const float> params, double decay) {
    if (grads.size() != params.size())
        throw ShapeError("apply_weight_decay: length mismatch");
    if (decay < 0.0) throw InvalidArgument("apply_weight_decay: decay must be >= 0");
    for (std::size_t i = 0; i < grads.size(); ++i)
        grads[i] = static_cast<float>(double(grads[i]) + decay * double(params[i]));
}

void apply_weight_decay(ModelGrads& grads, const ModelParams& params, double decay) {
    if (decay == 0.0) return;
    std::vector<std::span<float>> grad_blocks;
    std::vector<BlockKind> kinds;
    for_each_block(grads, [&](const BlockRef& b) {
        grad_blocks.push_back(b.values);
        kinds.push_back(b.kind);
    });
    std::size_t i = 0;
    for_each_block(const_cast<ModelParams&>(params), [&](const BlockRef& b) {
        if (decays(kinds[i])) apply_weight_decay(grad_blocks[i], b.values, decay);
        ++i;
    });
}

FitResult fit(std::span<const SequenceWindow> train, std::span<const SequenceWindow> validation,
              const ModelConfig& mc, ModelParams& params, AdamState& adam, PlateauState& sched,
              const TrainConfig& cfg, const FitOptions& opts) {
    cfg.validate();
    if (train.empty()) throw InvalidArgument("fit: empty training set");
    if (adam.m.size() != param_count(params))
        throw ConfigError("fit: Adam state sized for " + std::to_string(adam.m.size()) +
                          " parameters, model has " + std::to_string(param_count(params)));

    FitResult result;
    result.epochs_completed = opts.start_epoch;
    if (cfg.epochs <= opts.start_epoch) return result;

    const bool dropout_on = cfg.recurrent_dropout > 0.0 || cfg.inter_layer_dropout > 0.0;
    const int threads = opts.threads < 1 ? 1 : opts.threads;

    ModelParams last_good = params;
    AdamState last_good_adam = adam;
    PlateauState last_good_sched = sched;

    std::vector<std::size_t> order(train.size());
    for (int epoch = opts.start_epoch + 1; epoch <= cfg.epochs; ++epoch) {
        const double lr_used = adam.lr;
        try {
            std::iota(order.begin(), order.end(), std::size_t{0});
            Rng shuffle_rng(mix_seed(cfg.seed, std::uint64_t(epoch), 0x7368756666ULL));
            shuffle(order, shuffle_rng);

            double loss_sum = 0.0;
            for (std::size_t start = 0; start < order.size(); start += std::size_t(cfg.batch_size)) {
                const std::size_t n = std::min<std::size_t>(std::size_t(cfg.batch_size),
                                                            order.size() - start);
                std::vector<ModelGrads> sample_grads(n);
                std::vector<double> sample_losses(n);
                parallel_for(n, threads, [&](std::size_t bi) {
                    const std::size_t idx = order[start + bi];
                    const SequenceWindow& w = train[idx];
                    DropoutPlan plan;
                    const DropoutPlan* plan_ptr = nullptr;
                    if (dropout_on) {
                        // Keyed by (seed, epoch, original index): identical
                        // draws regardless of shuffling, threads, or resume.
                        Rng drng(mix_seed(cfg.seed ^ 0x64726f70ULL, std::uint64_t(epoch), idx));
                        plan = sample_dropout_plan(params.cells, int(w.inputs.size()), mc.height,
                                                   mc.width, cfg.recurrent_dropout,
                                                   cfg.inter_layer_dropout, drng);
                        plan_ptr = &plan;
                    }
                    sample_grads[bi] = zeros_like(params);
                    sample_losses[bi] =
                        network_loss_grad(w.inputs, w.target, params, plan_ptr, sample_grads[bi]);
                });
                ModelGrads total = zeros_like(params);
                for (std::size_t bi = 0; bi < n; ++bi)
                    accumulate_scaled(total, sample_grads[bi], 1.0f);
                scale_params(total, 1.0f / float(n));
                double batch_loss = 0.0;
                for (double l : sample_losses) batch_loss += l;
                if (!std::isfinite(batch_loss))
                    throw DivergenceError("non-finite training loss in epoch " +
                                          std::to_string(epoch));
                loss_sum += batch_loss;
                apply_weight_decay(total, params, cfg.weight_decay);
                adam_step_model(params, total, adam);
            }

            EpochStats row;
            row.epoch = epoch;
            row.train_loss = loss_sum / double(train.size());
            row.lr = lr_used;
            if (!validation.empty()) {
                std::vector<double> val_losses(validation.size());
                parallel_for(validation.size(), threads, [&](std::size_t vi) {
                    const SequenceWindow& w = validation[vi];
                    val_losses[vi] = rmse_loss(network_forward(w.inputs, params), w.target);
                });
                double vsum = 0.0;
                for (double l : val_losses) vsum += l;
                row.val_loss = vsum / double(validation.size());
                plateau_step(sched, *row.val_loss, adam, cfg);
            }
            result.log.push_back(row);
            result.epochs_completed = epoch;
            if (opts.on_epoch) opts.on_epoch(row);

            last_good = params;
            last_good_adam = adam;
            last_good_sched = sched;
        } catch (const DivergenceError&) {
            params = last_good;
            adam = last_good_adam;
            sched = last_good_sched;
            throw;
        }
    }
    return result;
}

}  // namespace finerain
