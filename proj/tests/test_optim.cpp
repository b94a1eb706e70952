// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "finerain/finite_diff.hpp"
#include "finerain/optim.hpp"
#include "finerain/pipeline.hpp"

#include "support.hpp"

using namespace finerain;
using namespace test_support;

namespace {

ModelConfig micro_config(int h = 4, int w = 4) {
    ModelConfig cfg;
    cfg.input_channels = 2;
    cfg.height = h;
    cfg.width = w;
    cfg.window = 2;
    cfg.eta = {2, 2, 2};
    cfg.kernels = {3, 3, 3};
    cfg.sr_channels = {2, 3, 2, 2};
    cfg.sr_kernels = {3, 3, 3, 3};
    cfg.head_channels = {3, 2};
    return cfg;
}

std::vector<SequenceWindow> micro_dataset(const ModelConfig& cfg, int count, Rng& rng) {
    std::vector<SequenceWindow> windows;
    Date d{2000, 1, 5};
    for (int i = 0; i < count; ++i) {
        SequenceWindow w;
        for (int t = 0; t < cfg.window; ++t)
            w.inputs.push_back(random_grid(cfg.input_channels, cfg.height, cfg.width, rng));
        w.target = random_grid(1, cfg.height, cfg.width, rng, 0.0, 2.0);
        w.date = d;
        d = next_day(d);
        windows.push_back(std::move(w));
    }
    return windows;
}

}  // namespace

TEST_CASE("rmse_loss basics") {
    Rng rng(1);
    const Grid a = random_grid(2, 3, 3, rng);
    CHECK(rmse_loss(a, a) == 0.0);

    Grid shifted = a;
    for (float& v : shifted.data) v += 1.25f;
    CHECK(std::abs(rmse_loss(shifted, a) - 1.25) < 1e-6);

    Grid p(1, 1, 2), t(1, 1, 2);
    p.data = {0.0f, 3.0f};
    t.data = {4.0f, 0.0f};
    CHECK(std::abs(rmse_loss(p, t) - 3.5355339) < 1e-6);

    CHECK_THROWS_AS(rmse_loss(a, Grid(2, 3, 4)), ShapeError);
}

TEST_CASE("rmse_loss_grad matches finite differences") {
    Rng rng(2);
    const Grid pred = random_grid(1, 3, 3, rng);
    const Grid target = random_grid(1, 3, 3, rng);
    const double loss = rmse_loss(pred, target);
    const Grid grad = rmse_loss_grad(pred, target, loss);
    const auto f = [&](std::span<const float> v) {
        Grid probe = pred;
        std::copy(v.begin(), v.end(), probe.data.begin());
        return rmse_loss(probe, target);
    };
    const auto fd = finite_diff_grad(f, pred.data, 1e-3);
    CHECK(max_rel_err(widen(grad.data), fd) < 1e-3);
}

TEST_CASE("adam_step: zero gradient leaves parameters, advances the step") {
    std::vector<float> params = {1.0f, -2.0f};
    const std::vector<float> grads = {0.0f, 0.0f};
    AdamState state = AdamState::for_size(2, 1e-3);
    adam_step(params, grads, state);
    CHECK(params == std::vector<float>{1.0f, -2.0f});
    CHECK(state.step_count == 1);
}

TEST_CASE("adam_step: first-step update equals the hand-computed value") {
    std::vector<float> params = {0.0f};
    const std::vector<float> grads = {1.0f};
    AdamState state = AdamState::for_size(1, 1e-3);
    adam_step(params, grads, state);
    // bias-corrected m_hat = v_hat = 1 => dp = -lr / (1 + eps)
    CHECK(std::abs(double(params[0]) - (-0.000999999)) < 1e-6);
}

TEST_CASE("adam_step converges on a scalar quadratic") {
    std::vector<float> p = {0.0f};
    AdamState state = AdamState::for_size(1, 0.1);
    for (int i = 0; i < 200; ++i) {
        const std::vector<float> g = {2.0f * (p[0] - 2.0f)};
        adam_step(p, g, state);
    }
    CHECK(std::abs(double(p[0]) - 2.0) < 0.05);
}

TEST_CASE("adam_step rejects non-finite gradients naming the block") {
    std::vector<float> params = {0.0f};
    const std::vector<float> grads = {std::numeric_limits<float>::quiet_NaN()};
    AdamState state = AdamState::for_size(1, 1e-3);
    CHECK_THROWS_WITH_AS(adam_step(params, grads, state), doctest::Contains("params"),
                         DivergenceError);
}

TEST_CASE("lr schedule: plateau rule") {
    TrainConfig cfg;
    cfg.initial_lr = 3e-4;
    cfg.lr_decay_alpha = 0.2;
    cfg.decay_patience = 5;

    SUBCASE("monotonically improving history keeps lr") {
        std::vector<double> history;
        for (int i = 0; i < 30; ++i) history.push_back(1.0 - 0.01 * i);
        AdamState s = lr_schedule_update(AdamState{}, history, cfg);
        CHECK(s.lr == 3e-4);
    }
    SUBCASE("flat history of patience+1 decays once") {
        const std::vector<double> history(std::size_t(cfg.decay_patience + 1), 0.5);
        AdamState s = lr_schedule_update(AdamState{}, history, cfg);
        CHECK(std::abs(s.lr - 6e-5) < 1e-12);
    }
    SUBCASE("two consecutive plateaus decay twice") {
        const std::vector<double> history(std::size_t(2 * cfg.decay_patience + 1), 0.5);
        AdamState s = lr_schedule_update(AdamState{}, history, cfg);
        CHECK(std::abs(s.lr - 1.2e-5) < 1e-12);
    }
    SUBCASE("lr never drops below the floor") {
        const std::vector<double> history(1000, 0.5);
        AdamState s = lr_schedule_update(AdamState{}, history, cfg);
        CHECK(s.lr >= 1e-8);
    }
    SUBCASE("improvement below min_delta counts as a stall") {
        std::vector<double> history;
        for (int i = 0; i <= cfg.decay_patience; ++i) history.push_back(0.5 - 1e-6 * i);
        AdamState s = lr_schedule_update(AdamState{}, history, cfg);
        CHECK(std::abs(s.lr - 6e-5) < 1e-12);
    }
    SUBCASE("empty history is rejected") {
        CHECK_THROWS_AS(lr_schedule_update(AdamState{}, std::vector<double>{}, cfg),
                        InvalidArgument);
    }
}

TEST_CASE("apply_weight_decay: flat form") {
    std::vector<float> grads = {0.1f};
    const std::vector<float> params = {2.0f};
    apply_weight_decay(grads, params, 0.02);
    CHECK(std::abs(double(grads[0]) - 0.14) < 1e-7);

    std::vector<float> g2 = {0.5f, -0.5f};
    const std::vector<float> p2 = {1.0f, 1.0f};
    apply_weight_decay(g2, p2, 0.0);
    CHECK(g2 == std::vector<float>{0.5f, -0.5f});
}

TEST_CASE("apply_weight_decay touches encoder kernels/peepholes only") {
    const ModelConfig cfg = micro_config();
    const ModelParams params = init_model(cfg, 4);
    ModelGrads grads = zeros_like(params);
    apply_weight_decay(grads, params, 0.02);

    std::vector<std::pair<BlockKind, bool>> changed;
    for_each_block(grads, [&](const BlockRef& b) {
        bool any = false;
        for (float v : b.values) any |= (v != 0.0f);
        changed.emplace_back(b.kind, any);
    });
    std::size_t i = 0;
    for_each_block(const_cast<ModelParams&>(params), [&](const BlockRef& b) {
        bool param_nonzero = false;
        for (float v : b.values) param_nonzero |= (v != 0.0f);
        if (decays(changed[i].first))
            CHECK(changed[i].second == param_nonzero);
        else
            CHECK(changed[i].second == false);
        ++i;
    });
}

TEST_CASE("fit: epochs 0 returns unchanged params and an empty log") {
    const ModelConfig cfg = micro_config();
    ModelParams params = init_model(cfg, 5);
    const std::vector<float> before = flatten_params(params);
    AdamState adam = AdamState::for_size(param_count(params), 3e-4);
    PlateauState sched;
    TrainConfig tc;
    tc.epochs = 0;
    Rng rng(6);
    const auto data = micro_dataset(cfg, 2, rng);
    const FitResult r = fit(data, {}, cfg, params, adam, sched, tc);
    CHECK(r.log.empty());
    CHECK(flatten_params(params) == before);
}

TEST_CASE("fit: memorizes a single sample (overfit smoke test)") {
    const ModelConfig cfg = micro_config();
    ModelParams params = init_model(cfg, 7);
    AdamState adam = AdamState::for_size(param_count(params), 3e-3);
    PlateauState sched;
    TrainConfig tc;
    tc.initial_lr = 3e-3;
    tc.weight_decay = 0.0;
    tc.recurrent_dropout = 0.0;
    tc.inter_layer_dropout = 0.0;
    tc.epochs = 200;
    tc.batch_size = 1;
    tc.seed = 7;
    Rng rng(8);
    const auto data = micro_dataset(cfg, 1, rng);
    const FitResult r = fit(data, {}, cfg, params, adam, sched, tc);
    REQUIRE(r.log.size() == 200);
    CHECK(r.log.back().train_loss < 0.1 * r.log.front().train_loss);
}

TEST_CASE("fit: identical seeds give bitwise-identical loss logs") {
    const ModelConfig cfg = micro_config();
    Rng rng(9);
    const auto data = micro_dataset(cfg, 6, rng);
    const auto run = [&](int threads) {
        ModelParams params = init_model(cfg, 11);
        AdamState adam = AdamState::for_size(param_count(params), 1e-3);
        PlateauState sched;
        TrainConfig tc;
        tc.initial_lr = 1e-3;
        tc.epochs = 5;
        tc.batch_size = 3;
        tc.seed = 21;
        FitOptions opts;
        opts.threads = threads;
        return fit(data, {}, cfg, params, adam, sched, tc, opts);
    };
    const FitResult a = run(1);
    const FitResult b = run(1);
    const FitResult c = run(2);  // thread count must not matter
    REQUIRE(a.log.size() == b.log.size());
    REQUIRE(a.log.size() == c.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        CHECK(a.log[i].train_loss == b.log[i].train_loss);
        CHECK(a.log[i].train_loss == c.log[i].train_loss);
    }
}

TEST_CASE("fit: lr is non-increasing and validation drives the plateau") {
    const ModelConfig cfg = micro_config();
    ModelParams params = init_model(cfg, 13);
    AdamState adam = AdamState::for_size(param_count(params), 1e-3);
    PlateauState sched;
    TrainConfig tc;
    tc.initial_lr = 1e-3;
    tc.epochs = 12;
    tc.batch_size = 4;
    tc.seed = 3;
    tc.decay_patience = 3;
    Rng rng(14);
    const auto data = micro_dataset(cfg, 4, rng);
    const auto val = micro_dataset(cfg, 2, rng);
    const FitResult r = fit(data, val, cfg, params, adam, sched, tc);
    REQUIRE(!r.log.empty());
    for (std::size_t i = 1; i < r.log.size(); ++i) CHECK(r.log[i].lr <= r.log[i - 1].lr);
    for (const EpochStats& row : r.log) CHECK(row.val_loss.has_value());
}

TEST_CASE("fit: single-sample loss is near-monotone with dropout off") {
    const ModelConfig cfg = micro_config();
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        ModelParams params = init_model(cfg, seed);
        AdamState adam = AdamState::for_size(param_count(params), 3e-4);
        PlateauState sched;
        TrainConfig tc;
        tc.initial_lr = 3e-4;
        tc.weight_decay = 0.0;
        tc.recurrent_dropout = 0.0;
        tc.inter_layer_dropout = 0.0;
        tc.epochs = 150;
        tc.batch_size = 1;
        tc.seed = seed;
        Rng rng(seed + 40);
        const auto data = micro_dataset(cfg, 1, rng);
        const FitResult r = fit(data, {}, cfg, params, adam, sched, tc);
        int increases = 0;
        for (std::size_t i = 1; i < r.log.size(); ++i)
            if (r.log[i].train_loss > r.log[i - 1].train_loss) ++increases;
        CHECK(double(increases) <= 0.05 * double(r.log.size()));
    }
}

TEST_CASE("fit: batch gradient equals the mean of per-sample gradients") {
    const ModelConfig cfg = micro_config();
    const ModelParams params = init_model(cfg, 17);
    Rng rng(18);
    const auto data = micro_dataset(cfg, 3, rng);

    ModelGrads sum = zeros_like(params);
    for (const SequenceWindow& w : data) {
        ModelGrads g = zeros_like(params);
        network_loss_grad(w.inputs, w.target, params, nullptr, g);
        accumulate_scaled(sum, g, 1.0f);
    }
    scale_params(sum, 1.0f / 3.0f);

    // Recompute in the reversed order; fixed-index reduction in fit is the
    // contract, so here we just confirm order independence at tolerance.
    ModelGrads sum_rev = zeros_like(params);
    for (auto it = data.rbegin(); it != data.rend(); ++it) {
        ModelGrads g = zeros_like(params);
        network_loss_grad(it->inputs, it->target, params, nullptr, g);
        accumulate_scaled(sum_rev, g, 1.0f);
    }
    scale_params(sum_rev, 1.0f / 3.0f);

    const std::vector<float> a = flatten_params(sum);
    const std::vector<float> b = flatten_params(sum_rev);
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(std::abs(double(a[i]) - double(b[i])) < 1e-6);
}

TEST_CASE("fit: rejects an empty training set") {
    const ModelConfig cfg = micro_config();
    ModelParams params = init_model(cfg, 19);
    AdamState adam = AdamState::for_size(param_count(params), 1e-3);
    PlateauState sched;
    CHECK_THROWS_AS(fit({}, {}, cfg, params, adam, sched, TrainConfig{}), InvalidArgument);
}

TEST_CASE("fit: divergence rolls back to the last completed epoch") {
    const ModelConfig cfg = micro_config();
    TrainConfig tc;
    tc.initial_lr = 1e9;  // guaranteed blow-up within a few steps
    tc.epochs = 5;
    tc.batch_size = 2;
    tc.seed = 2;
    tc.recurrent_dropout = 0.0;
    tc.inter_layer_dropout = 0.0;
    Rng rng(24);
    const auto data = micro_dataset(cfg, 2, rng);

    ModelParams params = init_model(cfg, 23);
    AdamState adam = AdamState::for_size(param_count(params), tc.initial_lr);
    PlateauState sched;
    int completed = 0;
    FitOptions opts;
    opts.on_epoch = [&](const EpochStats& row) { completed = row.epoch; };
    CHECK_THROWS_AS(fit(data, {}, cfg, params, adam, sched, tc, opts), DivergenceError);
    CHECK(completed < tc.epochs);

    // The surviving state must equal a fresh identical run stopped at the
    // last epoch that completed (the "last-good checkpoint" contract).
    ModelParams replay = init_model(cfg, 23);
    AdamState replay_adam = AdamState::for_size(param_count(replay), tc.initial_lr);
    PlateauState replay_sched;
    TrainConfig short_tc = tc;
    short_tc.epochs = completed;
    if (completed > 0) fit(data, {}, cfg, replay, replay_adam, replay_sched, short_tc);
    CHECK(flatten_params(params) == flatten_params(replay));
    CHECK(adam.step_count == replay_adam.step_count);
    CHECK(adam.m == replay_adam.m);
    CHECK(adam.v == replay_adam.v);
}
