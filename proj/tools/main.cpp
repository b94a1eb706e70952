// SPDX-License-Identifier: Apache-2.0
//
// finerain: statistical downscaling of daily precipitation grids with a
// stacked ConvLSTM + super-resolution network, a quantile-mapping baseline,
// and an extremes-aware evaluation suite.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "finerain/checkpoint.hpp"
#include "finerain/eval.hpp"
#include "finerain/grd_io.hpp"
#include "finerain/optim.hpp"
#include "finerain/qmap.hpp"
#include "finerain/textio.hpp"
#include "finerain/threading.hpp"

#include "config_file.hpp"

namespace {

using namespace finerain;

std::vector<ClimateSample> filter_period(const std::vector<ClimateSample>& samples,
                                         const std::string& period) {
    if (period == "all") return samples;
    const bool want_monsoon = period == "monsoon";
    std::vector<ClimateSample> out;
    for (const ClimateSample& s : samples)
        if (is_monsoon_month(s.date.month) == want_monsoon) out.push_back(s);
    if (out.empty())
        throw InvalidArgument("empty partition: dataset has no " + period + " days");
    return out;
}

Dataset prediction_dataset(std::vector<Grid> preds, const std::vector<Date>& dates) {
    Dataset out;
    out.channel_names = {"precipitation"};
    out.samples.resize(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        out.samples[i].date = dates[i];
        out.samples[i].input = preds[i];
        out.samples[i].target = std::move(preds[i]);
    }
    return out;
}

// ---------------------------------------------------------------- synth ---

struct SynthArgs {
    std::string out;
    int height = 16, width = 16, days = 730;
    std::uint64_t seed = 7;
    std::string start = "1999-01-01";
    int coarsen = 4;
    int min_days = 10;
};

void run_synth(const SynthArgs& a) {
    if (a.days < a.min_days)
        throw InvalidArgument("days=" + std::to_string(a.days) + " is below the minimum " +
                              std::to_string(a.min_days) +
                              " (a training window needs 5 consecutive days plus context)");
    SyntheticConfig cfg;
    cfg.height = a.height;
    cfg.width = a.width;
    cfg.n_days = a.days;
    cfg.seed = a.seed;
    cfg.start = parse_iso_date(a.start);
    cfg.coarsen = a.coarsen;
    const Dataset ds = make_dataset(generate_synthetic(cfg));
    save_grd(ds, a.out);
    std::printf("wrote %zu days of %dx%d synthetic data to %s\n", ds.samples.size(), a.height,
                a.width, a.out.c_str());
}

// ---------------------------------------------------------------- train ---

struct TrainArgs {
    std::string data, period = "monsoon", config, out, log;
    bool resume = false;
    int threads = hardware_threads();
    int cutoff = 1999;
    int epochs = -1;      // override
    long long seed = -1;  // override
    int val_years = -1;   // -1 = auto (10% of training years, at least 1)
};

void run_train(const TrainArgs& a) {
    const Dataset ds = load_grd(a.data);
    const std::vector<ClimateSample> period_samples = filter_period(ds.samples, a.period);

    cli::TrainSettings settings =
        a.config.empty() ? cli::TrainSettings{} : cli::load_train_settings(a.config);
    if (a.epochs >= 0) settings.train.epochs = a.epochs;
    if (a.seed >= 0) settings.train.seed = std::uint64_t(a.seed);

    ModelConfig mc = settings.model;
    mc.input_channels = ds.channels();
    mc.height = ds.height();
    mc.width = ds.width();
    mc.validate();

    std::vector<ClimateSample> train_side;
    for (const ClimateSample& s : period_samples)
        if (s.date.year <= a.cutoff) train_side.push_back(s);
    if (train_side.empty())
        throw InvalidArgument("empty partition: no training days at or before year " +
                              std::to_string(a.cutoff));

    NormalizationSpec norm;
    ModelParams params;
    AdamState adam;
    PlateauState plateau;
    int start_epoch = 0;
    if (a.resume) {
        Checkpoint ck = load_checkpoint(a.out);
        if (!ck.has_model) throw ConfigError("resume: checkpoint holds no trained network");
        if (!(ck.model_config == mc))
            throw ConfigError("resume: model configuration differs from the checkpoint");
        if (ck.period != a.period)
            throw ConfigError("resume: checkpoint was trained on period '" + ck.period + "'");
        if (!ck.norm) throw ConfigError("resume: checkpoint has no normalization spec");
        norm = *ck.norm;
        params = ck.model;
        adam = ck.adam;
        plateau = ck.plateau;
        start_epoch = ck.epochs_completed;
        const int target_epochs = settings.train.epochs;
        settings.train = ck.train_config;
        if (a.epochs >= 0) settings.train.epochs = target_epochs;
    } else {
        norm = fit_normalization(train_side);
        params = init_model(mc, settings.train.seed);
        adam = AdamState::for_size(param_count(params), settings.train.initial_lr);
    }

    std::vector<ClimateSample> normed;
    normed.reserve(period_samples.size());
    for (const ClimateSample& s : period_samples) {
        ClimateSample n;
        n.date = s.date;
        n.input = normalize(s.input, norm.inputs);
        n.target = normalize_target(s.target, norm);
        normed.push_back(std::move(n));
    }
    WindowSplit split = split_windows_by_year(build_windows(normed, mc.window), a.cutoff);
    if (split.train.empty())
        throw InvalidArgument("no training windows: need at least " + std::to_string(mc.window) +
                              " consecutive " + a.period + " days at or before year " +
                              std::to_string(a.cutoff));

    // Hold out the last years of the training period for the lr schedule.
    std::set<int> years;
    for (const SequenceWindow& w : split.train) years.insert(w.date.year);
    int hold = a.val_years >= 0
                   ? a.val_years
                   : (years.size() >= 2 ? std::max<int>(1, int(years.size()) / 10) : 0);
    hold = std::min<int>(hold, int(years.size()) - 1);
    std::set<int> val_years;
    for (auto it = years.rbegin(); it != years.rend() && int(val_years.size()) < hold; ++it)
        val_years.insert(*it);
    std::vector<SequenceWindow> train_w, val_w;
    for (SequenceWindow& w : split.train)
        (val_years.count(w.date.year) ? val_w : train_w).push_back(std::move(w));

    const std::string log_path = a.log.empty() ? a.out + ".loss.csv" : a.log;
    std::ofstream log(log_path, a.resume ? std::ios::app : std::ios::trunc);
    if (!log) throw Error("cannot open loss log '" + log_path + "' for writing");
    if (!a.resume) log << "epoch,train_loss,val_loss,lr\n";

    int epochs_done = start_epoch;
    const auto checkpoint_of = [&](int epochs_completed) {
        Checkpoint ck;
        ck.has_model = true;
        ck.model_config = mc;
        ck.model = params;
        ck.adam = adam;
        ck.plateau = plateau;
        ck.train_config = settings.train;
        ck.epochs_completed = epochs_completed;
        ck.norm = norm;
        ck.period = a.period;
        ck.cutoff_year = a.cutoff;
        ck.seed = settings.train.seed;
        return ck;
    };

    FitOptions opts;
    opts.threads = a.threads;
    opts.start_epoch = start_epoch;
    opts.on_epoch = [&](const EpochStats& row) {
        epochs_done = row.epoch;
        log << row.epoch << ',' << format_float(row.train_loss) << ','
            << (row.val_loss ? format_float(*row.val_loss) : std::string()) << ','
            << format_float(row.lr) << '\n';
    };

    try {
        fit(train_w, val_w, mc, params, adam, plateau, settings.train, opts);
    } catch (const DivergenceError&) {
        // fit rolled params/adam/plateau back to the last completed epoch.
        log.flush();
        save_checkpoint(checkpoint_of(epochs_done), a.out);
        std::fprintf(stderr, "training diverged after epoch %d; last-good checkpoint kept at %s\n",
                     epochs_done, a.out.c_str());
        throw;
    }
    log.flush();
    save_checkpoint(checkpoint_of(settings.train.epochs), a.out);
    std::printf("trained %s model for %d epochs (%zu train / %zu val windows); checkpoint %s\n",
                a.period.c_str(), settings.train.epochs - start_epoch, train_w.size(), val_w.size(),
                a.out.c_str());
}

// ------------------------------------------------------------ downscale ---

struct DownscaleArgs {
    std::string ckpt, data, out, period;
    int threads = hardware_threads();
    int from_year = std::numeric_limits<int>::min();
};

void run_downscale(const DownscaleArgs& a) {
    const Checkpoint ck = load_checkpoint(a.ckpt);
    if (!ck.has_model) throw ConfigError("checkpoint holds no trained network");
    if (!ck.norm) throw ConfigError("checkpoint has no normalization spec");
    const Dataset ds = load_grd(a.data);
    if (ds.channels() != ck.model_config.input_channels || ds.height() != ck.model_config.height ||
        ds.width() != ck.model_config.width)
        throw ShapeError("dataset shape " + std::to_string(ds.channels()) + "x" +
                         std::to_string(ds.height()) + "x" + std::to_string(ds.width()) +
                         " vs checkpoint expecting " +
                         std::to_string(ck.model_config.input_channels) + "x" +
                         std::to_string(ck.model_config.height) + "x" +
                         std::to_string(ck.model_config.width));

    const std::string period = a.period.empty() ? ck.period : a.period;
    const std::vector<ClimateSample> period_samples = filter_period(ds.samples, period);
    std::vector<ClimateSample> normed;
    normed.reserve(period_samples.size());
    for (const ClimateSample& s : period_samples) {
        ClimateSample n;
        n.date = s.date;
        n.input = normalize(s.input, ck.norm->inputs);
        n.target = s.target;  // unused at inference
        normed.push_back(std::move(n));
    }
    std::vector<SequenceWindow> windows = build_windows(normed, ck.model_config.window);
    std::erase_if(windows, [&](const SequenceWindow& w) { return w.date.year < a.from_year; });
    if (windows.empty())
        throw InvalidArgument("no windowable days to downscale (need " +
                              std::to_string(ck.model_config.window) + " consecutive days)");

    std::vector<Grid> preds(windows.size());
    std::vector<Date> dates(windows.size());
    parallel_for(windows.size(), a.threads, [&](std::size_t i) {
        Grid y = network_forward(windows[i].inputs, ck.model);
        y = denormalize_target(y, *ck.norm);
        for (float& v : y.data) v = std::max(v, 0.0f);  // precipitation floor
        preds[i] = std::move(y);
        dates[i] = windows[i].date;
    });
    save_grd(prediction_dataset(std::move(preds), dates), a.out);
    std::printf("downscaled %zu days (%s period) to %s\n", windows.size(), period.c_str(),
                a.out.c_str());
}

// ----------------------------------------------------------------- qmap ---

struct QmapFitArgs {
    std::string data, out, period = "all";
    int cutoff = 1999;
};

void run_qmap_fit(const QmapFitArgs& a) {
    const Dataset ds = load_grd(a.data);
    const std::vector<ClimateSample> period_samples = filter_period(ds.samples, a.period);
    std::vector<Grid> model_series, obs_series;
    for (const ClimateSample& s : period_samples) {
        if (s.date.year > a.cutoff) continue;
        model_series.push_back(slice_channels(s.input, 0, 1));  // coarse precipitation channel
        obs_series.push_back(s.target);
    }
    if (model_series.empty())
        throw InvalidArgument("empty partition: no training days at or before year " +
                              std::to_string(a.cutoff));
    Checkpoint ck;
    ck.qmap = fit_qmap(model_series, obs_series);
    ck.period = a.period;
    ck.cutoff_year = a.cutoff;
    save_checkpoint(ck, a.out);
    std::printf("fitted quantile map on %zu days (%s period); checkpoint %s\n",
                model_series.size(), a.period.c_str(), a.out.c_str());
}

struct QmapApplyArgs {
    std::string ckpt, data, out;
    int threads = hardware_threads();
    int from_year = std::numeric_limits<int>::min();
};

void run_qmap_apply(const QmapApplyArgs& a) {
    const Checkpoint ck = load_checkpoint(a.ckpt);
    if (!ck.qmap) throw ConfigError("no fitted map: checkpoint holds no quantile-map section");
    const Dataset ds = load_grd(a.data);
    std::vector<ClimateSample> period_samples = filter_period(ds.samples, ck.period);
    std::erase_if(period_samples,
                  [&](const ClimateSample& s) { return s.date.year < a.from_year; });
    if (period_samples.empty()) throw InvalidArgument("no days selected to map");
    std::vector<Grid> series;
    std::vector<Date> dates;
    for (const ClimateSample& s : period_samples) {
        series.push_back(slice_channels(s.input, 0, 1));
        dates.push_back(s.date);
    }
    std::vector<Grid> mapped = downscale_qmap(series, *ck.qmap, a.threads);
    save_grd(prediction_dataset(std::move(mapped), dates), a.out);
    std::printf("quantile-mapped %zu days to %s\n", dates.size(), a.out.c_str());
}

// ----------------------------------------------------------------- eval ---

struct EvalArgs {
    std::string pred, obs, dates_from, out = "eval_out", method = "pred";
    std::string extremes = "90,95,98,99,99.9";
    int qq_points = 4;
};

void run_eval(const EvalArgs& a) {
    const Dataset pred_ds = load_grd(a.pred);
    const Dataset obs_ds = load_grd(a.obs);

    std::vector<Date> dates;
    for (const ClimateSample& s : pred_ds.samples) dates.push_back(s.date);
    if (!a.dates_from.empty()) {
        const Dataset source = load_grd(a.dates_from);
        if (source.samples.size() != dates.size())
            throw InvalidArgument("--dates-from holds " + std::to_string(source.samples.size()) +
                                  " days, predictions hold " + std::to_string(dates.size()));
        for (std::size_t i = 0; i < dates.size(); ++i) dates[i] = source.samples[i].date;
    }

    std::map<std::int64_t, std::size_t> obs_index;
    for (std::size_t i = 0; i < obs_ds.samples.size(); ++i)
        obs_index[to_days(obs_ds.samples[i].date)] = i;

    DailySeries pred, obs;
    pred.unit = obs.unit = Unit::MmPerDay;
    pred.dates = obs.dates = dates;
    for (std::size_t i = 0; i < dates.size(); ++i) {
        const auto it = obs_index.find(to_days(dates[i]));
        if (it == obs_index.end())
            throw InvalidArgument("date " + to_iso(dates[i]) +
                                  " missing from observations (first mismatch at index " +
                                  std::to_string(i) + ")");
        pred.days.push_back(pred_ds.samples[i].target);
        obs.days.push_back(obs_ds.samples[it->second].target);
    }

    EvalOptions opts;
    opts.method = a.method;
    opts.extremes_thresholds.clear();
    std::stringstream ss(a.extremes);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            opts.extremes_thresholds.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw InvalidArgument("bad extremes threshold '" + item + "'");
        }
        const double q = opts.extremes_thresholds.back();
        if (q < 90.0 || q > 99.9)
            throw InvalidArgument("extremes threshold " + format_float(q) + " outside [90, 99.9]");
    }

    // A few fixed grid points for per-point QQ curves, seeded for
    // reproducibility across runs.
    Rng rng(42);
    std::set<std::pair<int, int>> picked;
    const int h = pred.days.front().height, w = pred.days.front().width;
    const int wanted = std::min<int>(a.qq_points, h * w);
    while (int(picked.size()) < wanted)
        picked.emplace(int(rng.below(std::uint64_t(h))), int(rng.below(std::uint64_t(w))));
    opts.qq_points.assign(picked.begin(), picked.end());

    const EvalReport report = evaluate(pred, obs, opts);
    const auto written = write_report(report, a.out);
    std::printf("evaluated %zu days: rmse %s, bias %s; %zu tables in %s\n", dates.size(),
                format_float(report.rmse).c_str(), format_float(report.bias).c_str(),
                written.size(), a.out.c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"finerain: ConvLSTM super-resolution downscaling of daily precipitation grids"};
    app.require_subcommand(1);

    SynthArgs synth;
    CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic GRD1 dataset");
    synth_cmd->add_option("--out", synth.out, "output GRD1 path")->required();
    synth_cmd->add_option("--height", synth.height, "grid height (default 16)");
    synth_cmd->add_option("--width", synth.width, "grid width (default 16)");
    synth_cmd->add_option("--days", synth.days, "number of daily samples (default 730)");
    synth_cmd->add_option("--seed", synth.seed, "generator seed (default 7)");
    synth_cmd->add_option("--start", synth.start, "first date, ISO (default 1999-01-01)");
    synth_cmd->add_option("--coarsen", synth.coarsen, "block-average factor (default 4)");
    synth_cmd->add_option("--min-days", synth.min_days,
                          "reject runs shorter than this (default 10)");
    synth_cmd->callback([&] { run_synth(synth); });

    TrainArgs train;
    CLI::App* train_cmd = app.add_subcommand("train", "train the downscaling network");
    train_cmd->add_option("--data", train.data, "GRD1 dataset")->required();
    train_cmd->add_option("--period", train.period, "monsoon|non-monsoon|all (default monsoon)")
        ->check(CLI::IsMember({"monsoon", "non-monsoon", "all"}));
    train_cmd->add_option("--config", train.config, "key = value training config file");
    train_cmd->add_option("--out", train.out, "checkpoint path")->required();
    train_cmd->add_option("--log", train.log, "loss log CSV (default <out>.loss.csv)");
    train_cmd->add_flag("--resume", train.resume, "continue from the checkpoint at --out");
    train_cmd->add_option("--threads", train.threads, "worker cap (default: machine)");
    train_cmd->add_option("--cutoff", train.cutoff, "last training year (default 1999)");
    train_cmd->add_option("--epochs", train.epochs, "override config epochs");
    train_cmd->add_option("--seed", train.seed, "override config seed");
    train_cmd->add_option("--val-years", train.val_years,
                          "validation years held out (default: 10%, 0 disables)");
    train_cmd->callback([&] { run_train(train); });

    DownscaleArgs down;
    CLI::App* down_cmd = app.add_subcommand("downscale", "run inference over a dataset");
    down_cmd->add_option("--ckpt", down.ckpt, "trained checkpoint")->required();
    down_cmd->add_option("--data", down.data, "GRD1 dataset")->required();
    down_cmd->add_option("--out", down.out, "output GRD1 of daily predictions")->required();
    down_cmd->add_option("--period", down.period, "override the checkpoint period filter")
        ->check(CLI::IsMember({"monsoon", "non-monsoon", "all"}));
    down_cmd->add_option("--threads", down.threads, "worker cap (default: machine)");
    down_cmd->add_option("--from-year", down.from_year, "only predict target dates >= this year");
    down_cmd->callback([&] { run_downscale(down); });

    CLI::App* qmap_cmd = app.add_subcommand("qmap", "quantile-mapping baseline");
    qmap_cmd->require_subcommand(1);
    QmapFitArgs qfit;
    CLI::App* qfit_cmd = qmap_cmd->add_subcommand("fit", "fit per-point quantile tables");
    qfit_cmd->add_option("--data", qfit.data, "GRD1 dataset")->required();
    qfit_cmd->add_option("--out", qfit.out, "checkpoint path")->required();
    qfit_cmd->add_option("--period", qfit.period, "monsoon|non-monsoon|all (default all)")
        ->check(CLI::IsMember({"monsoon", "non-monsoon", "all"}));
    qfit_cmd->add_option("--cutoff", qfit.cutoff, "last training year (default 1999)");
    qfit_cmd->callback([&] { run_qmap_fit(qfit); });
    QmapApplyArgs qapply;
    CLI::App* qapply_cmd = qmap_cmd->add_subcommand("apply", "bias-correct a daily series");
    qapply_cmd->add_option("--ckpt", qapply.ckpt, "fitted quantile-map checkpoint")->required();
    qapply_cmd->add_option("--data", qapply.data, "GRD1 dataset")->required();
    qapply_cmd->add_option("--out", qapply.out, "output GRD1 of mapped precipitation")->required();
    qapply_cmd->add_option("--threads", qapply.threads, "worker cap (default: machine)");
    qapply_cmd->add_option("--from-year", qapply.from_year, "only map dates >= this year");
    qapply_cmd->callback([&] { run_qmap_apply(qapply); });

    EvalArgs eval_args;
    CLI::App* eval_cmd = app.add_subcommand("eval", "score predictions against observations");
    eval_cmd->add_option("--pred", eval_args.pred, "predictions GRD1")->required();
    eval_cmd->add_option("--obs", eval_args.obs, "observations GRD1")->required();
    eval_cmd->add_option("--dates-from", eval_args.dates_from,
                         "take evaluation dates from this GRD1 instead of --pred");
    eval_cmd->add_option("--out", eval_args.out, "report directory (default eval_out)");
    eval_cmd->add_option("--method", eval_args.method, "method label in the tables");
    eval_cmd->add_option("--extremes", eval_args.extremes,
                         "percentile thresholds (default 90,95,98,99,99.9)");
    eval_cmd->add_option("--qq-points", eval_args.qq_points,
                         "number of per-point QQ curves (default 4)");
    eval_cmd->callback([&] { run_eval(eval_args); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
