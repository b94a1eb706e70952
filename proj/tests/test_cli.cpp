// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "finerain/grd_io.hpp"
#include "finerain/checkpoint.hpp"

#include "support.hpp"

using namespace finerain;
using namespace test_support;

namespace {

struct CliResult {
    int code = -1;
    std::string output;  // stdout + stderr
};

CliResult run_cli(const std::string& args) {
    const std::string cmd = std::string(FINERAIN_CLI_PATH) + " " + args + " 2>&1";
    std::array<char, 4096> buf{};
    CliResult r;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::size_t n = 0;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// Sandbox directory per test run.
struct Workdir {
    std::filesystem::path dir;
    Workdir() {
        dir = std::filesystem::temp_directory_path() /
              ("finerain_cli_" + std::to_string(::getpid()));
        std::filesystem::create_directories(dir);
    }
    ~Workdir() { std::filesystem::remove_all(dir); }
    std::string operator/(const char* name) const { return (dir / name).string(); }
};

void write_tiny_config(const std::string& path, int epochs, int seed) {
    std::ofstream cfg(path);
    cfg << "initial_lr = 0.002\nweight_decay = 0.0\nrecurrent_dropout = 0.1\n"
        << "inter_layer_dropout = 0.1\nepochs = " << epochs << "\nbatch_size = 8\nseed = " << seed
        << "\nwindow = 5\neta = 3,3,3\nkernels = 3,3,3\nsr_channels = 3,5,4,3\n"
        << "sr_kernels = 3,3,3,3\nhead_channels = 5,3\n";
}

}  // namespace

TEST_CASE("help output enumerates every documented flag") {
    const auto has_all = [](const std::string& text, const std::vector<const char*>& flags) {
        for (const char* f : flags) {
            INFO("missing flag ", f);
            CHECK(text.find(f) != std::string::npos);
        }
    };
    CliResult top = run_cli("--help");
    CHECK(top.code == 0);
    for (const char* sub : {"synth", "train", "downscale", "qmap", "eval"})
        CHECK(top.output.find(sub) != std::string::npos);

    CliResult synth = run_cli("synth --help");
    CHECK(synth.code == 0);
    has_all(synth.output,
            {"--out", "--height", "--width", "--days", "--seed", "--start", "--coarsen",
             "--min-days"});
    CliResult train = run_cli("train --help");
    CHECK(train.code == 0);
    has_all(train.output, {"--data", "--period", "--config", "--out", "--log", "--resume",
                           "--threads", "--cutoff", "--epochs", "--seed", "--val-years"});
    CliResult down = run_cli("downscale --help");
    CHECK(down.code == 0);
    has_all(down.output, {"--ckpt", "--data", "--out", "--period", "--threads", "--from-year"});
    CliResult qfit = run_cli("qmap fit --help");
    CHECK(qfit.code == 0);
    has_all(qfit.output, {"--data", "--out", "--period", "--cutoff"});
    CliResult qapply = run_cli("qmap apply --help");
    CHECK(qapply.code == 0);
    has_all(qapply.output, {"--ckpt", "--data", "--out", "--threads", "--from-year"});
    CliResult ev = run_cli("eval --help");
    CHECK(ev.code == 0);
    has_all(ev.output, {"--pred", "--obs", "--dates-from", "--out", "--method", "--extremes",
                        "--qq-points"});

    CHECK(run_cli("nonsense-subcommand").code == 2);
    CHECK(run_cli("synth --no-such-flag").code == 2);
}

TEST_CASE("synth: round-trip, determinism, and the minimum-days check") {
    Workdir wd;
    const std::string a = wd / "a.grd";
    const std::string b = wd / "b.grd";
    CHECK(run_cli("synth --out " + a + " --height 10 --width 11 --days 30 --seed 5").code == 0);
    const Dataset ds = load_grd(a);
    CHECK(ds.samples.size() == 30);
    CHECK(ds.channels() == 7);
    CHECK(ds.height() == 10);
    CHECK(ds.width() == 11);

    CHECK(run_cli("synth --out " + b + " --height 10 --width 11 --days 30 --seed 5").code == 0);
    CHECK(slurp(a) == slurp(b));  // byte-identical

    const CliResult bad = run_cli("synth --out " + (wd / "c.grd") + " --days 5");
    CHECK(bad.code == 2);
    CHECK(bad.output.find("below the minimum") != std::string::npos);

    CHECK(run_cli("synth --out /nonexistent-dir/x.grd --days 30").code == 2);
}

TEST_CASE("train: loss log shape, empty partition, divergence-free smoke run") {
    Workdir wd;
    const std::string data = wd / "d.grd";
    REQUIRE(run_cli("synth --out " + data +
                    " --height 8 --width 8 --days 200 --seed 3 --start 1999-01-01")
                .code == 0);
    const std::string cfg = wd / "cfg.ini";
    write_tiny_config(cfg, 5, 11);

    const std::string ck = wd / "m.ck";
    const CliResult r = run_cli("train --data " + data + " --period all --config " + cfg +
                                " --out " + ck + " --cutoff 1999 --val-years 0 --threads 2");
    CHECK(r.code == 0);

    const std::string log = slurp(ck + ".loss.csv");
    CHECK(log.starts_with("epoch,train_loss,val_loss,lr\n"));
    int rows = -1;  // header
    for (char c : log) rows += c == '\n';
    CHECK(rows == 5);
    // Final loss beats the initial loss on this easy smoke fixture.
    const auto first_comma = log.find(',', log.find('\n') + 1);
    const double first_loss = std::stod(log.substr(first_comma + 1));
    const auto last_row = log.rfind('\n', log.size() - 2);
    const double last_loss = std::stod(log.substr(log.find(',', last_row) + 1));
    CHECK(last_loss < first_loss);

    // A non-monsoon-only dataset cannot train a monsoon model.
    const std::string winter = wd / "winter.grd";
    REQUIRE(run_cli("synth --out " + winter +
                    " --height 8 --width 8 --days 60 --seed 3 --start 1999-11-01")
                .code == 0);
    const CliResult empty = run_cli("train --data " + winter + " --period monsoon --config " +
                                    cfg + " --out " + (wd / "x.ck"));
    CHECK(empty.code == 2);
    CHECK(empty.output.find("empty partition") != std::string::npos);
}

TEST_CASE("train: identical seeds and thread counts give identical artifacts") {
    Workdir wd;
    const std::string data = wd / "d.grd";
    REQUIRE(run_cli("synth --out " + data + " --height 8 --width 8 --days 120 --seed 9").code ==
            0);
    const std::string cfg = wd / "cfg.ini";
    write_tiny_config(cfg, 3, 17);

    const auto train_to = [&](const std::string& ck, int threads) {
        REQUIRE(run_cli("train --data " + data + " --period all --config " + cfg + " --out " + ck +
                        " --cutoff 1999 --val-years 0 --threads " + std::to_string(threads))
                    .code == 0);
    };
    train_to(wd / "t1.ck", 1);
    train_to(wd / "t2.ck", 2);
    train_to(wd / "t3.ck", 1);
    CHECK(slurp(wd / "t1.ck") == slurp(wd / "t2.ck"));
    CHECK(slurp(wd / "t1.ck") == slurp(wd / "t3.ck"));
    CHECK(slurp((wd / "t1.ck") + ".loss.csv") == slurp((wd / "t2.ck") + ".loss.csv"));
}

TEST_CASE("train: resume reproduces an uninterrupted run exactly") {
    Workdir wd;
    const std::string data = wd / "d.grd";
    REQUIRE(run_cli("synth --out " + data + " --height 8 --width 8 --days 120 --seed 13").code ==
            0);
    const std::string cfg = wd / "cfg.ini";
    write_tiny_config(cfg, 6, 23);

    const std::string full = wd / "full.ck";
    REQUIRE(run_cli("train --data " + data + " --period all --config " + cfg + " --out " + full +
                    " --cutoff 1999 --val-years 0 --threads 2")
                .code == 0);

    const std::string staged = wd / "staged.ck";
    REQUIRE(run_cli("train --data " + data + " --period all --config " + cfg + " --out " + staged +
                    " --cutoff 1999 --val-years 0 --threads 1 --epochs 3")
                .code == 0);
    REQUIRE(run_cli("train --data " + data + " --period all --config " + cfg + " --out " + staged +
                    " --cutoff 1999 --val-years 0 --threads 2 --epochs 6 --resume")
                .code == 0);

    CHECK(slurp(full) == slurp(staged));
    CHECK(slurp(full + ".loss.csv") == slurp(staged + ".loss.csv"));
}

TEST_CASE("downscale: counting, clamping, determinism, shape mismatch") {
    Workdir wd;
    const std::string data = wd / "d.grd";
    REQUIRE(run_cli("synth --out " + data +
                    " --height 8 --width 8 --days 100 --seed 21 --start 1999-01-01")
                .code == 0);
    const std::string cfg = wd / "cfg.ini";
    write_tiny_config(cfg, 2, 31);
    const std::string ck = wd / "m.ck";
    REQUIRE(run_cli("train --data " + data + " --period all --config " + cfg + " --out " + ck +
                    " --cutoff 1999 --val-years 0")
                .code == 0);

    const std::string pred = wd / "p.grd";
    REQUIRE(run_cli("downscale --ckpt " + ck + " --data " + data + " --out " + pred).code == 0);
    const Dataset out = load_grd(pred);
    CHECK(out.samples.size() == 100 - 4);  // every day with 4 predecessors
    for (const ClimateSample& s : out.samples)
        for (float v : s.target.data) CHECK(v >= 0.0f);

    const std::string pred2 = wd / "p2.grd";
    REQUIRE(run_cli("downscale --ckpt " + ck + " --data " + data + " --out " + pred2 +
                    " --threads 1")
                .code == 0);
    CHECK(slurp(pred) == slurp(pred2));

    const std::string other = wd / "other.grd";
    REQUIRE(run_cli("synth --out " + other + " --height 9 --width 8 --days 30 --seed 2").code ==
            0);
    const CliResult mismatch = run_cli("downscale --ckpt " + ck + " --data " + other + " --out " +
                                       (wd / "x.grd"));
    CHECK(mismatch.code == 2);
    CHECK(mismatch.output.find("8x8") != std::string::npos);
    CHECK(mismatch.output.find("9x8") != std::string::npos);
}

TEST_CASE("qmap: identity fit, bias removal, apply-before-fit") {
    Workdir wd;
    // Hand-built dataset whose precipitation channel equals the target:
    // the fitted map must then be the identity on the training days.
    Rng rng(5);
    std::vector<ClimateSample> samples;
    Date d{1999, 1, 1};
    for (int i = 0; i < 40; ++i) {
        ClimateSample s;
        s.date = d;
        s.target = random_grid(1, 6, 6, rng, 0.0, 20.0);
        Grid second = random_grid(1, 6, 6, rng, 0.0, 5.0);
        s.input = concat_channels(s.target, second);
        samples.push_back(std::move(s));
        d = next_day(d);
    }
    Dataset ds;
    ds.samples = samples;
    ds.channel_names = {"precipitation", "aux"};
    const std::string data = wd / "ident.grd";
    save_grd(ds, data);

    const std::string qck = wd / "q.ck";
    REQUIRE(run_cli("qmap fit --data " + data + " --out " + qck + " --period all --cutoff 1999")
                .code == 0);
    const std::string mapped = wd / "mapped.grd";
    REQUIRE(run_cli("qmap apply --ckpt " + qck + " --data " + data + " --out " + mapped).code ==
            0);
    const Dataset out = load_grd(mapped);
    REQUIRE(out.samples.size() == 40);
    for (std::size_t i = 0; i < out.samples.size(); ++i)
        CHECK(max_abs_diff(out.samples[i].target, samples[i].target) < 1e-4);

    // Constant +5 bias in the model channel is removed in-sample.
    std::vector<ClimateSample> biased = samples;
    for (ClimateSample& s : biased) {
        Grid shifted = slice_channels(s.input, 0, 1);
        for (float& v : shifted.data) v += 5.0f;
        s.input = concat_channels(shifted, slice_channels(s.input, 1, 1));
    }
    Dataset bds;
    bds.samples = biased;
    bds.channel_names = {"precipitation", "aux"};
    const std::string bdata = wd / "biased.grd";
    save_grd(bds, bdata);
    const std::string bck = wd / "bq.ck";
    REQUIRE(run_cli("qmap fit --data " + bdata + " --out " + bck + " --period all --cutoff 1999")
                .code == 0);
    const std::string bmapped = wd / "bmapped.grd";
    REQUIRE(run_cli("qmap apply --ckpt " + bck + " --data " + bdata + " --out " + bmapped).code ==
            0);
    const Dataset bout = load_grd(bmapped);
    for (std::size_t i = 0; i < bout.samples.size(); ++i)
        CHECK(max_abs_diff(bout.samples[i].target, samples[i].target) < 1e-4);

    // Applying a checkpoint that has no fitted map is a usage error.
    Checkpoint no_map;
    const std::string empty_ck = wd / "empty.ck";
    save_checkpoint(no_map, empty_ck);
    const CliResult missing = run_cli("qmap apply --ckpt " + empty_ck + " --data " + data +
                                      " --out " + (wd / "x.grd"));
    CHECK(missing.code == 2);
    CHECK(missing.output.find("no fitted map") != std::string::npos);
}

TEST_CASE("eval: zero error, golden CSV bytes, misaligned dates") {
    Workdir wd;
    // Quantized observations so that the +1.75 offset is exact in float32.
    Rng rng(7);
    std::vector<ClimateSample> obs_samples, pred_samples;
    Date d{2000, 6, 1};
    for (int i = 0; i < 60; ++i) {
        Grid target = random_grid(1, 3, 3, rng, 0.0, 30.0);
        for (float& v : target.data) v = std::round(v * 1024.0f) / 1024.0f;
        ClimateSample o;
        o.date = d;
        o.target = target;
        o.input = target;
        obs_samples.push_back(o);
        ClimateSample p = o;
        for (float& v : p.target.data) v += 1.75f;
        p.input = p.target;
        pred_samples.push_back(std::move(p));
        d = next_day(d);
    }
    Dataset obs_ds, pred_ds;
    obs_ds.samples = obs_samples;
    obs_ds.channel_names = {"precipitation"};
    pred_ds.samples = pred_samples;
    pred_ds.channel_names = {"precipitation"};
    const std::string obs = wd / "obs.grd";
    const std::string pred = wd / "pred.grd";
    save_grd(obs_ds, obs);
    save_grd(pred_ds, pred);

    SUBCASE("pred == obs gives an all-zero summary") {
        REQUIRE(run_cli("eval --pred " + obs + " --obs " + obs + " --out " + (wd / "ev0")).code ==
                0);
        CHECK(slurp((wd / "ev0") + std::string("/overall.csv")) ==
              "method,rmse,bias,signed_mean_error\npred,0,0,0\n");
    }
    SUBCASE("constant offset: golden bytes for every table") {
        REQUIRE(run_cli("eval --pred " + pred + " --obs " + obs + " --out " + (wd / "ev") +
                        " --method convlstm --extremes 90,99")
                    .code == 0);
        CHECK(slurp((wd / "ev") + std::string("/overall.csv")) ==
              "method,rmse,bias,signed_mean_error\nconvlstm,1.75,1.75,1.75\n");
        CHECK(slurp((wd / "ev") + std::string("/seasons.csv")) ==
              "season,rmse,bias\nJJA,1.75,1.75\n");
        CHECK(slurp((wd / "ev") + std::string("/periods.csv")) ==
              "period,rmse,bias\nmonsoon,1.75,1.75\n");
        CHECK(slurp((wd / "ev") + std::string("/extremes.csv")) ==
              "threshold,rmse_mean,rmse_q25,rmse_q75,bias_mean,bias_q25,bias_q75\n"
              "90,1.75,1.75,1.75,1.75,1.75,1.75\n"
              "99,1.75,1.75,1.75,1.75,1.75,1.75\n");
        const std::string qq = slurp((wd / "ev") + std::string("/qq_pooled.csv"));
        CHECK(qq.starts_with("prob,obs_quantile,pred_quantile\n"));
    }
    SUBCASE("misaligned dates exit 2 naming the first mismatch") {
        std::vector<ClimateSample> moved = pred_samples;
        for (ClimateSample& s : moved) s.date = next_day(next_day(s.date));  // shift by 2 days
        Dataset moved_ds;
        moved_ds.samples = moved;
        moved_ds.channel_names = {"precipitation"};
        // Last two shifted dates fall outside the observation range.
        const std::string mpred = wd / "moved.grd";
        save_grd(moved_ds, mpred);
        const CliResult r = run_cli("eval --pred " + mpred + " --obs " + obs + " --out " +
                                    (wd / "evx"));
        CHECK(r.code == 2);
        CHECK(r.output.find("missing from observations") != std::string::npos);
    }
    SUBCASE("out-of-range extremes threshold is a usage error") {
        const CliResult r = run_cli("eval --pred " + pred + " --obs " + obs + " --out " +
                                    (wd / "evy") + " --extremes 50");
        CHECK(r.code == 2);
        CHECK(r.output.find("outside [90, 99.9]") != std::string::npos);
    }
}

TEST_CASE("train: divergence exits 3 and keeps the last-good checkpoint") {
    Workdir wd;
    const std::string data = wd / "d.grd";
    REQUIRE(run_cli("synth --out " + data + " --height 8 --width 8 --days 60 --seed 1").code == 0);
    const std::string cfg = wd / "cfg.ini";
    {
        std::ofstream out(cfg);
        out << "initial_lr = 1e9\nepochs = 5\nbatch_size = 4\nseed = 2\nwindow = 5\n"
            << "eta = 3,3,3\nkernels = 3,3,3\nsr_channels = 3,5,4,3\nsr_kernels = 3,3,3,3\n"
            << "head_channels = 5,3\nrecurrent_dropout = 0\ninter_layer_dropout = 0\n";
    }
    const std::string ck = wd / "m.ck";
    const CliResult r = run_cli("train --data " + data + " --period all --config " + cfg +
                                " --out " + ck + " --cutoff 1999 --val-years 0");
    CHECK(r.code == 3);
    CHECK(r.output.find("diverged") != std::string::npos);
    const Checkpoint kept = load_checkpoint(ck);  // last-good state was written
    CHECK(kept.has_model);
    CHECK(kept.epochs_completed < 5);
}
