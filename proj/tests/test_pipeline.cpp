// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "finerain/grd_io.hpp"
#include "finerain/pipeline.hpp"

#include "support.hpp"

using namespace finerain;
using namespace test_support;

namespace {

ClimateSample sample_on(Date d, int channels = 2, int h = 8, int w = 8, std::uint64_t seed = 0) {
    Rng rng(mix_seed(std::uint64_t(to_days(d)), seed));
    ClimateSample s;
    s.date = d;
    s.input = random_grid(channels, h, w, rng, 0.0, 5.0);
    s.target = random_grid(1, h, w, rng, 0.0, 10.0);
    return s;
}

std::vector<ClimateSample> consecutive_days(Date start, int n) {
    std::vector<ClimateSample> out;
    Date d = start;
    for (int i = 0; i < n; ++i) {
        out.push_back(sample_on(d));
        d = next_day(d);
    }
    return out;
}

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("civil date arithmetic") {
    CHECK(to_iso(Date{2001, 6, 15}) == "2001-06-15");
    CHECK(parse_iso_date("1999-12-31") == Date{1999, 12, 31});
    CHECK(next_day(Date{1999, 12, 31}) == Date{2000, 1, 1});
    CHECK(next_day(Date{2000, 2, 28}) == Date{2000, 2, 29});  // leap year
    CHECK(next_day(Date{2001, 2, 28}) == Date{2001, 3, 1});
    CHECK_THROWS_AS(parse_iso_date("2001-02-30"), InvalidArgument);
    CHECK_THROWS_AS(parse_iso_date("not-a-date"), InvalidArgument);
}

TEST_CASE("normalize: affine map and endpoints") {
    // Precipitation channel fitted to [0, 200] maps onto [0, 50].
    const std::vector<ChannelScale> scales = {ChannelScale{0.0, 200.0, 0.0, 50.0}};
    Grid g(1, 1, 3);
    g.data = {100.0f, 0.0f, 200.0f};
    const Grid n = normalize(g, scales);
    CHECK(n.data[0] == 25.0f);
    CHECK(n.data[1] == 0.0f);   // x = min -> lo exactly
    CHECK(n.data[2] == 50.0f);  // x = max -> hi exactly

    // Out-of-range values extrapolate rather than clamp.
    Grid over(1, 1, 1);
    over.data = {400.0f};
    CHECK(normalize(over, scales).data[0] == 100.0f);
}

TEST_CASE("normalize/denormalize round-trip within 1e-5") {
    Rng rng(1);
    const std::vector<ChannelScale> scales = {ChannelScale{-3.0, 7.0, 0.0, 1.0},
                                              ChannelScale{0.0, 120.0, 0.0, 50.0}};
    const Grid g = random_grid(2, 6, 6, rng, -3.0, 120.0);
    const Grid round = denormalize(normalize(g, scales), scales);
    for (std::size_t i = 0; i < g.data.size(); ++i)
        CHECK(std::abs(double(round.data[i]) - double(g.data[i])) < 1e-5 * 120.0);
}

TEST_CASE("fit_normalization: channel targets and degenerate-channel error") {
    std::vector<ClimateSample> train = consecutive_days(Date{1990, 1, 1}, 4);
    NormalizationSpec spec = fit_normalization(train);
    REQUIRE(spec.inputs.size() == 2);
    CHECK(spec.inputs[0].hi == 50.0);  // precipitation channel
    CHECK(spec.inputs[1].hi == 1.0);
    CHECK(spec.target.hi == 50.0);

    for (ClimateSample& s : train)
        for (std::int64_t i = 0; i < s.input.plane(); ++i) s.input.channel_ptr(1)[i] = 4.0f;
    CHECK_THROWS_WITH_AS(fit_normalization(train), doctest::Contains("elevation"), FitError);
}

TEST_CASE("interpolate_to_grid: constants, midpoints, affine exactness") {
    SUBCASE("constant field stays constant") {
        const Grid c(3, 2, 2, 2.5f);
        for (float v : interpolate_to_grid(c, 5, 7).data) CHECK(v == 2.5f);
    }
    SUBCASE("2x2 upsampled to 3x3 has the bilinear midpoint at the center") {
        Grid g(1, 2, 2);
        g.data = {0.0f, 1.0f, 2.0f, 3.0f};
        const Grid up = interpolate_to_grid(g, 3, 3);
        CHECK(up.at(0, 1, 1) == 1.5f);
        CHECK(up.at(0, 0, 0) == 0.0f);
        CHECK(up.at(0, 2, 2) == 3.0f);
    }
    SUBCASE("planar fields are reproduced exactly") {
        Grid g(1, 4, 4);
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) g.at(0, y, x) = float(2 * y + 3 * x);
        const Grid up = interpolate_to_grid(g, 8, 8);
        const double sy = 3.0 / 7.0, sx = 3.0 / 7.0;
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x)
                CHECK(std::abs(double(up.at(0, y, x)) - (2.0 * y * sy + 3.0 * x * sx)) <= 1e-5);
    }
    SUBCASE("bounds are preserved (convex combination)") {
        Rng rng(2);
        const Grid g = random_grid(1, 5, 4, rng, -2.0, 9.0);
        float lo = g.data[0], hi = g.data[0];
        for (float v : g.data) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        for (float v : interpolate_to_grid(g, 13, 11).data) {
            CHECK(v >= lo - 1e-6f);
            CHECK(v <= hi + 1e-6f);
        }
    }
    SUBCASE("downsampling and degenerate sources are rejected") {
        CHECK_THROWS_AS(interpolate_to_grid(Grid(1, 4, 4), 3, 8), InvalidArgument);
        CHECK_THROWS_AS(interpolate_to_grid(Grid(1, 1, 4), 8, 8), InvalidArgument);
    }
}

TEST_CASE("build_windows: counting and calendar gaps") {
    SUBCASE("5 consecutive days make exactly one window") {
        const auto samples = consecutive_days(Date{2000, 3, 1}, 5);
        const auto windows = build_windows(samples, 5);
        REQUIRE(windows.size() == 1);
        CHECK(windows[0].date == Date{2000, 3, 5});
        CHECK(windows[0].inputs.size() == 5);
    }
    SUBCASE("10 consecutive days make 6 windows") {
        CHECK(build_windows(consecutive_days(Date{2000, 3, 1}, 10), 5).size() == 6);
    }
    SUBCASE("a calendar gap splits the stream") {
        std::vector<ClimateSample> samples;
        for (int day : {1, 2, 3, 4, 5, 7, 8, 9, 10, 11})
            samples.push_back(sample_on(Date{2000, 1, day}));
        const auto windows = build_windows(samples, 5);
        REQUIRE(windows.size() == 2);
        CHECK(windows[0].date == Date{2000, 1, 5});
        CHECK(windows[1].date == Date{2000, 1, 11});
    }
    SUBCASE("fewer than T samples give an empty result, not an error") {
        CHECK(build_windows(consecutive_days(Date{2000, 1, 1}, 3), 5).empty());
    }
    SUBCASE("windows have strictly consecutive dates by construction") {
        const auto samples = consecutive_days(Date{1999, 12, 28}, 9);  // spans new year
        for (const auto& w : build_windows(samples, 5)) CHECK(w.inputs.size() == 5);
        CHECK(build_windows(samples, 5).size() == 5);
    }
    SUBCASE("unsorted input is rejected") {
        std::vector<ClimateSample> samples = consecutive_days(Date{2000, 1, 1}, 5);
        std::swap(samples[1], samples[2]);
        CHECK_THROWS_AS(build_windows(samples, 5), InvalidArgument);
    }
}

TEST_CASE("split_monsoon: May-September vs October-April") {
    CHECK(is_monsoon_month(Date{2001, 6, 15}.month));
    CHECK(!is_monsoon_month(Date{2001, 10, 1}.month));

    const auto year = consecutive_days(Date{2001, 1, 1}, 365);  // non-leap
    const MonsoonSplit split = split_monsoon(year);
    CHECK(split.monsoon.size() == 153);
    CHECK(split.non_monsoon.size() == 212);
    CHECK(split.monsoon.size() + split.non_monsoon.size() == year.size());
}

TEST_CASE("split_seasons: standard meteorological partition") {
    CHECK(season_of(1) == Season::DJF);
    CHECK(season_of(12) == Season::DJF);
    const auto year = consecutive_days(Date{2001, 1, 1}, 365);
    const SeasonSplit split = split_seasons(year);
    CHECK(split.djf.size() == 90);
    CHECK(split.mam.size() == 92);
    CHECK(split.jja.size() == 92);
    CHECK(split.son.size() == 91);
}

TEST_CASE("train_test_split by calendar year") {
    std::vector<ClimateSample> samples = {sample_on(Date{1999, 12, 31}),
                                          sample_on(Date{2000, 1, 1})};
    const TrainTestSplit split = train_test_split(samples, 1999);
    REQUIRE(split.train.size() == 1);
    REQUIRE(split.test.size() == 1);
    CHECK(split.train[0].date.year == 1999);
    CHECK(split.test[0].date.year == 2000);

    // Parameterized cutoff.
    std::vector<ClimateSample> years;
    for (int y = 2000; y <= 2005; ++y) years.push_back(sample_on(Date{y, 7, 1}));
    const TrainTestSplit moved = train_test_split(years, 2003);
    CHECK(moved.train.size() == 4);
    CHECK(moved.test.size() == 2);
}

TEST_CASE("window split by year keeps lag context but never leaks targets") {
    const auto samples = consecutive_days(Date{1999, 12, 25}, 14);  // crosses the cutoff
    auto windows = build_windows(samples, 5);
    const WindowSplit split = split_windows_by_year(std::move(windows), 1999);
    for (const auto& w : split.train) CHECK(w.date.year <= 1999);
    for (const auto& w : split.test) CHECK(w.date.year >= 2000);
    // The first test windows reach back into late-December days.
    REQUIRE(!split.test.empty());
    CHECK(split.test.front().date == Date{2000, 1, 1});
}

TEST_CASE("generate_synthetic: determinism and post-conditions") {
    SyntheticConfig cfg;
    cfg.height = 12;
    cfg.width = 12;
    cfg.n_days = 365;
    cfg.seed = 7;
    cfg.start = Date{2001, 1, 1};
    const auto a = generate_synthetic(cfg);
    const auto b = generate_synthetic(cfg);
    REQUIRE(a.size() == 365);

    SUBCASE("same seed, same dataset; different seed differs") {
        for (std::size_t d = 0; d < a.size(); ++d) {
            CHECK(bitwise_equal(a[d].input, b[d].input));
            CHECK(bitwise_equal(a[d].target, b[d].target));
        }
        SyntheticConfig other = cfg;
        other.seed = 8;
        CHECK(!bitwise_equal(generate_synthetic(other)[0].target, a[0].target));
    }
    SUBCASE("elevation channel is fixed across days") {
        const Grid e0 = slice_channels(a.front().input, 1, 1);
        for (const ClimateSample& s : a) CHECK(bitwise_equal(slice_channels(s.input, 1, 1), e0));
    }
    SUBCASE("targets are non-negative") {
        for (const ClimateSample& s : a)
            for (float v : s.target.data) CHECK(v >= 0.0f);
    }
    SUBCASE("precipitation channel has lag-1 autocorrelation >= 0.8") {
        const std::size_t points = std::size_t(cfg.height) * cfg.width;
        double corr_sum = 0.0;
        std::size_t counted = 0;
        for (std::size_t pt = 0; pt < points; ++pt) {
            double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
            const std::size_t n = a.size() - 1;
            for (std::size_t d = 0; d < n; ++d) {
                const double x = a[d].input.data[pt];          // channel 0
                const double y = a[d + 1].input.data[pt];
                sx += x; sy += y; sxx += x * x; syy += y * y; sxy += x * y;
            }
            const double cov = sxy / n - (sx / n) * (sy / n);
            const double vx = sxx / n - (sx / n) * (sx / n);
            const double vy = syy / n - (sy / n) * (sy / n);
            if (vx <= 0 || vy <= 0) continue;
            corr_sum += cov / std::sqrt(vx * vy);
            ++counted;
        }
        REQUIRE(counted > 0);
        CHECK(corr_sum / double(counted) >= 0.8);
    }
    SUBCASE("monsoon amplitude ratio lands in [2, 4]") {
        double monsoon_sum = 0, other_sum = 0;
        std::size_t monsoon_n = 0, other_n = 0;
        for (const ClimateSample& s : a) {
            double day_mean = 0;
            for (float v : s.target.data) day_mean += v;
            day_mean /= double(s.target.data.size());
            if (is_monsoon_month(s.date.month)) {
                monsoon_sum += day_mean;
                ++monsoon_n;
            } else {
                other_sum += day_mean;
                ++other_n;
            }
        }
        const double ratio = (monsoon_sum / double(monsoon_n)) / (other_sum / double(other_n));
        INFO("monsoon/non-monsoon ratio ", ratio);
        CHECK(ratio >= 2.0);
        CHECK(ratio <= 4.0);
    }
    SUBCASE("size and day-count floors are enforced") {
        SyntheticConfig bad = cfg;
        bad.height = 4;
        CHECK_THROWS_AS(generate_synthetic(bad), InvalidArgument);
        bad = cfg;
        bad.n_days = 5;
        CHECK_THROWS_AS(generate_synthetic(bad), InvalidArgument);
    }
}

TEST_CASE("GRD1 save/load round-trips bitwise") {
    SyntheticConfig cfg;
    cfg.height = 8;
    cfg.width = 9;
    cfg.n_days = 20;
    cfg.seed = 3;
    Dataset ds = make_dataset(generate_synthetic(cfg));
    ds.norm = NormalizationSpec{{ChannelScale{0, 1, 0, 50}, ChannelScale{-1, 1, 0, 1},
                                 ChannelScale{0, 9, 0, 1}, ChannelScale{0, 9, 0, 1},
                                 ChannelScale{0, 9, 0, 1}, ChannelScale{0, 9, 0, 1},
                                 ChannelScale{0, 9, 0, 1}},
                                ChannelScale{0.0, 123.456789012345, 0.0, 50.0}};
    const std::string path = temp_path("finerain_roundtrip.grd");
    save_grd(ds, path);
    const Dataset back = load_grd(path);

    REQUIRE(back.samples.size() == ds.samples.size());
    CHECK(back.channel_names == ds.channel_names);
    REQUIRE(back.norm.has_value());
    CHECK(*back.norm == *ds.norm);
    for (std::size_t d = 0; d < ds.samples.size(); ++d) {
        CHECK(back.samples[d].date == ds.samples[d].date);
        CHECK(bitwise_equal(back.samples[d].input, ds.samples[d].input));
        CHECK(bitwise_equal(back.samples[d].target, ds.samples[d].target));
    }
    std::filesystem::remove(path);
}

TEST_CASE("GRD1 parse errors carry byte offsets") {
    SyntheticConfig cfg;
    cfg.height = 8;
    cfg.width = 8;
    cfg.n_days = 10;
    const Dataset ds = make_dataset(generate_synthetic(cfg));
    const std::string path = temp_path("finerain_corrupt.grd");
    save_grd(ds, path);

    const auto read_all = [&]() {
        std::ifstream in(path, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    };
    const auto write_all = [&](const std::string& blob) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << blob;
    };

    SUBCASE("wrong magic fails at offset 0") {
        std::string blob = read_all();
        blob[0] = 'X';
        write_all(blob);
        try {
            load_grd(path);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.offset == 0);
        }
    }
    SUBCASE("truncated payload names the declared vs actual float counts") {
        std::string blob = read_all();
        // Drop one channel's worth of floats per day from the end.
        blob.resize(blob.size() - 4 * 8 * 8);
        write_all(blob);
        CHECK_THROWS_WITH_AS(load_grd(path), doctest::Contains("7 channels"), ParseError);
    }
    SUBCASE("negative target precipitation is rejected") {
        std::string blob = read_all();
        const float bad = -1.0f;
        std::memcpy(blob.data() + blob.size() - 4, &bad, 4);
        write_all(blob);
        CHECK_THROWS_WITH_AS(load_grd(path), doctest::Contains("negative"), ParseError);
    }
    std::filesystem::remove(path);
}
