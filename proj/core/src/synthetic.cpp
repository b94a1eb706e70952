// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "finerain/pipeline.hpp"
#include "finerain/rng.hpp"

namespace finerain {

namespace {

// Smooth standardized random field: white noise, three box-blur passes,
// then rescaled to zero mean / unit variance.
Grid smooth_field(int h, int w, Rng& rng) {
    std::vector<double> field(std::size_t(h) * w);
    for (double& v : field) v = rng.normal();
    const int radius = std::max(1, std::min(h, w) / 8);
    std::vector<double> tmp(field.size());
    for (int pass = 0; pass < 3; ++pass) {
        // horizontal
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                int n = 0;
                for (int dx = -radius; dx <= radius; ++dx) {
                    const int xx = x + dx;
                    if (xx < 0 || xx >= w) continue;
                    acc += field[std::size_t(y) * w + xx];
                    ++n;
                }
                tmp[std::size_t(y) * w + x] = acc / n;
            }
        // vertical
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                int n = 0;
                for (int dy = -radius; dy <= radius; ++dy) {
                    const int yy = y + dy;
                    if (yy < 0 || yy >= h) continue;
                    acc += tmp[std::size_t(yy) * w + x];
                    ++n;
                }
                field[std::size_t(y) * w + x] = acc / n;
            }
    }
    double mean = 0.0;
    for (double v : field) mean += v;
    mean /= double(field.size());
    double var = 0.0;
    for (double v : field) var += (v - mean) * (v - mean);
    var /= double(field.size());
    const double inv_sd = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
    Grid out(1, h, w);
    for (std::size_t i = 0; i < field.size(); ++i)
        out.data[i] = static_cast<float>((field[i] - mean) * inv_sd);
    return out;
}

// z <- phi * z + sqrt(1 - phi^2) * innovation keeps unit variance.
void ar1_advance(Grid& z, const Grid& innovation, double phi) {
    const double mix = std::sqrt(1.0 - phi * phi);
    for (std::size_t i = 0; i < z.data.size(); ++i)
        z.data[i] = static_cast<float>(phi * z.data[i] + mix * innovation.data[i]);
}

Grid coarse_view(const Grid& fine, int factor) {
    if (factor <= 1) return fine;
    return interpolate_to_grid(block_average(fine, factor), fine.height, fine.width);
}

}  // namespace

std::vector<ClimateSample> generate_synthetic(const SyntheticConfig& cfg) {
    cfg.validate();
    const int h = cfg.height, w = cfg.width;
    Rng rng(mix_seed(cfg.seed, 0x73796e7468ULL));

    // Fixed topography, clamped to non-negative meters.
    Grid elevation(1, h, w);
    {
        const Grid e = smooth_field(h, w, rng);
        for (std::size_t i = 0; i < elevation.data.size(); ++i)
            elevation.data[i] = std::max(0.0f, 500.0f + 400.0f * e.data[i]);
    }

    // Latent daily drivers: one per climate variable plus a noise channel.
    constexpr double kPhi = 0.95;
    constexpr int kLatents = 7;  // z0..z5 + noise driver
    std::vector<Grid> z;
    z.reserve(kLatents);
    for (int i = 0; i < kLatents; ++i) z.push_back(smooth_field(h, w, rng));

    std::vector<ClimateSample> samples;
    samples.reserve(std::size_t(cfg.n_days));
    const std::int64_t day0 = to_days(cfg.start);
    for (int d = 0; d < cfg.n_days; ++d) {
        if (d > 0)
            for (Grid& zi : z) {
                const Grid innovation = smooth_field(h, w, rng);
                ar1_advance(zi, innovation, kPhi);
            }
        const Date date = from_days(day0 + d);
        const double amp = is_monsoon_month(date.month) ? 3.0 : 1.0;

        // Fine-resolution truth: nonlinear mix of the drivers, modulated by
        // terrain, with season amplitude applied after the nonlinearity so
        // the monsoon/non-monsoon mean ratio stays at the amplitude factor.
        Grid target(1, h, w);
        for (std::int64_t i = 0; i < target.plane(); ++i) {
            const double base = 0.9 * z[0].data[i] + 0.5 * z[1].data[i] - 0.4 * z[2].data[i] +
                                0.35 * double(z[3].data[i]) * double(z[4].data[i]) +
                                0.15 * z[5].data[i] + 0.3;
            const double oro = 0.8 + 0.4 * double(elevation.data[i]) / 1000.0;
            const double f = base > 0.0 ? std::pow(base, 1.2) * oro : 0.0;
            const double noise = z[6].data[i] > 0.0 ? 0.5 * z[6].data[i] : 0.0;
            target.data[i] = static_cast<float>(amp * (6.0 * f + noise));
        }

        // Per-variable fine fields in native-ish units.
        Grid humidity(1, h, w), pressure(1, h, w), wind_u(1, h, w), wind_v(1, h, w),
            wind_w(1, h, w);
        for (std::int64_t i = 0; i < humidity.plane(); ++i) {
            humidity.data[i] = static_cast<float>(60.0 + 18.0 * z[1].data[i]);
            pressure.data[i] = static_cast<float>(1000.0 + 15.0 * z[2].data[i]);
            wind_u.data[i] = static_cast<float>(5.0 * z[3].data[i]);
            wind_v.data[i] = static_cast<float>(5.0 * z[4].data[i]);
            wind_w.data[i] = static_cast<float>(0.5 * z[5].data[i]);
        }

        // Coarse inputs: block-averaged then re-interpolated, so the inputs
        // honestly lack the fine-scale detail present in the target.
        ClimateSample s;
        s.date = date;
        Grid input = coarse_view(target, cfg.coarsen);
        input = concat_channels(input, elevation);
        input = concat_channels(input, coarse_view(humidity, cfg.coarsen));
        input = concat_channels(input, coarse_view(pressure, cfg.coarsen));
        input = concat_channels(input, coarse_view(wind_u, cfg.coarsen));
        input = concat_channels(input, coarse_view(wind_v, cfg.coarsen));
        input = concat_channels(input, coarse_view(wind_w, cfg.coarsen));
        s.input = std::move(input);
        s.target = std::move(target);
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace finerain
