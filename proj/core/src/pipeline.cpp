// SPDX-License-Identifier: Apache-2.0
#include "finerain/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace finerain {

NormalizationSpec fit_normalization(std::span<const ClimateSample> train) {
    if (train.empty()) throw FitError("fit_normalization: no training samples");
    const int channels = train.front().input.channels;
    NormalizationSpec spec;
    spec.inputs.assign(std::size_t(channels), ChannelScale{});
    std::vector<double> lo(std::size_t(channels), std::numeric_limits<double>::infinity());
    std::vector<double> hi(std::size_t(channels), -std::numeric_limits<double>::infinity());
    double tlo = std::numeric_limits<double>::infinity(), thi = -tlo;
    for (const ClimateSample& s : train) {
        if (s.input.channels != channels)
            throw ShapeError("fit_normalization: inconsistent channel counts");
        for (int c = 0; c < channels; ++c) {
            const float* p = s.input.channel_ptr(c);
            for (std::int64_t i = 0; i < s.input.plane(); ++i) {
                lo[std::size_t(c)] = std::min(lo[std::size_t(c)], double(p[i]));
                hi[std::size_t(c)] = std::max(hi[std::size_t(c)], double(p[i]));
            }
        }
        for (float v : s.target.data) {
            tlo = std::min(tlo, double(v));
            thi = std::max(thi, double(v));
        }
    }
    for (int c = 0; c < channels; ++c) {
        if (!(hi[std::size_t(c)] > lo[std::size_t(c)])) {
            const std::string name = c < int(kInputChannelNames.size())
                                         ? kInputChannelNames[std::size_t(c)]
                                         : ("channel " + std::to_string(c));
            throw FitError("fit_normalization: degenerate channel " + std::to_string(c) + " (" +
                           name + "): min == max == " + std::to_string(lo[std::size_t(c)]));
        }
        // Precipitation gets the wide [0,50] range, everything else [0,1].
        const double target_hi = c == 0 ? 50.0 : 1.0;
        spec.inputs[std::size_t(c)] = ChannelScale{lo[std::size_t(c)], hi[std::size_t(c)], 0.0,
                                                   target_hi};
    }
    if (!(thi > tlo)) throw FitError("fit_normalization: degenerate target (min == max)");
    spec.target = ChannelScale{tlo, thi, 0.0, 50.0};
    return spec;
}

Grid normalize(const Grid& g, std::span<const ChannelScale> scales) {
    if (std::int64_t(scales.size()) != g.channels)
        throw ShapeError("normalize: " + std::to_string(scales.size()) + " scales for " +
                         std::to_string(g.channels) + " channels");
    Grid out = g;
    for (int c = 0; c < g.channels; ++c) {
        const ChannelScale& s = scales[std::size_t(c)];
        if (!(s.max > s.min))
            throw FitError("normalize: degenerate scale on channel " + std::to_string(c));
        const double k = (s.hi - s.lo) / (s.max - s.min);
        float* p = out.channel_ptr(c);
        for (std::int64_t i = 0; i < out.plane(); ++i)
            p[i] = static_cast<float>(s.lo + (double(p[i]) - s.min) * k);
    }
    return out;
}

Grid denormalize(const Grid& g, std::span<const ChannelScale> scales) {
    if (std::int64_t(scales.size()) != g.channels)
        throw ShapeError("denormalize: " + std::to_string(scales.size()) + " scales for " +
                         std::to_string(g.channels) + " channels");
    Grid out = g;
    for (int c = 0; c < g.channels; ++c) {
        const ChannelScale& s = scales[std::size_t(c)];
        if (!(s.hi > s.lo))
            throw FitError("denormalize: degenerate target range on channel " + std::to_string(c));
        const double k = (s.max - s.min) / (s.hi - s.lo);
        float* p = out.channel_ptr(c);
        for (std::int64_t i = 0; i < out.plane(); ++i)
            p[i] = static_cast<float>(s.min + (double(p[i]) - s.lo) * k);
    }
    return out;
}

Grid normalize_target(const Grid& g, const NormalizationSpec& spec) {
    return normalize(g, std::span<const ChannelScale>(&spec.target, 1));
}

Grid denormalize_target(const Grid& g, const NormalizationSpec& spec) {
    return denormalize(g, std::span<const ChannelScale>(&spec.target, 1));
}

Grid interpolate_to_grid(const Grid& coarse, int target_h, int target_w) {
    if (coarse.height < 2 || coarse.width < 2)
        throw InvalidArgument("interpolate_to_grid: source must be at least 2x2, got " +
                              coarse.shape_str());
    if (target_h < coarse.height || target_w < coarse.width)
        throw InvalidArgument("interpolate_to_grid: target " + std::to_string(target_h) + "x" +
                              std::to_string(target_w) + " smaller than source " +
                              coarse.shape_str() + " (upsampling only)");
    Grid out(coarse.channels, target_h, target_w);
    const double sy = double(coarse.height - 1) / double(target_h - 1);
    const double sx = double(coarse.width - 1) / double(target_w - 1);
    for (int c = 0; c < coarse.channels; ++c) {
        const float* src = coarse.channel_ptr(c);
        float* dst = out.channel_ptr(c);
        for (int y = 0; y < target_h; ++y) {
            const double fy = y * sy;
            const int y0 = std::min(int(fy), coarse.height - 2);
            const double wy = fy - y0;
            for (int x = 0; x < target_w; ++x) {
                const double fx = x * sx;
                const int x0 = std::min(int(fx), coarse.width - 2);
                const double wx = fx - x0;
                const double v00 = src[std::int64_t(y0) * coarse.width + x0];
                const double v01 = src[std::int64_t(y0) * coarse.width + x0 + 1];
                const double v10 = src[std::int64_t(y0 + 1) * coarse.width + x0];
                const double v11 = src[std::int64_t(y0 + 1) * coarse.width + x0 + 1];
                const double top = v00 + (v01 - v00) * wx;
                const double bot = v10 + (v11 - v10) * wx;
                dst[std::int64_t(y) * target_w + x] = static_cast<float>(top + (bot - top) * wy);
            }
        }
    }
    return out;
}

Grid block_average(const Grid& fine, int factor) {
    if (factor < 1) throw InvalidArgument("block_average: factor must be >= 1");
    const int ch = (fine.height + factor - 1) / factor;
    const int cw = (fine.width + factor - 1) / factor;
    Grid out(fine.channels, ch, cw);
    for (int c = 0; c < fine.channels; ++c) {
        const float* src = fine.channel_ptr(c);
        float* dst = out.channel_ptr(c);
        for (int by = 0; by < ch; ++by) {
            for (int bx = 0; bx < cw; ++bx) {
                const int y1 = std::min((by + 1) * factor, fine.height);
                const int x1 = std::min((bx + 1) * factor, fine.width);
                double acc = 0.0;
                int count = 0;
                for (int y = by * factor; y < y1; ++y)
                    for (int x = bx * factor; x < x1; ++x, ++count)
                        acc += src[std::int64_t(y) * fine.width + x];
                dst[std::int64_t(by) * cw + bx] = static_cast<float>(acc / count);
            }
        }
    }
    return out;
}

std::vector<SequenceWindow> build_windows(std::span<const ClimateSample> samples, int window_len) {
    if (window_len < 1) throw InvalidArgument("build_windows: window length must be >= 1");
    std::vector<SequenceWindow> windows;
    if (std::int64_t(samples.size()) < window_len) return windows;
    for (std::size_t i = 0; i + 1 < samples.size(); ++i)
        if (to_days(samples[i + 1].date) <= to_days(samples[i].date))
            throw InvalidArgument("build_windows: samples not strictly chronological at " +
                                  to_iso(samples[i + 1].date));
    for (std::size_t end = std::size_t(window_len) - 1; end < samples.size(); ++end) {
        bool consecutive = true;
        for (std::size_t j = end - std::size_t(window_len) + 1; j < end; ++j)
            if (to_days(samples[j + 1].date) != to_days(samples[j].date) + 1) {
                consecutive = false;
                break;
            }
        if (!consecutive) continue;
        SequenceWindow w;
        w.inputs.reserve(std::size_t(window_len));
        for (std::size_t j = end - std::size_t(window_len) + 1; j <= end; ++j)
            w.inputs.push_back(samples[j].input);
        w.target = samples[end].target;
        w.date = samples[end].date;
        windows.push_back(std::move(w));
    }
    return windows;
}

MonsoonSplit split_monsoon(std::span<const ClimateSample> samples) {
    MonsoonSplit split;
    for (const ClimateSample& s : samples)
        (is_monsoon_month(s.date.month) ? split.monsoon : split.non_monsoon).push_back(s);
    return split;
}

SeasonSplit split_seasons(std::span<const ClimateSample> samples) {
    SeasonSplit split;
    for (const ClimateSample& s : samples) {
        switch (season_of(s.date.month)) {
            case Season::DJF: split.djf.push_back(s); break;
            case Season::MAM: split.mam.push_back(s); break;
            case Season::JJA: split.jja.push_back(s); break;
            case Season::SON: split.son.push_back(s); break;
        }
    }
    return split;
}

TrainTestSplit train_test_split(std::span<const ClimateSample> samples, int cutoff_year) {
    TrainTestSplit split;
    for (const ClimateSample& s : samples)
        (s.date.year <= cutoff_year ? split.train : split.test).push_back(s);
    return split;
}

WindowSplit split_windows_by_year(std::vector<SequenceWindow> windows, int cutoff_year) {
    WindowSplit split;
    for (SequenceWindow& w : windows)
        (w.date.year <= cutoff_year ? split.train : split.test).push_back(std::move(w));
    return split;
}

void SyntheticConfig::validate() const {
    if (height < 8 || width < 8)
        throw InvalidArgument("generate_synthetic: grid must be at least 8x8");
    if (n_days < 10) throw InvalidArgument("generate_synthetic: need at least 10 days");
    if (coarsen < 1) throw InvalidArgument("generate_synthetic: coarsen factor must be >= 1");
    if (!is_valid(start)) throw InvalidArgument("generate_synthetic: invalid start date");
}

}  // namespace finerain
