// SPDX-License-Identifier: Apache-2.0
#include "finerain/qmap.hpp"

#include <algorithm>
#include <cmath>

#include "finerain/threading.hpp"

namespace finerain {

double hazen_quantile(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw InvalidArgument("hazen_quantile: empty sample");
    const int n = static_cast<int>(sorted.size());
    if (p <= hazen_position(1, n)) return sorted.front();
    if (p >= hazen_position(n, n)) return sorted.back();
    // p sits between positions of ranks j and j+1 (1-based):
    // (j - 0.5) / n <= p  =>  j = floor(p * n + 0.5)
    int j = static_cast<int>(std::floor(p * n + 0.5));
    j = std::clamp(j, 1, n - 1);
    const double pj = hazen_position(j, n);
    const double pj1 = hazen_position(j + 1, n);
    const double t = (p - pj) / (pj1 - pj);
    return sorted[std::size_t(j - 1)] + t * (sorted[std::size_t(j)] - sorted[std::size_t(j - 1)]);
}

QuantileMapModel fit_qmap(std::span<const Grid> model_series, std::span<const Grid> obs_series) {
    if (model_series.size() != obs_series.size())
        throw InvalidArgument("fit_qmap: series lengths differ (" +
                              std::to_string(model_series.size()) + " vs " +
                              std::to_string(obs_series.size()) + ")");
    if (model_series.size() < 2)
        throw FitError("fit_qmap: need at least 2 training days, got " +
                       std::to_string(model_series.size()));
    const Grid& first = model_series.front();
    for (const Grid& g : model_series) require_same_shape(g, first, "fit_qmap model series");
    for (const Grid& g : obs_series) require_same_shape(g, first, "fit_qmap obs series");
    if (first.channels != 1)
        throw ShapeError("fit_qmap: expected 1-channel precipitation grids, got " +
                         first.shape_str());

    QuantileMapModel qm;
    qm.height = first.height;
    qm.width = first.width;
    qm.n = static_cast<int>(model_series.size());
    const std::size_t points = std::size_t(qm.height) * qm.width;
    qm.model_sorted.resize(points * std::size_t(qm.n));
    qm.obs_sorted.resize(points * std::size_t(qm.n));
    for (std::size_t pt = 0; pt < points; ++pt) {
        float* ms = qm.model_sorted.data() + pt * std::size_t(qm.n);
        float* os = qm.obs_sorted.data() + pt * std::size_t(qm.n);
        for (int d = 0; d < qm.n; ++d) {
            ms[d] = model_series[std::size_t(d)].data[pt];
            os[d] = obs_series[std::size_t(d)].data[pt];
        }
        std::sort(ms, ms + qm.n);
        std::sort(os, os + qm.n);
    }
    return qm;
}

double apply_qmap(double value, int y, int x, const QuantileMapModel& qm) {
    if (!qm.fitted()) throw LookupError("apply_qmap: quantile map is not fitted");
    if (y < 0 || y >= qm.height || x < 0 || x >= qm.width)
        throw LookupError("apply_qmap: point (" + std::to_string(y) + ", " + std::to_string(x) +
                          ") outside fitted grid " + std::to_string(qm.height) + "x" +
                          std::to_string(qm.width));
    const std::span<const float> ms = qm.model_at(y, x);
    const std::span<const float> os = qm.obs_at(y, x);
    const int n = qm.n;

    double out;
    if (value <= double(ms.front())) {
        out = double(os.front()) + (value - double(ms.front()));
    } else if (value >= double(ms.back())) {
        out = double(os.back()) + (value - double(ms.back()));
    } else {
        // Rightmost rank i with model[i] <= value (ties collapse to the top
        // of the tied block), then the observed quantile at the same Hazen
        // probability.
        const auto it = std::upper_bound(ms.begin(), ms.end(), float(value));
        const int i = static_cast<int>(it - ms.begin());  // 1-based rank of the left anchor
        const double m_lo = double(ms[std::size_t(i - 1)]);
        const double m_hi = double(ms[std::size_t(i)]);
        const double t = (value - m_lo) / (m_hi - m_lo);
        const double p = hazen_position(i, n) + t * (hazen_position(i + 1, n) - hazen_position(i, n));
        // Invert the observed CDF at p.
        int j = static_cast<int>(std::floor(p * n + 0.5));
        j = std::clamp(j, 1, n - 1);
        const double u = (p - hazen_position(j, n)) / (hazen_position(j + 1, n) - hazen_position(j, n));
        out = double(os[std::size_t(j - 1)]) +
              u * (double(os[std::size_t(j)]) - double(os[std::size_t(j - 1)]));
    }
    return out < 0.0 ? 0.0 : out;  // precipitation floor
}

std::vector<Grid> downscale_qmap(std::span<const Grid> model_series, const QuantileMapModel& qm,
                                 int threads) {
    if (!qm.fitted()) throw LookupError("downscale_qmap: quantile map is not fitted");
    for (const Grid& g : model_series)
        if (g.channels != 1 || g.height != qm.height || g.width != qm.width)
            throw ShapeError("downscale_qmap: grid " + g.shape_str() + " vs fitted 1x" +
                             std::to_string(qm.height) + "x" + std::to_string(qm.width));
    std::vector<Grid> mapped(model_series.size());
    parallel_for(model_series.size(), threads, [&](std::size_t d) {
        const Grid& day = model_series[d];
        Grid out(1, qm.height, qm.width);
        for (int y = 0; y < qm.height; ++y)
            for (int x = 0; x < qm.width; ++x)
                out.at(0, y, x) =
                    static_cast<float>(apply_qmap(double(day.at(0, y, x)), y, x, qm));
        mapped[d] = std::move(out);
    });
    return mapped;
}

}  // namespace finerain
