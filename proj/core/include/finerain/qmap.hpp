// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "finerain/grid.hpp"

namespace finerain {

// Hazen plotting position of 1-based rank i among n: (i - 0.5) / n.
inline double hazen_position(int i, int n) { return (double(i) - 0.5) / double(n); }

// Empirical quantile of an ascending-sorted sample at probability p: linear
// interpolation between Hazen positions, clamped to the extremes outside
// them. The one quantile estimator used everywhere in this project.
double hazen_quantile(std::span<const double> sorted, double p);

// Per-grid-point empirical CDF pairing between model output and observations
// over a common training period. No parametric fit, just the two sorted
// marginal samples per point.
struct QuantileMapModel {
    int height = 0;
    int width = 0;
    int n = 0;  // training days per point, >= 2
    // Point-major: values for point (y, x) live at [(y * width + x) * n, ... + n).
    std::vector<float> model_sorted;
    std::vector<float> obs_sorted;

    bool fitted() const { return n >= 2; }
    std::span<const float> model_at(int y, int x) const {
        return {model_sorted.data() + (std::size_t(y) * width + x) * n, std::size_t(n)};
    }
    std::span<const float> obs_at(int y, int x) const {
        return {obs_sorted.data() + (std::size_t(y) * width + x) * n, std::size_t(n)};
    }
};

// Builds the per-point sorted samples. Both series must be aligned daily
// 1 x H x W grids of equal length >= 2.
QuantileMapModel fit_qmap(std::span<const Grid> model_series, std::span<const Grid> obs_series);

// CDF-inversion transfer at one grid point: rank `value` in the model sample
// (Hazen positions, linear interpolation), read the observed quantile at that
// probability, floor at zero. Beyond the training range the map extrapolates
// by a constant offset so projected exceedances survive bias correction.
double apply_qmap(double value, int y, int x, const QuantileMapModel& qm);

// Pointwise mapping of a daily precipitation series (1-channel grids).
std::vector<Grid> downscale_qmap(std::span<const Grid> model_series, const QuantileMapModel& qm,
                                 int threads = 1);

}  // namespace finerain
