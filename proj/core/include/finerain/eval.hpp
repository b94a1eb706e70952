// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "finerain/date.hpp"
#include "finerain/grid.hpp"

namespace finerain {

enum class Unit { MmPerDay, Normalized };

// A daily 1-channel series tagged with its unit. Metrics only accept
// mm/day; normalized values must be denormalized before evaluation.
struct DailySeries {
    std::vector<Grid> days;
    std::vector<Date> dates;
    Unit unit = Unit::MmPerDay;
};

// Per-grid-point sqrt(mean_t (p - o)^2) over an aligned daily series.
Grid rmse_map(std::span<const Grid> preds, std::span<const Grid> targets);
// Per-grid-point mean_t |p - o| (the paper-style "Bias").
Grid bias_map(std::span<const Grid> preds, std::span<const Grid> targets);
// Per-grid-point mean_t (p - o), kept for sanity alongside the above.
Grid signed_error_map(std::span<const Grid> preds, std::span<const Grid> targets);

// Spatial mean over unmasked points (mask nonzero = keep; null = all).
double aggregate(const Grid& map, const Grid* land_mask = nullptr);

struct ExtremesRow {
    double threshold = 0.0;  // percentile in [90, 99.9] (0 = degenerate all-days)
    bool present = false;    // false when no point had an exceedance
    double rmse_mean = 0.0, rmse_q25 = 0.0, rmse_q75 = 0.0;
    double bias_mean = 0.0, bias_q25 = 0.0, bias_q75 = 0.0;
};

// Event-conditional errors: per point, select days whose OBSERVED value
// exceeds that point's q-th Hazen percentile of observations, compute RMSE
// and Bias over those days, then report the spatial mean and the 25th/75th
// spatial quantiles of the per-point values. Points without an exceedance
// are skipped at that threshold. A non-positive threshold selects all days.
std::vector<ExtremesRow> extremes_analysis(std::span<const Grid> preds,
                                           std::span<const Grid> targets,
                                           std::span<const double> thresholds);

struct QQPoint {
    double prob = 0.0;
    double obs_quantile = 0.0;
    double pred_quantile = 0.0;
};

// Hazen quantile pairs of two samples at the given strictly increasing
// probabilities in (0, 1). Callers choose the pooling.
std::vector<QQPoint> qq_data(std::span<const double> pred_values,
                             std::span<const double> obs_values, std::span<const double> probs);

struct SeasonRow {
    std::string name;
    bool present = false;
    double rmse = 0.0;
    double bias = 0.0;
};

struct SeasonReport {
    std::vector<SeasonRow> seasons;  // DJF, MAM, JJA, SON
    std::vector<SeasonRow> periods;  // monsoon, non_monsoon
};

SeasonReport season_report(std::span<const Grid> preds, std::span<const Grid> targets,
                           std::span<const Date> dates);

struct EvalOptions {
    std::string method = "pred";
    std::vector<double> extremes_thresholds = {90.0, 95.0, 98.0, 99.0, 99.9};
    std::vector<double> qq_probs;                   // empty = 0.01..0.99 + 0.995, 0.999
    std::vector<std::pair<int, int>> qq_points;     // (y, x) per-point QQ curves
    const Grid* land_mask = nullptr;
};

struct EvalReport {
    std::string method;
    double rmse = 0.0;
    double bias = 0.0;
    double signed_mean_error = 0.0;
    Grid rmse_map, bias_map;
    SeasonReport by_season;
    std::vector<ExtremesRow> extremes;
    std::vector<QQPoint> qq_pooled;    // all (day, point) values pooled
    std::vector<QQPoint> qq_gridmean;  // series of per-day spatial means
    std::vector<std::pair<std::pair<int, int>, std::vector<QQPoint>>> qq_per_point;
};

// Full evaluation of a prediction series against observations. Both series
// must be mm/day (unit-tag enforced), date-aligned, and shape-aligned.
EvalReport evaluate(const DailySeries& pred, const DailySeries& obs, const EvalOptions& opts);

// Writes overall/periods/seasons/extremes/qq CSVs, the per-point error maps,
// and summary.json under `dir` (created if missing). Returns written paths.
std::vector<std::string> write_report(const EvalReport& report, const std::string& dir);

}  // namespace finerain
