// SPDX-License-Identifier: Apache-2.0
#include "finerain/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "finerain/qmap.hpp"
#include "finerain/textio.hpp"

namespace finerain {

namespace {

void require_aligned(std::span<const Grid> preds, std::span<const Grid> targets, const char* op) {
    if (preds.empty()) throw InvalidArgument(std::string(op) + ": empty series");
    if (preds.size() != targets.size())
        throw InvalidArgument(std::string(op) + ": series lengths differ (" +
                              std::to_string(preds.size()) + " vs " +
                              std::to_string(targets.size()) + ")");
    for (std::size_t d = 0; d < preds.size(); ++d)
        require_same_shape(preds[d], targets[d], op);
}

enum class PointStat { Rmse, Bias, Signed };

Grid point_stat_map(std::span<const Grid> preds, std::span<const Grid> targets, PointStat stat,
                    const char* op) {
    require_aligned(preds, targets, op);
    const Grid& first = preds.front();
    Grid out(first.channels, first.height, first.width);
    std::vector<double> acc(out.data.size(), 0.0);
    for (std::size_t d = 0; d < preds.size(); ++d) {
        const Grid& p = preds[d];
        const Grid& o = targets[d];
        for (std::size_t i = 0; i < acc.size(); ++i) {
            const double e = double(p.data[i]) - double(o.data[i]);
            switch (stat) {
                case PointStat::Rmse: acc[i] += e * e; break;
                case PointStat::Bias: acc[i] += std::abs(e); break;
                case PointStat::Signed: acc[i] += e; break;
            }
        }
    }
    const double inv_n = 1.0 / double(preds.size());
    for (std::size_t i = 0; i < acc.size(); ++i) {
        const double m = acc[i] * inv_n;
        out.data[i] = static_cast<float>(stat == PointStat::Rmse ? std::sqrt(m) : m);
    }
    return out;
}

std::vector<double> default_qq_probs() {
    std::vector<double> probs;
    for (int i = 1; i <= 99; ++i) probs.push_back(i / 100.0);
    probs.push_back(0.995);
    probs.push_back(0.999);
    return probs;
}

std::string qq_csv(const std::vector<QQPoint>& qq) {
    std::string text = "prob,obs_quantile,pred_quantile\n";
    for (const QQPoint& q : qq)
        text += format_float(q.prob) + "," + format_float(q.obs_quantile) + "," +
                format_float(q.pred_quantile) + "\n";
    return text;
}

void write_file(const std::string& path, const std::string& text,
                std::vector<std::string>& written) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("write_report: cannot open '" + path + "' for writing");
    out << text;
    written.push_back(path);
}

}  // namespace

Grid rmse_map(std::span<const Grid> preds, std::span<const Grid> targets) {
    return point_stat_map(preds, targets, PointStat::Rmse, "rmse_map");
}

Grid bias_map(std::span<const Grid> preds, std::span<const Grid> targets) {
    return point_stat_map(preds, targets, PointStat::Bias, "bias_map");
}

Grid signed_error_map(std::span<const Grid> preds, std::span<const Grid> targets) {
    return point_stat_map(preds, targets, PointStat::Signed, "signed_error_map");
}

double aggregate(const Grid& map, const Grid* land_mask) {
    double acc = 0.0;
    std::int64_t count = 0;
    if (land_mask != nullptr) {
        require_same_shape(map, *land_mask, "aggregate mask");
        for (std::size_t i = 0; i < map.data.size(); ++i) {
            if (land_mask->data[i] == 0.0f) continue;
            acc += double(map.data[i]);
            ++count;
        }
        if (count == 0) throw InvalidArgument("aggregate: mask excludes every point");
    } else {
        for (float v : map.data) acc += double(v);
        count = std::int64_t(map.data.size());
    }
    return acc / double(count);
}

std::vector<ExtremesRow> extremes_analysis(std::span<const Grid> preds,
                                           std::span<const Grid> targets,
                                           std::span<const double> thresholds) {
    require_aligned(preds, targets, "extremes_analysis");
    for (std::size_t i = 0; i + 1 < thresholds.size(); ++i)
        if (!(thresholds[i] < thresholds[i + 1]))
            throw InvalidArgument("extremes_analysis: thresholds must be strictly increasing");

    const Grid& first = preds.front();
    const std::size_t points = first.data.size();
    const std::size_t n_days = preds.size();

    std::vector<ExtremesRow> table;
    std::vector<double> obs_sorted(n_days);
    std::vector<double> point_rmse, point_bias;
    point_rmse.reserve(points);
    point_bias.reserve(points);

    for (double q : thresholds) {
        ExtremesRow row;
        row.threshold = q;
        point_rmse.clear();
        point_bias.clear();
        for (std::size_t pt = 0; pt < points; ++pt) {
            double cut = -std::numeric_limits<double>::infinity();
            if (q > 0.0) {
                for (std::size_t d = 0; d < n_days; ++d)
                    obs_sorted[d] = double(targets[d].data[pt]);
                std::sort(obs_sorted.begin(), obs_sorted.end());
                cut = hazen_quantile(obs_sorted, q / 100.0);
            }
            double se = 0.0, ae = 0.0;
            std::size_t selected = 0;
            for (std::size_t d = 0; d < n_days; ++d) {
                const double o = double(targets[d].data[pt]);
                if (!(o > cut)) continue;
                const double e = double(preds[d].data[pt]) - o;
                se += e * e;
                ae += std::abs(e);
                ++selected;
            }
            if (selected == 0) continue;  // no exceedance at this point
            point_rmse.push_back(std::sqrt(se / double(selected)));
            point_bias.push_back(ae / double(selected));
        }
        if (!point_rmse.empty()) {
            row.present = true;
            std::sort(point_rmse.begin(), point_rmse.end());
            std::sort(point_bias.begin(), point_bias.end());
            double rsum = 0.0, bsum = 0.0;
            for (double v : point_rmse) rsum += v;
            for (double v : point_bias) bsum += v;
            row.rmse_mean = rsum / double(point_rmse.size());
            row.bias_mean = bsum / double(point_bias.size());
            row.rmse_q25 = hazen_quantile(point_rmse, 0.25);
            row.rmse_q75 = hazen_quantile(point_rmse, 0.75);
            row.bias_q25 = hazen_quantile(point_bias, 0.25);
            row.bias_q75 = hazen_quantile(point_bias, 0.75);
        }
        table.push_back(row);
    }
    return table;
}

std::vector<QQPoint> qq_data(std::span<const double> pred_values,
                             std::span<const double> obs_values, std::span<const double> probs) {
    if (pred_values.empty() || obs_values.empty())
        throw InvalidArgument("qq_data: empty series");
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (!(probs[i] > 0.0 && probs[i] < 1.0))
            throw InvalidArgument("qq_data: probabilities must lie in (0, 1)");
        if (i > 0 && !(probs[i] > probs[i - 1]))
            throw InvalidArgument("qq_data: probabilities must be strictly increasing");
    }
    std::vector<double> ps(pred_values.begin(), pred_values.end());
    std::vector<double> os(obs_values.begin(), obs_values.end());
    std::sort(ps.begin(), ps.end());
    std::sort(os.begin(), os.end());
    std::vector<QQPoint> out;
    out.reserve(probs.size());
    for (double p : probs)
        out.push_back(QQPoint{p, hazen_quantile(os, p), hazen_quantile(ps, p)});
    return out;
}

SeasonReport season_report(std::span<const Grid> preds, std::span<const Grid> targets,
                           std::span<const Date> dates) {
    require_aligned(preds, targets, "season_report");
    if (dates.size() != preds.size())
        throw InvalidArgument("season_report: dates not aligned with series");

    const auto subset_stats = [&](const std::vector<std::size_t>& idx, const std::string& name) {
        SeasonRow row;
        row.name = name;
        if (idx.empty()) return row;  // absent, not zero
        std::vector<Grid> p, o;
        p.reserve(idx.size());
        o.reserve(idx.size());
        for (std::size_t i : idx) {
            p.push_back(preds[i]);
            o.push_back(targets[i]);
        }
        row.present = true;
        row.rmse = aggregate(rmse_map(p, o));
        row.bias = aggregate(bias_map(p, o));
        return row;
    };

    std::vector<std::size_t> by_season[4];
    std::vector<std::size_t> monsoon, non_monsoon;
    for (std::size_t d = 0; d < dates.size(); ++d) {
        by_season[std::size_t(season_of(dates[d].month))].push_back(d);
        (is_monsoon_month(dates[d].month) ? monsoon : non_monsoon).push_back(d);
    }

    SeasonReport report;
    report.seasons.push_back(subset_stats(by_season[0], "DJF"));
    report.seasons.push_back(subset_stats(by_season[1], "MAM"));
    report.seasons.push_back(subset_stats(by_season[2], "JJA"));
    report.seasons.push_back(subset_stats(by_season[3], "SON"));
    report.periods.push_back(subset_stats(monsoon, "monsoon"));
    report.periods.push_back(subset_stats(non_monsoon, "non_monsoon"));
    return report;
}

EvalReport evaluate(const DailySeries& pred, const DailySeries& obs, const EvalOptions& opts) {
    if (pred.unit != Unit::MmPerDay || obs.unit != Unit::MmPerDay)
        throw InvalidArgument("evaluate: metrics require de-normalized (mm/day) series");
    if (pred.days.size() != pred.dates.size() || obs.days.size() != obs.dates.size())
        throw InvalidArgument("evaluate: series/dates length mismatch");
    if (pred.dates.size() != obs.dates.size())
        throw InvalidArgument("evaluate: series lengths differ (" +
                              std::to_string(pred.dates.size()) + " vs " +
                              std::to_string(obs.dates.size()) + ")");
    for (std::size_t d = 0; d < pred.dates.size(); ++d)
        if (pred.dates[d] != obs.dates[d])
            throw InvalidArgument("evaluate: date mismatch at index " + std::to_string(d) + ": " +
                                  to_iso(pred.dates[d]) + " vs " + to_iso(obs.dates[d]));

    EvalReport report;
    report.method = opts.method;
    report.rmse_map = rmse_map(pred.days, obs.days);
    report.bias_map = bias_map(pred.days, obs.days);
    report.rmse = aggregate(report.rmse_map, opts.land_mask);
    report.bias = aggregate(report.bias_map, opts.land_mask);
    report.signed_mean_error = aggregate(signed_error_map(pred.days, obs.days), opts.land_mask);
    report.by_season = season_report(pred.days, obs.days, pred.dates);
    report.extremes = extremes_analysis(pred.days, obs.days, opts.extremes_thresholds);

    const std::vector<double> probs =
        opts.qq_probs.empty() ? default_qq_probs() : opts.qq_probs;

    std::vector<double> pooled_pred, pooled_obs;
    pooled_pred.reserve(pred.days.size() * pred.days.front().data.size());
    pooled_obs.reserve(pooled_pred.capacity());
    std::vector<double> mean_pred, mean_obs;
    for (std::size_t d = 0; d < pred.days.size(); ++d) {
        double ps = 0.0, os = 0.0;
        for (float v : pred.days[d].data) {
            pooled_pred.push_back(double(v));
            ps += double(v);
        }
        for (float v : obs.days[d].data) {
            pooled_obs.push_back(double(v));
            os += double(v);
        }
        mean_pred.push_back(ps / double(pred.days[d].data.size()));
        mean_obs.push_back(os / double(obs.days[d].data.size()));
    }
    report.qq_pooled = qq_data(pooled_pred, pooled_obs, probs);
    report.qq_gridmean = qq_data(mean_pred, mean_obs, probs);

    for (const auto& [y, x] : opts.qq_points) {
        const Grid& g = pred.days.front();
        if (y < 0 || y >= g.height || x < 0 || x >= g.width)
            throw InvalidArgument("evaluate: QQ point (" + std::to_string(y) + ", " +
                                  std::to_string(x) + ") outside grid " + g.shape_str());
        std::vector<double> pp, oo;
        pp.reserve(pred.days.size());
        oo.reserve(pred.days.size());
        for (std::size_t d = 0; d < pred.days.size(); ++d) {
            pp.push_back(double(pred.days[d].at(0, y, x)));
            oo.push_back(double(obs.days[d].at(0, y, x)));
        }
        report.qq_per_point.emplace_back(std::make_pair(y, x), qq_data(pp, oo, probs));
    }
    return report;
}

std::vector<std::string> write_report(const EvalReport& report, const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> written;

    write_file(dir + "/overall.csv",
               "method,rmse,bias,signed_mean_error\n" + report.method + "," +
                   format_float(report.rmse) + "," + format_float(report.bias) + "," +
                   format_float(report.signed_mean_error) + "\n",
               written);

    std::string seasons = "season,rmse,bias\n";
    for (const SeasonRow& row : report.by_season.seasons) {
        if (!row.present) continue;
        seasons += row.name + "," + format_float(row.rmse) + "," + format_float(row.bias) + "\n";
    }
    write_file(dir + "/seasons.csv", seasons, written);

    std::string periods = "period,rmse,bias\n";
    for (const SeasonRow& row : report.by_season.periods) {
        if (!row.present) continue;
        periods += row.name + "," + format_float(row.rmse) + "," + format_float(row.bias) + "\n";
    }
    write_file(dir + "/periods.csv", periods, written);

    std::string extremes = "threshold,rmse_mean,rmse_q25,rmse_q75,bias_mean,bias_q25,bias_q75\n";
    for (const ExtremesRow& row : report.extremes) {
        if (!row.present) continue;
        extremes += format_float(row.threshold) + "," + format_float(row.rmse_mean) + "," +
                    format_float(row.rmse_q25) + "," + format_float(row.rmse_q75) + "," +
                    format_float(row.bias_mean) + "," + format_float(row.bias_q25) + "," +
                    format_float(row.bias_q75) + "\n";
    }
    write_file(dir + "/extremes.csv", extremes, written);

    write_file(dir + "/qq_pooled.csv", qq_csv(report.qq_pooled), written);
    write_file(dir + "/qq_gridmean.csv", qq_csv(report.qq_gridmean), written);
    for (const auto& [pt, qq] : report.qq_per_point)
        write_file(dir + "/qq_point_" + std::to_string(pt.first) + "_" +
                       std::to_string(pt.second) + ".csv",
                   qq_csv(qq), written);

    const auto map_csv = [](const Grid& g) {
        std::string text;
        for (int y = 0; y < g.height; ++y) {
            for (int x = 0; x < g.width; ++x) {
                if (x > 0) text += ",";
                text += format_float(double(g.at(0, y, x)));
            }
            text += "\n";
        }
        return text;
    };
    write_file(dir + "/rmse_map.csv", map_csv(report.rmse_map), written);
    write_file(dir + "/bias_map.csv", map_csv(report.bias_map), written);

    nlohmann::json summary;
    summary["method"] = report.method;
    summary["rmse"] = report.rmse;
    summary["bias"] = report.bias;
    summary["signed_mean_error"] = report.signed_mean_error;
    for (const SeasonRow& row : report.by_season.seasons)
        summary["seasons"][row.name] =
            row.present ? nlohmann::json{{"rmse", row.rmse}, {"bias", row.bias}}
                        : nlohmann::json(nullptr);
    for (const SeasonRow& row : report.by_season.periods)
        summary["periods"][row.name] =
            row.present ? nlohmann::json{{"rmse", row.rmse}, {"bias", row.bias}}
                        : nlohmann::json(nullptr);
    summary["extremes"] = nlohmann::json::array();
    for (const ExtremesRow& row : report.extremes) {
        if (!row.present) continue;
        summary["extremes"].push_back({{"threshold", row.threshold},
                                       {"rmse_mean", row.rmse_mean},
                                       {"rmse_q25", row.rmse_q25},
                                       {"rmse_q75", row.rmse_q75},
                                       {"bias_mean", row.bias_mean},
                                       {"bias_q25", row.bias_q25},
                                       {"bias_q75", row.bias_q75}});
    }
    write_file(dir + "/summary.json", summary.dump(2) + "\n", written);
    return written;
}

}  // namespace finerain
