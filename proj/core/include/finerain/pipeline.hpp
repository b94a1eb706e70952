// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "finerain/date.hpp"
#include "finerain/grid.hpp"

namespace finerain {

// Fixed channel order of every 7-channel input grid.
inline constexpr std::array<const char*, 7> kInputChannelNames = {
    "precipitation", "elevation", "relative_humidity", "pressure",
    "wind_u",        "wind_v",    "wind_w"};

// One day of data: multi-channel coarse-origin input grid (already
// interpolated to the observation lattice) plus the observed fine-resolution
// precipitation target. Units are native (precipitation mm/day).
struct ClimateSample {
    Date date;
    Grid input;   // channels x H x W
    Grid target;  // 1 x H x W, >= 0
};

// Affine map fitted per channel on training data only.
struct ChannelScale {
    double min = 0.0, max = 1.0;  // fitted data range
    double lo = 0.0, hi = 1.0;    // target range

    bool operator==(const ChannelScale&) const = default;
};

// Input channels map to [0,1] except precipitation (channel 0) to [0,50];
// the observed target also maps to [0,50].
struct NormalizationSpec {
    std::vector<ChannelScale> inputs;
    ChannelScale target;

    bool operator==(const NormalizationSpec&) const = default;
};

// Scans training samples for per-channel min/max. Throws FitError naming the
// channel when a channel is constant (max == min).
NormalizationSpec fit_normalization(std::span<const ClimateSample> train);

// x' = lo + (x - min) * (hi - lo) / (max - min), per channel. Values outside
// the fitted range extrapolate (test years may exceed training extremes).
Grid normalize(const Grid& g, std::span<const ChannelScale> scales);
Grid denormalize(const Grid& g, std::span<const ChannelScale> scales);
Grid normalize_target(const Grid& g, const NormalizationSpec& spec);
Grid denormalize_target(const Grid& g, const NormalizationSpec& spec);

// Corner-aligned bilinear upsampling onto target_h x target_w. Exact on
// fields affine in (y, x); never overshoots the source range.
Grid interpolate_to_grid(const Grid& coarse, int target_h, int target_w);

// Box average by an integer factor; ragged edge blocks average what is there.
Grid block_average(const Grid& fine, int factor);

// T consecutive daily inputs ending at `date`, paired with that day's target.
struct SequenceWindow {
    std::vector<Grid> inputs;  // chronological, length T
    Grid target;
    Date date;                 // day of the last input / the target
};

// One window per day with T-1 strictly consecutive predecessors. Calendar
// gaps larger than one day break the stream; no window spans a gap.
std::vector<SequenceWindow> build_windows(std::span<const ClimateSample> samples, int window_len = 5);

struct MonsoonSplit {
    std::vector<ClimateSample> monsoon;      // May-September
    std::vector<ClimateSample> non_monsoon;  // October-April
};
MonsoonSplit split_monsoon(std::span<const ClimateSample> samples);

struct SeasonSplit {
    std::vector<ClimateSample> djf, mam, jja, son;
};
SeasonSplit split_seasons(std::span<const ClimateSample> samples);

struct TrainTestSplit {
    std::vector<ClimateSample> train;  // year <= cutoff
    std::vector<ClimateSample> test;   // year > cutoff
};
TrainTestSplit train_test_split(std::span<const ClimateSample> samples, int cutoff_year = 1999);

// Splits windows by target-date year. Test windows may reach back into
// train-period days for lag context; targets never cross the boundary.
struct WindowSplit {
    std::vector<SequenceWindow> train;
    std::vector<SequenceWindow> test;
};
WindowSplit split_windows_by_year(std::vector<SequenceWindow> windows, int cutoff_year);

struct SyntheticConfig {
    int height = 16;
    int width = 16;
    int n_days = 730;
    std::uint64_t seed = 7;
    Date start{1999, 1, 1};
    int coarsen = 4;  // block-average factor defining the coarse inputs

    void validate() const;
};

// Deterministic synthetic dataset with the qualitative structure the real
// data has: smooth spatial fields, strong day-to-day autocorrelation, a fixed
// elevation channel, ~3x monsoon precipitation amplitude, and coarse inputs
// derived from the fine target by block-average + re-interpolation so that a
// genuine coarse->fine mapping exists for a model to learn.
std::vector<ClimateSample> generate_synthetic(const SyntheticConfig& cfg);

}  // namespace finerain
