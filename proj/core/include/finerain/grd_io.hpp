// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "finerain/pipeline.hpp"

namespace finerain {

// In-memory form of a GRD1 container: a chronological daily dataset with a
// shared grid shape, channel names, and an optional normalization spec.
struct Dataset {
    std::vector<ClimateSample> samples;
    std::vector<std::string> channel_names;
    std::optional<NormalizationSpec> norm;

    int channels() const { return samples.empty() ? 0 : samples.front().input.channels; }
    int height() const { return samples.empty() ? 0 : samples.front().input.height; }
    int width() const { return samples.empty() ? 0 : samples.front().input.width; }
};

Dataset make_dataset(std::vector<ClimateSample> samples);

// GRD1 binary layout (little-endian):
//   magic "GRD1"
//   u32 header length
//   UTF-8 JSON header {n_days, channels, height, width, channel_names[],
//                      dates[] (ISO-8601), normalization or null}
//   n_days * channels * height * width  f32  inputs
//   n_days * height * width             f32  targets
// Round-trips are bitwise lossless. Loading validates the magic, every
// declared count against the payload length, strictly increasing dates,
// finite values, and non-negative targets; failures throw ParseError with
// the byte offset.
void save_grd(const Dataset& ds, const std::string& path);
Dataset load_grd(const std::string& path);

}  // namespace finerain
