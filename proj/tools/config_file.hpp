// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "finerain/model.hpp"
#include "finerain/optim.hpp"

namespace finerain::cli {

// Parsed contents of a training config file: simple `key = value` lines,
// `#` comments, comma lists for the shape keys. Flags override file values.
struct TrainSettings {
    TrainConfig train;
    ModelConfig model;  // input_channels/height/width are later taken from the data
};

// Throws ConfigError on unknown keys or malformed values.
TrainSettings load_train_settings(const std::string& path);

}  // namespace finerain::cli
