// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>

#include "finerain/model.hpp"
#include "finerain/optim.hpp"
#include "finerain/pipeline.hpp"
#include "finerain/qmap.hpp"

namespace finerain {

// Self-describing training/baseline state container ("FRCK" format):
//   magic "FRCK", u8 version, then length-prefixed sections
//   META  JSON: hyperparameters, training config, epoch, period, cutoff, seed
//   PARM  float32 flattened network parameters
//   ADAM  optimizer moments + learning-rate/plateau state
//   NORM  per-channel normalization scales (binary doubles)
//   QMAP  fitted per-point quantile tables
// A checkpoint holds either a network (PARM+ADAM) or a quantile map (QMAP),
// plus whatever shared sections apply. Save/load round-trips are bitwise:
// reloading a checkpoint reproduces forward outputs exactly.
struct Checkpoint {
    std::uint32_t version = 1;

    bool has_model = false;
    ModelConfig model_config;
    ModelParams model;
    AdamState adam;
    PlateauState plateau;
    TrainConfig train_config;
    int epochs_completed = 0;

    std::optional<NormalizationSpec> norm;
    std::optional<QuantileMapModel> qmap;

    std::string period = "all";  // monsoon | non-monsoon | all
    int cutoff_year = 1999;
    std::uint64_t seed = 0;
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace finerain
