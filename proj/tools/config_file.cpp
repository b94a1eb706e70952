// SPDX-License-Identifier: Apache-2.0
#include "config_file.hpp"

#include <fstream>
#include <sstream>

namespace finerain::cli {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

std::vector<int> parse_int_list(const std::string& value, std::size_t expected,
                                const std::string& key) {
    std::vector<int> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stoi(trim(item)));
        } catch (const std::exception&) {
            throw ConfigError("config: bad integer '" + item + "' in key " + key);
        }
    }
    if (out.size() != expected)
        throw ConfigError("config: key " + key + " expects " + std::to_string(expected) +
                          " comma-separated integers, got " + std::to_string(out.size()));
    return out;
}

double parse_double(const std::string& value, const std::string& key) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: bad number '" + value + "' for key " + key);
    }
}

int parse_int(const std::string& value, const std::string& key) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: bad integer '" + value + "' for key " + key);
    }
}

}  // namespace

TrainSettings load_train_settings(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    TrainSettings s;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(line_no) +
                              " is not a key = value pair");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));

        if (key == "initial_lr") s.train.initial_lr = parse_double(value, key);
        else if (key == "lr_decay_alpha") s.train.lr_decay_alpha = parse_double(value, key);
        else if (key == "decay_patience") s.train.decay_patience = parse_int(value, key);
        else if (key == "plateau_min_delta") s.train.plateau_min_delta = parse_double(value, key);
        else if (key == "min_lr") s.train.min_lr = parse_double(value, key);
        else if (key == "weight_decay") s.train.weight_decay = parse_double(value, key);
        else if (key == "recurrent_dropout") s.train.recurrent_dropout = parse_double(value, key);
        else if (key == "inter_layer_dropout")
            s.train.inter_layer_dropout = parse_double(value, key);
        else if (key == "epochs") s.train.epochs = parse_int(value, key);
        else if (key == "batch_size") s.train.batch_size = parse_int(value, key);
        else if (key == "seed") s.train.seed = std::uint64_t(parse_int(value, key));
        else if (key == "window") s.model.window = parse_int(value, key);
        else if (key == "eta") {
            const auto v = parse_int_list(value, 3, key);
            s.model.eta = {v[0], v[1], v[2]};
        } else if (key == "kernels") {
            const auto v = parse_int_list(value, 3, key);
            s.model.kernels = {v[0], v[1], v[2]};
        } else if (key == "sr_channels") {
            const auto v = parse_int_list(value, 4, key);
            s.model.sr_channels = {v[0], v[1], v[2], v[3]};
        } else if (key == "sr_kernels") {
            const auto v = parse_int_list(value, 4, key);
            s.model.sr_kernels = {v[0], v[1], v[2], v[3]};
        } else if (key == "head_channels") {
            const auto v = parse_int_list(value, 2, key);
            s.model.head_channels = {v[0], v[1]};
        } else {
            throw ConfigError("config: unknown key '" + key + "' on line " +
                              std::to_string(line_no));
        }
    }
    return s;
}

}  // namespace finerain::cli
