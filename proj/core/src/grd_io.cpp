// SPDX-License-Identifier: Apache-2.0
#include "finerain/grd_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace finerain {

static_assert(std::endian::native == std::endian::little,
              "GRD1 I/O assumes a little-endian host");

namespace {

using nlohmann::json;

json scale_to_json(const ChannelScale& s) { return json::array({s.min, s.max, s.lo, s.hi}); }

ChannelScale scale_from_json(const json& j) {
    if (!j.is_array() || j.size() != 4)
        throw InvalidArgument("normalization scale must be [min, max, lo, hi]");
    return ChannelScale{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
                        j[3].get<double>()};
}

void append_floats(std::string& out, const std::vector<float>& v) {
    const std::size_t at = out.size();
    out.resize(at + v.size() * sizeof(float));
    std::memcpy(out.data() + at, v.data(), v.size() * sizeof(float));
}

}  // namespace

Dataset make_dataset(std::vector<ClimateSample> samples) {
    Dataset ds;
    ds.samples = std::move(samples);
    const int c = ds.channels();
    for (int i = 0; i < c; ++i)
        ds.channel_names.push_back(i < int(kInputChannelNames.size())
                                       ? kInputChannelNames[std::size_t(i)]
                                       : ("channel_" + std::to_string(i)));
    return ds;
}

void save_grd(const Dataset& ds, const std::string& path) {
    if (ds.samples.empty()) throw InvalidArgument("save_grd: empty dataset");
    const int c = ds.channels(), h = ds.height(), w = ds.width();
    if (std::int64_t(ds.channel_names.size()) != c)
        throw InvalidArgument("save_grd: " + std::to_string(ds.channel_names.size()) +
                              " channel names for " + std::to_string(c) + " channels");
    json header;
    header["n_days"] = ds.samples.size();
    header["channels"] = c;
    header["height"] = h;
    header["width"] = w;
    header["channel_names"] = ds.channel_names;
    json dates = json::array();
    for (const ClimateSample& s : ds.samples) dates.push_back(to_iso(s.date));
    header["dates"] = std::move(dates);
    if (ds.norm.has_value()) {
        json norm;
        norm["inputs"] = json::array();
        for (const ChannelScale& s : ds.norm->inputs) norm["inputs"].push_back(scale_to_json(s));
        norm["target"] = scale_to_json(ds.norm->target);
        header["normalization"] = std::move(norm);
    } else {
        header["normalization"] = nullptr;
    }

    std::string blob = "GRD1";
    const std::string head_text = header.dump();
    const std::uint32_t head_len = static_cast<std::uint32_t>(head_text.size());
    blob.append(reinterpret_cast<const char*>(&head_len), 4);
    blob += head_text;
    for (const ClimateSample& s : ds.samples) {
        if (s.input.channels != c || s.input.height != h || s.input.width != w ||
            s.target.height != h || s.target.width != w || s.target.channels != 1)
            throw ShapeError("save_grd: sample " + to_iso(s.date) + " has shape " +
                             s.input.shape_str() + " / " + s.target.shape_str());
        append_floats(blob, s.input.data);
    }
    for (const ClimateSample& s : ds.samples) append_floats(blob, s.target.data);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("save_grd: cannot open '" + path + "' for writing");
    out.write(blob.data(), std::streamsize(blob.size()));
    if (!out) throw Error("save_grd: write failed on '" + path + "'");
}

Dataset load_grd(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("load_grd: cannot open '" + path + "'");
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (blob.size() < 4 || blob.compare(0, 4, "GRD1") != 0)
        throw ParseError("load_grd: bad magic, expected 'GRD1'", 0);
    if (blob.size() < 8) throw ParseError("load_grd: truncated header length", 4);
    std::uint32_t head_len = 0;
    std::memcpy(&head_len, blob.data() + 4, 4);
    if (blob.size() < 8 + std::size_t(head_len))
        throw ParseError("load_grd: truncated JSON header", 8);

    json header;
    try {
        header = json::parse(blob.begin() + 8, blob.begin() + 8 + head_len);
    } catch (const json::exception& e) {
        throw ParseError(std::string("load_grd: malformed header JSON: ") + e.what(), 8);
    }

    std::size_t n_days = 0;
    int c = 0, h = 0, w = 0;
    std::vector<std::string> names;
    std::vector<std::string> dates;
    try {
        n_days = header.at("n_days").get<std::size_t>();
        c = header.at("channels").get<int>();
        h = header.at("height").get<int>();
        w = header.at("width").get<int>();
        names = header.at("channel_names").get<std::vector<std::string>>();
        dates = header.at("dates").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("load_grd: header missing fields: ") + e.what(), 8);
    }
    if (n_days == 0 || c <= 0 || h <= 0 || w <= 0)
        throw ParseError("load_grd: non-positive dimensions in header", 8);
    if (names.size() != std::size_t(c))
        throw ParseError("load_grd: header declares " + std::to_string(c) + " channels but " +
                             std::to_string(names.size()) + " channel names",
                         8);
    if (dates.size() != n_days)
        throw ParseError("load_grd: header declares " + std::to_string(n_days) + " days but " +
                             std::to_string(dates.size()) + " dates",
                         8);

    const std::size_t payload_at = 8 + head_len;
    const std::size_t input_floats = n_days * std::size_t(c) * h * w;
    const std::size_t target_floats = n_days * std::size_t(h) * w;
    const std::size_t expected = payload_at + 4 * (input_floats + target_floats);
    if (blob.size() != expected)
        throw ParseError("load_grd: header declares " + std::to_string(c) + " channels x " +
                             std::to_string(n_days) + " days (" +
                             std::to_string(input_floats + target_floats) +
                             " floats) but payload holds " +
                             std::to_string((blob.size() - payload_at) / 4) + " floats",
                         payload_at);

    Dataset ds;
    ds.channel_names = std::move(names);
    if (!header.at("normalization").is_null()) {
        const json& norm = header.at("normalization");
        NormalizationSpec spec;
        for (const json& s : norm.at("inputs")) spec.inputs.push_back(scale_from_json(s));
        spec.target = scale_from_json(norm.at("target"));
        ds.norm = std::move(spec);
    }

    const auto read_grid = [&](std::size_t float_offset, int channels) {
        Grid g(channels, h, w);
        std::memcpy(g.data.data(), blob.data() + payload_at + 4 * float_offset,
                    g.data.size() * sizeof(float));
        for (std::size_t i = 0; i < g.data.size(); ++i)
            if (!std::isfinite(g.data[i]))
                throw ParseError("load_grd: non-finite value",
                                 payload_at + 4 * (float_offset + i));
        return g;
    };

    ds.samples.resize(n_days);
    std::int64_t prev_day = 0;
    for (std::size_t d = 0; d < n_days; ++d) {
        ClimateSample& s = ds.samples[d];
        try {
            s.date = parse_iso_date(dates[d]);
        } catch (const InvalidArgument& e) {
            throw ParseError(std::string("load_grd: ") + e.what(), 8);
        }
        if (d > 0 && to_days(s.date) <= prev_day)
            throw ParseError("load_grd: dates not strictly increasing at " + dates[d], 8);
        prev_day = to_days(s.date);
        s.input = read_grid(d * std::size_t(c) * h * w, c);
        s.target = read_grid(input_floats + d * std::size_t(h) * w, 1);
        for (std::size_t i = 0; i < s.target.data.size(); ++i)
            if (s.target.data[i] < 0.0f)
                throw ParseError("load_grd: negative precipitation target on " + dates[d],
                                 payload_at + 4 * (input_floats + d * std::size_t(h) * w + i));
    }
    return ds;
}

}  // namespace finerain
