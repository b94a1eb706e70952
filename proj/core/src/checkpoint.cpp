// SPDX-License-Identifier: Apache-2.0
#include "finerain/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace finerain {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

using nlohmann::json;

class Writer {
public:
    void raw(const void* p, std::size_t n) {
        const std::size_t at = blob_.size();
        blob_.resize(at + n);
        std::memcpy(blob_.data() + at, p, n);
    }
    template <typename T>
    void pod(const T& v) {
        raw(&v, sizeof v);
    }
    void floats(const std::vector<float>& v) { raw(v.data(), v.size() * sizeof(float)); }
    void section(const char tag[5], const std::string& payload) {
        raw(tag, 4);
        const std::uint64_t len = payload.size();
        pod(len);
        raw(payload.data(), payload.size());
    }
    std::string& str() { return blob_; }

private:
    std::string blob_;
};

class Reader {
public:
    Reader(const std::string& blob, std::size_t at) : blob_(blob), at_(at) {}
    void raw(void* p, std::size_t n) {
        if (at_ + n > blob_.size())
            throw ParseError("checkpoint: truncated section payload", at_);
        std::memcpy(p, blob_.data() + at_, n);
        at_ += n;
    }
    template <typename T>
    T pod() {
        T v;
        raw(&v, sizeof v);
        return v;
    }
    void floats(std::vector<float>& v, std::size_t count) {
        v.resize(count);
        raw(v.data(), count * sizeof(float));
    }
    std::size_t offset() const { return at_; }

private:
    const std::string& blob_;
    std::size_t at_;
};

json model_config_to_json(const ModelConfig& c) {
    return json{{"input_channels", c.input_channels},
                {"height", c.height},
                {"width", c.width},
                {"window", c.window},
                {"eta", c.eta},
                {"kernels", c.kernels},
                {"sr_channels", c.sr_channels},
                {"sr_kernels", c.sr_kernels},
                {"head_channels", c.head_channels}};
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig c;
    c.input_channels = j.at("input_channels").get<int>();
    c.height = j.at("height").get<int>();
    c.width = j.at("width").get<int>();
    c.window = j.at("window").get<int>();
    c.eta = j.at("eta").get<std::array<int, 3>>();
    c.kernels = j.at("kernels").get<std::array<int, 3>>();
    c.sr_channels = j.at("sr_channels").get<std::array<int, 4>>();
    c.sr_kernels = j.at("sr_kernels").get<std::array<int, 4>>();
    c.head_channels = j.at("head_channels").get<std::array<int, 2>>();
    return c;
}

json train_config_to_json(const TrainConfig& c) {
    return json{{"initial_lr", c.initial_lr},
                {"lr_decay_alpha", c.lr_decay_alpha},
                {"decay_patience", c.decay_patience},
                {"plateau_min_delta", c.plateau_min_delta},
                {"min_lr", c.min_lr},
                {"weight_decay", c.weight_decay},
                {"recurrent_dropout", c.recurrent_dropout},
                {"inter_layer_dropout", c.inter_layer_dropout},
                {"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    c.initial_lr = j.at("initial_lr").get<double>();
    c.lr_decay_alpha = j.at("lr_decay_alpha").get<double>();
    c.decay_patience = j.at("decay_patience").get<int>();
    c.plateau_min_delta = j.at("plateau_min_delta").get<double>();
    c.min_lr = j.at("min_lr").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.recurrent_dropout = j.at("recurrent_dropout").get<double>();
    c.inter_layer_dropout = j.at("inter_layer_dropout").get<double>();
    c.epochs = j.at("epochs").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    Writer w;
    w.raw("FRCK", 4);
    const std::uint8_t version = 1;
    w.pod(version);

    json meta;
    meta["has_model"] = ck.has_model;
    meta["model_config"] = ck.has_model ? model_config_to_json(ck.model_config) : json(nullptr);
    meta["train_config"] = train_config_to_json(ck.train_config);
    meta["epochs_completed"] = ck.epochs_completed;
    meta["period"] = ck.period;
    meta["cutoff_year"] = ck.cutoff_year;
    meta["seed"] = ck.seed;
    w.section("META", meta.dump());

    if (ck.has_model) {
        const std::vector<float> flat = flatten_params(const_cast<ModelParams&>(ck.model));
        Writer pw;
        pw.floats(flat);
        w.section("PARM", pw.str());

        Writer aw;
        aw.pod(ck.adam.step_count);
        aw.pod(ck.adam.lr);
        aw.pod(ck.adam.beta1);
        aw.pod(ck.adam.beta2);
        aw.pod(ck.adam.epsilon);
        aw.pod(ck.plateau.best);
        aw.pod(static_cast<std::uint8_t>(ck.plateau.has_best ? 1 : 0));
        aw.pod(static_cast<std::int32_t>(ck.plateau.stalled));
        aw.pod(static_cast<std::uint64_t>(ck.adam.m.size()));
        aw.floats(ck.adam.m);
        aw.floats(ck.adam.v);
        w.section("ADAM", aw.str());
    }

    if (ck.norm.has_value()) {
        Writer nw;
        nw.pod(static_cast<std::uint32_t>(ck.norm->inputs.size()));
        for (const ChannelScale& s : ck.norm->inputs) {
            nw.pod(s.min);
            nw.pod(s.max);
            nw.pod(s.lo);
            nw.pod(s.hi);
        }
        nw.pod(ck.norm->target.min);
        nw.pod(ck.norm->target.max);
        nw.pod(ck.norm->target.lo);
        nw.pod(ck.norm->target.hi);
        w.section("NORM", nw.str());
    }

    if (ck.qmap.has_value()) {
        Writer qw;
        qw.pod(static_cast<std::int32_t>(ck.qmap->height));
        qw.pod(static_cast<std::int32_t>(ck.qmap->width));
        qw.pod(static_cast<std::int32_t>(ck.qmap->n));
        qw.floats(ck.qmap->model_sorted);
        qw.floats(ck.qmap->obs_sorted);
        w.section("QMAP", qw.str());
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("save_checkpoint: cannot open '" + path + "' for writing");
    out.write(w.str().data(), std::streamsize(w.str().size()));
    if (!out) throw Error("save_checkpoint: write failed on '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("load_checkpoint: cannot open '" + path + "'");
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (blob.size() < 5 || blob.compare(0, 4, "FRCK") != 0)
        throw ParseError("checkpoint: bad magic, expected 'FRCK'", 0);
    if (std::uint8_t(blob[4]) != 1)
        throw ParseError("checkpoint: unsupported version " + std::to_string(int(blob[4])), 4);

    Checkpoint ck;
    bool saw_meta = false;
    std::string parm_payload;

    std::size_t at = 5;
    while (at < blob.size()) {
        if (at + 12 > blob.size())
            throw ParseError("checkpoint: truncated section header", at);
        const std::string tag = blob.substr(at, 4);
        std::uint64_t len = 0;
        std::memcpy(&len, blob.data() + at + 4, 8);
        const std::size_t payload_at = at + 12;
        if (payload_at + len > blob.size())
            throw ParseError("checkpoint: section '" + tag + "' declares " + std::to_string(len) +
                                 " bytes past end of file",
                             at);
        if (tag == "META") {
            saw_meta = true;
            json meta;
            try {
                meta = json::parse(blob.begin() + std::ptrdiff_t(payload_at),
                                   blob.begin() + std::ptrdiff_t(payload_at + len));
            } catch (const json::exception& e) {
                throw ParseError(std::string("checkpoint: malformed META JSON: ") + e.what(),
                                 payload_at);
            }
            try {
                ck.has_model = meta.at("has_model").get<bool>();
                if (ck.has_model)
                    ck.model_config = model_config_from_json(meta.at("model_config"));
                ck.train_config = train_config_from_json(meta.at("train_config"));
                ck.epochs_completed = meta.at("epochs_completed").get<int>();
                ck.period = meta.at("period").get<std::string>();
                ck.cutoff_year = meta.at("cutoff_year").get<int>();
                ck.seed = meta.at("seed").get<std::uint64_t>();
            } catch (const json::exception& e) {
                throw ParseError(std::string("checkpoint: META missing fields: ") + e.what(),
                                 payload_at);
            }
        } else if (tag == "PARM") {
            parm_payload = blob.substr(payload_at, len);
        } else if (tag == "ADAM") {
            Reader r(blob, payload_at);
            ck.adam.step_count = r.pod<std::int64_t>();
            ck.adam.lr = r.pod<double>();
            ck.adam.beta1 = r.pod<double>();
            ck.adam.beta2 = r.pod<double>();
            ck.adam.epsilon = r.pod<double>();
            ck.plateau.best = r.pod<double>();
            ck.plateau.has_best = r.pod<std::uint8_t>() != 0;
            ck.plateau.stalled = r.pod<std::int32_t>();
            const std::uint64_t n = r.pod<std::uint64_t>();
            r.floats(ck.adam.m, n);
            r.floats(ck.adam.v, n);
        } else if (tag == "NORM") {
            Reader r(blob, payload_at);
            NormalizationSpec spec;
            const std::uint32_t n = r.pod<std::uint32_t>();
            for (std::uint32_t i = 0; i < n; ++i) {
                ChannelScale s;
                s.min = r.pod<double>();
                s.max = r.pod<double>();
                s.lo = r.pod<double>();
                s.hi = r.pod<double>();
                spec.inputs.push_back(s);
            }
            spec.target.min = r.pod<double>();
            spec.target.max = r.pod<double>();
            spec.target.lo = r.pod<double>();
            spec.target.hi = r.pod<double>();
            ck.norm = std::move(spec);
        } else if (tag == "QMAP") {
            Reader r(blob, payload_at);
            QuantileMapModel qm;
            qm.height = r.pod<std::int32_t>();
            qm.width = r.pod<std::int32_t>();
            qm.n = r.pod<std::int32_t>();
            if (qm.height <= 0 || qm.width <= 0 || qm.n < 2)
                throw ParseError("checkpoint: QMAP section has invalid dimensions", payload_at);
            const std::size_t count = std::size_t(qm.height) * qm.width * std::size_t(qm.n);
            r.floats(qm.model_sorted, count);
            r.floats(qm.obs_sorted, count);
            ck.qmap = std::move(qm);
        }
        // Unknown tags are skipped; the container is forward-compatible.
        at = payload_at + len;
    }
    if (!saw_meta) throw ParseError("checkpoint: missing META section", blob.size());

    if (ck.has_model) {
        ck.model = make_model(ck.model_config);
        const std::size_t n = param_count(ck.model);
        if (parm_payload.size() != n * sizeof(float))
            throw ParseError("checkpoint: PARM holds " +
                                 std::to_string(parm_payload.size() / sizeof(float)) +
                                 " floats, model needs " + std::to_string(n),
                             5);
        std::vector<float> flat(n);
        std::memcpy(flat.data(), parm_payload.data(), parm_payload.size());
        unflatten_params(flat, ck.model);
        if (ck.adam.m.empty()) ck.adam = AdamState::for_size(n, ck.train_config.initial_lr);
        if (ck.adam.m.size() != n)
            throw ParseError("checkpoint: ADAM state sized for " + std::to_string(ck.adam.m.size()) +
                                 " parameters, model has " + std::to_string(n),
                             5);
    }
    return ck;
}

}  // namespace finerain
