#pragma once

// Checkpoint container: a single JSON document. Tensors are stored as
// base64 of little-endian IEEE-754 binary64, so save → load is bit-exact.
//
//   {
//     "format": "agsl-checkpoint", "version": 1,
//     "config": {...}, "gate": {...}, "seed": <uint64>,
//     "params": {"<name>": {"shape": [...], "trainable": bool, "data": "<b64>"}},
//     "mask": {"n": N, "keep": "<b64 bytes>", "prune": "<b64 bytes>"},
//     "extras": {...}
//   }

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "agsl/graph/hard_concrete.hpp"
#include "agsl/temporal/config.hpp"
#include "agsl/util/base64.hpp"
#include "agsl/util/hash.hpp"

namespace agsl::temporal {

inline constexpr int kCheckpointVersion = 1;

/// Raised for unreadable, corrupted or incompatible checkpoint files.
class CheckpointError : public std::runtime_error {
public:
    explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

struct Checkpoint {
    ModelConfig config;
    ParamSet params;
    graph::EdgeMask mask;
    graph::GateParams gate;
    std::uint64_t seed = 0;
    nlohmann::json extras = nlohmann::json::object();
};

inline nlohmann::json config_to_json(const ModelConfig& c) {
    return {{"arch", to_string(c.arch)}, {"num_nodes", c.num_nodes}, {"in_channels", c.in_channels},
            {"hidden", c.hidden},         {"embed_dim", c.embed_dim}, {"layers", c.layers},
            {"history", c.history},       {"horizon", c.horizon},     {"heads", c.heads},
            {"ff_width", c.ff_width},     {"embed_init_scale", c.embed_init_scale}};
}

/// Missing keys keep their defaults.
inline ModelConfig config_from_json(const nlohmann::json& j, ModelConfig c = {}) {
    if (!j.is_object()) throw std::invalid_argument("model config must be a JSON object");
    if (j.contains("arch")) c.arch = parse_architecture(j.at("arch").get<std::string>());
    auto get = [&](const char* k, std::size_t& v) {
        if (j.contains(k)) v = j.at(k).get<std::size_t>();
    };
    get("num_nodes", c.num_nodes);
    get("in_channels", c.in_channels);
    get("hidden", c.hidden);
    get("embed_dim", c.embed_dim);
    get("layers", c.layers);
    get("history", c.history);
    get("horizon", c.horizon);
    get("heads", c.heads);
    get("ff_width", c.ff_width);
    if (j.contains("embed_init_scale")) c.embed_init_scale = j.at("embed_init_scale").get<double>();
    c.validate();
    return c;
}

namespace detail {

inline std::string encode_doubles(const std::vector<double>& v) {
    std::vector<std::uint8_t> bytes(v.size() * 8);
    for (std::size_t i = 0; i < v.size(); ++i) {
        auto bits = std::bit_cast<std::uint64_t>(v[i]);
        for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<std::uint8_t>(bits >> (8 * b));
    }
    return util::base64_encode(bytes);
}

inline std::vector<double> decode_doubles(const std::string& s) {
    auto bytes = util::base64_decode(s);
    if (bytes.size() % 8 != 0) throw CheckpointError("tensor payload is not a whole number of float64 values");
    std::vector<double> v(bytes.size() / 8);
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
        v[i] = std::bit_cast<double>(bits);
    }
    return v;
}

}  // namespace detail

inline nlohmann::json mask_to_json(const graph::EdgeMask& m) {
    return {{"n", m.n()}, {"keep", util::base64_encode(m.keep_flags())}, {"prune", util::base64_encode(m.prune_flags())}};
}

inline graph::EdgeMask mask_from_json(const nlohmann::json& j) {
    const auto n = j.at("n").get<std::size_t>();
    auto keep = util::base64_decode(j.at("keep").get<std::string>());
    auto prune = util::base64_decode(j.at("prune").get<std::string>());
    if (keep.size() != n * n || prune.size() != n * n) throw CheckpointError("mask payload size mismatch");
    graph::EdgeMask m(n);
    for (std::size_t k = 0; k < n * n; ++k) {
        if (keep[k] > 1 || prune[k] > 1) throw CheckpointError("mask flags must be 0 or 1");
        if (prune[k]) m.set_prune(k / n, k % n);
        if (keep[k]) m.set_keep(k / n, k % n);
    }
    m.validate();
    return m;
}

/// Stable digest of a mask's frozen state.
inline std::string mask_hash(const graph::EdgeMask& m) { return util::sha256_hex(mask_to_json(m).dump()); }

inline nlohmann::json checkpoint_to_json(const Checkpoint& ck) {
    nlohmann::json params = nlohmann::json::object();
    for (const auto& [name, p] : ck.params)
        params[name] = {{"shape", p.value.shape()}, {"trainable", p.trainable}, {"data", detail::encode_doubles(p.value.data())}};
    return {{"format", "agsl-checkpoint"},
            {"version", kCheckpointVersion},
            {"config", config_to_json(ck.config)},
            {"gate",
             {{"beta", detail::encode_doubles({ck.gate.beta})},
              {"stretch_low", detail::encode_doubles({ck.gate.stretch_low})},
              {"stretch_high", detail::encode_doubles({ck.gate.stretch_high})}}},
            {"seed", ck.seed},
            {"params", std::move(params)},
            {"mask", mask_to_json(ck.mask)},
            {"extras", ck.extras}};
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format") != "agsl-checkpoint") throw CheckpointError("not an agsl checkpoint");
        if (j.at("version").get<int>() != kCheckpointVersion)
            throw CheckpointError("unsupported checkpoint version " + j.at("version").dump());
        Checkpoint ck;
        ck.config = config_from_json(j.at("config"));
        auto scalar = [&](const char* k) {
            auto v = detail::decode_doubles(j.at("gate").at(k).get<std::string>());
            if (v.size() != 1) throw CheckpointError("gate field is not a scalar");
            return v[0];
        };
        ck.gate = {scalar("beta"), scalar("stretch_low"), scalar("stretch_high")};
        ck.gate.validate();
        ck.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& [name, pj] : j.at("params").items()) {
            Tensor t(pj.at("shape").get<Shape>(), detail::decode_doubles(pj.at("data").get<std::string>()));
            ck.params.add(name, std::move(t), pj.at("trainable").get<bool>());
        }
        ck.mask = mask_from_json(j.at("mask"));
        if (ck.mask.n() != ck.config.num_nodes) throw CheckpointError("mask size does not match num_nodes");
        ck.extras = j.value("extras", nlohmann::json::object());
        return ck;
    } catch (const CheckpointError&) {
        throw;
    } catch (const std::exception& e) {
        throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
    }
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint '" + path + "'");
    out << checkpoint_to_json(ck).dump(1) << '\n';
    if (!out) throw CheckpointError("write failed for '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::string text;
    try {
        text = util::read_file(path);
    } catch (const std::exception& e) {
        throw CheckpointError(e.what());
    }
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw CheckpointError("checkpoint '" + path + "' is not valid JSON");
    return checkpoint_from_json(j);
}

}  // namespace agsl::temporal
