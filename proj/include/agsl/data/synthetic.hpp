#pragma once

// Synthetic spatial-temporal data over a random sparse latent digraph.
//
// Each node i carries an own process o_i(t). The latent value diffuses
// along in-edges with a one-step lag:
//   x_i(t) = (1−α)·o_i(t) + α·mean_{j ∈ in(i)} x_j(t−1)
// and the observation is y_i(t) = x_i(t) + noise·ε_i(t).
//
// mode=subsumed: o_i is a sum of harmonics of one shared period with no
// innovations, so x_i is periodic and its own history predicts it.
// mode=spatial-essential: o_i adds an AR(1) process driven by large
// innovations; a node only sees a neighbour's fresh innovation one step
// late through its own series, so neighbour histories carry information.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "agsl/data/series.hpp"
#include "agsl/numkernel/rng.hpp"

namespace agsl::data {

enum class SyntheticMode { Subsumed, SpatialEssential };

inline const char* to_string(SyntheticMode m) { return m == SyntheticMode::Subsumed ? "subsumed" : "spatial-essential"; }

inline SyntheticMode parse_synthetic_mode(const std::string& s) {
    if (s == "subsumed") return SyntheticMode::Subsumed;
    if (s == "spatial-essential") return SyntheticMode::SpatialEssential;
    throw DataError("unknown synthetic mode '" + s + "' (expected subsumed or spatial-essential)");
}

struct SyntheticSpec {
    std::size_t num_nodes = 16;
    std::size_t length = 2000;
    std::uint64_t seed = 0;
    double density = 0.15;         // probability of each off-diagonal latent edge
    std::size_t period = 12;
    std::size_t harmonics = 2;
    double ar_coef = 0.3;          // spatial-essential only
    double innovation_std = 1.0;   // spatial-essential only
    double alpha = 0.8;            // spatial mixing strength
    double noise = 0.05;           // observation noise std
    SyntheticMode mode = SyntheticMode::Subsumed;
    double interval_minutes = 5.0;
    std::string name = "synthetic";

    void validate() const {
        if (num_nodes == 0) throw DataError("synthetic spec: num_nodes must be ≥ 1");
        if (length == 0) throw DataError("synthetic spec: length must be ≥ 1");
        if (!(density >= 0.0 && density <= 1.0)) throw DataError("synthetic spec: density must lie in [0, 1]");
        if (period < 2) throw DataError("synthetic spec: period must be ≥ 2");
        if (!(alpha >= 0.0 && alpha <= 1.0)) throw DataError("synthetic spec: alpha must lie in [0, 1]");
        if (!(std::abs(ar_coef) < 1.0)) throw DataError("synthetic spec: |ar_coef| must be < 1");
        if (!(noise >= 0.0) || !(innovation_std >= 0.0)) throw DataError("synthetic spec: noise levels must be ≥ 0");
    }
};

inline nlohmann::json spec_to_json(const SyntheticSpec& s) {
    return {{"num_nodes", s.num_nodes}, {"length", s.length},       {"seed", s.seed},
            {"density", s.density},     {"period", s.period},       {"harmonics", s.harmonics},
            {"ar_coef", s.ar_coef},     {"innovation_std", s.innovation_std},
            {"alpha", s.alpha},         {"noise", s.noise},         {"mode", to_string(s.mode)},
            {"interval", s.interval_minutes}, {"name", s.name}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline SyntheticSpec spec_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw DataError("synthetic spec must be a JSON object");
    SyntheticSpec s;
    static const std::vector<std::string> known{"num_nodes", "length", "seed",  "density", "period", "harmonics", "ar_coef",
                                                "innovation_std", "alpha", "noise", "mode", "interval", "name"};
    for (const auto& [k, _] : j.items())
        if (std::find(known.begin(), known.end(), k) == known.end()) throw DataError("synthetic spec: unknown key '" + k + "'");
    try {
        s.num_nodes = j.value("num_nodes", s.num_nodes);
        s.length = j.value("length", s.length);
        s.seed = j.value("seed", s.seed);
        s.density = j.value("density", s.density);
        s.period = j.value("period", s.period);
        s.harmonics = j.value("harmonics", s.harmonics);
        s.ar_coef = j.value("ar_coef", s.ar_coef);
        s.innovation_std = j.value("innovation_std", s.innovation_std);
        s.alpha = j.value("alpha", s.alpha);
        s.noise = j.value("noise", s.noise);
        if (j.contains("mode")) s.mode = parse_synthetic_mode(j.at("mode").get<std::string>());
        s.interval_minutes = j.value("interval", s.interval_minutes);
        s.name = j.value("name", s.name);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("synthetic spec: ") + e.what());
    }
    s.validate();
    return s;
}

/// Frames simulated before the first emitted one so the diffusion has settled.
inline constexpr std::size_t kBurnIn = 200;

/// Graph and per-node seasonal parameters.
struct LatentStructure {
    std::vector<std::vector<std::size_t>> in_neighbours;
    Tensor amplitude;  // N × harmonics
    Tensor phase;      // N × harmonics
    Tensor offset;     // N
};

/// Per-node standard-normal draws, (kBurnIn + length) × N each.
struct SyntheticNoise {
    Tensor innovation;
    Tensor observation;
};

inline LatentStructure draw_structure(const SyntheticSpec& spec) {
    spec.validate();
    const std::size_t n = spec.num_nodes;
    Rng rng = Rng::stream(spec.seed, 0);
    LatentStructure s;
    s.in_neighbours.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j)
            if (j != i && rng.uniform() < spec.density) s.in_neighbours[i].push_back(j);
        if (s.in_neighbours[i].empty() && n > 1) {
            std::size_t j = rng.below(n - 1);
            s.in_neighbours[i].push_back(j >= i ? j + 1 : j);
        }
    }
    s.amplitude = Tensor(Shape{n, spec.harmonics});
    s.phase = Tensor(Shape{n, spec.harmonics});
    s.offset = Tensor(Shape{n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < spec.harmonics; ++k) {
            s.amplitude.at(i, k) = rng.uniform(0.5, 1.5) / static_cast<double>(k + 1);
            s.phase.at(i, k) = rng.uniform(0.0, 2.0 * std::numbers::pi);
        }
        s.offset[i] = rng.uniform(-1.0, 1.0);
    }
    return s;
}

/// Node i draws only from stream i + 1, so its noise is independent of
/// every other node's.
inline SyntheticNoise draw_noise(const SyntheticSpec& spec) {
    const std::size_t n = spec.num_nodes, steps = kBurnIn + spec.length;
    SyntheticNoise z{Tensor(Shape{steps, n}), Tensor(Shape{steps, n})};
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng = Rng::stream(spec.seed, i + 1);
        for (std::size_t t = 0; t < steps; ++t) z.innovation.at(t, i) = rng.normal();
        for (std::size_t t = 0; t < steps; ++t) z.observation.at(t, i) = rng.normal();
    }
    return z;
}

/// Deterministic simulation given structure and noise.
inline SpatioTemporalSeries synthesize(const SyntheticSpec& spec, const LatentStructure& s, const SyntheticNoise& z) {
    spec.validate();
    const std::size_t n = spec.num_nodes, steps = kBurnIn + spec.length;
    if (z.innovation.shape() != Shape{steps, n} || z.observation.shape() != Shape{steps, n})
        throw DataError("synthetic noise has the wrong shape");
    const bool essential = spec.mode == SyntheticMode::SpatialEssential;
    std::vector<double> x(n, 0.0), x_prev(n, 0.0), ar(n, 0.0);
    Tensor out(Shape{spec.length, n, 1});
    for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
            double own = s.offset[i];
            for (std::size_t k = 0; k < spec.harmonics; ++k)
                own += s.amplitude.at(i, k) *
                       std::sin(2.0 * std::numbers::pi * static_cast<double>((k + 1) * t) / static_cast<double>(spec.period) +
                                s.phase.at(i, k));
            if (essential) {
                ar[i] = spec.ar_coef * ar[i] + spec.innovation_std * z.innovation.at(t, i);
                own += ar[i];
            }
            double mix = 0.0;
            for (std::size_t j : s.in_neighbours[i]) mix += x_prev[j];
            if (!s.in_neighbours[i].empty()) mix /= static_cast<double>(s.in_neighbours[i].size());
            x[i] = (1.0 - spec.alpha) * own + spec.alpha * mix;
        }
        if (t >= kBurnIn)
            for (std::size_t i = 0; i < n; ++i) out.at(t - kBurnIn, i, 0) = x[i] + spec.noise * z.observation.at(t, i);
        std::swap(x, x_prev);
    }
    return {std::move(out), spec.interval_minutes, spec.name};
}

/// Output depends only on the spec (which carries the seed).
inline SpatioTemporalSeries generate_synthetic(const SyntheticSpec& spec) {
    return synthesize(spec, draw_structure(spec), draw_noise(spec));
}

}  // namespace agsl::data
