#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace agsl::temporal {

enum class Architecture { Agcrn, Agformer };

inline std::string to_string(Architecture a) { return a == Architecture::Agcrn ? "agcrn" : "agformer"; }

inline Architecture parse_architecture(const std::string& s) {
    if (s == "agcrn") return Architecture::Agcrn;
    if (s == "agformer") return Architecture::Agformer;
    throw std::invalid_argument("unknown architecture '" + s + "' (expected agcrn or agformer)");
}

/// Dimensions for either architecture. `layers` counts stacked recurrent
/// cells (AGCRN) or transformer blocks (AGFormer); `heads` and `ff_width`
/// only apply to AGFormer.
struct ModelConfig {
    Architecture arch = Architecture::Agcrn;
    std::size_t num_nodes = 16;
    std::size_t in_channels = 1;
    std::size_t hidden = 8;
    std::size_t embed_dim = 2;
    std::size_t layers = 1;
    std::size_t history = 12;
    std::size_t horizon = 12;
    std::size_t heads = 2;
    std::size_t ff_width = 16;
    double embed_init_scale = 0.1;

    void validate() const {
        auto positive = [](std::size_t v, const char* name) {
            if (v == 0) throw std::invalid_argument(std::string("model config: ") + name + " must be >= 1");
        };
        positive(num_nodes, "num_nodes");
        positive(in_channels, "in_channels");
        positive(hidden, "hidden");
        positive(embed_dim, "embed_dim");
        positive(layers, "layers");
        positive(history, "history");
        positive(horizon, "horizon");
        if (arch == Architecture::Agformer) {
            positive(heads, "heads");
            positive(ff_width, "ff_width");
            if (hidden % heads != 0) throw std::invalid_argument("model config: hidden must be divisible by heads");
        }
        if (!(embed_init_scale > 0) || !std::isfinite(embed_init_scale))
            throw std::invalid_argument("model config: embed_init_scale must be positive");
    }

    std::size_t output_width() const { return horizon * in_channels; }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace agsl::temporal
