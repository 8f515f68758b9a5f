#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace agsl {

/// Cost buckets for inference accounting. The first four mirror the
/// terms of the NAPL-AGCN complexity expression; everything else
/// (gates, residuals, heads, normalisation) lands in Elementwise.
enum class FlopTerm : std::size_t { Adjacency, Temporal, Aggregation, NodeParam, Elementwise, Count };

inline constexpr std::array<std::string_view, static_cast<std::size_t>(FlopTerm::Count)> kFlopTermNames{
    "adjacency", "temporal", "aggregation", "node_param", "elementwise"};

/// Per-element FLOP charges used by every kernel op. A multiply-accumulate
/// is 2 FLOPs; exp and div are 1 each.
namespace flop_cost {
inline constexpr std::uint64_t kMac = 2;
inline constexpr std::uint64_t kElementwise = 1;  // add, sub, mul, scale, shift, relu, abs
inline constexpr std::uint64_t kClamp = 2;
inline constexpr std::uint64_t kSigmoid = 3;      // exp, add, div
inline constexpr std::uint64_t kTanh = 3;         // exp, add, div
inline constexpr std::uint64_t kSoftmax = 4;      // sub max, exp, accumulate, div
inline constexpr std::uint64_t kLayerNorm = 7;    // mean, centre, square+acc, scale, gain, bias
inline constexpr std::uint64_t kLayerNormRow = 2; // eps add, sqrt
}  // namespace flop_cost

/// Per-invocation accumulator. Ops charge the bucket currently selected
/// on the tape; there is no global state.
class FlopCounter {
public:
    void add(FlopTerm term, std::uint64_t n) { counts_[static_cast<std::size_t>(term)] += n; }
    std::uint64_t get(FlopTerm term) const { return counts_[static_cast<std::size_t>(term)]; }
    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (auto c : counts_) t += c;
        return t;
    }
    void reset() { counts_.fill(0); }

private:
    std::array<std::uint64_t, static_cast<std::size_t>(FlopTerm::Count)> counts_{};
};

}  // namespace agsl
