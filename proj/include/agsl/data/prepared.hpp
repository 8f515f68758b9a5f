#pragma once

#include <vector>

#include "agsl/data/windows.hpp"

namespace agsl::data {

/// Normalised segments plus the training statistics needed to report
/// metrics in raw units.
struct PreparedData {
    SpatioTemporalSeries train, val, test;
    NormStats stats;
    std::size_t history = 12;
    std::size_t horizon = 12;

    const SpatioTemporalSeries& segment(const std::string& name) const {
        if (name == "train") return train;
        if (name == "val") return val;
        if (name == "test") return test;
        throw DataError("unknown split '" + name + "' (expected train, val or test)");
    }
};

inline PreparedData prepare_data(const SpatioTemporalSeries& s, const std::vector<double>& ratios, std::size_t history,
                                 std::size_t horizon, bool global_stats = false) {
    s.validate();
    Segments seg = split(s, ratios, history, horizon);
    NormStats st = compute_norm_stats(seg.train, global_stats);
    return {normalize(seg.train, st), normalize(seg.val, st), normalize(seg.test, st), std::move(st), history, horizon};
}

}  // namespace agsl::data
