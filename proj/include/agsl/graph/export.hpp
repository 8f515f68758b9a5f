#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "agsl/numkernel/tensor.hpp"

namespace agsl::graph {

/// Shortest text for a double that reads back identically (17 significant digits).
inline std::string format_g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Row-major CSV of a 2-D tensor, no header.
inline void write_matrix_csv(std::ostream& os, const Tensor& m) {
    if (m.rank() != 2) throw ShapeError("write_matrix_csv", {m.shape()});
    for (std::size_t i = 0; i < m.dim(0); ++i) {
        for (std::size_t j = 0; j < m.dim(1); ++j) {
            if (j) os << ',';
            os << format_g17(m.at(i, j));
        }
        os << '\n';
    }
}

struct Histogram {
    double low = 0.0;
    double high = 1.0;
    std::vector<std::size_t> counts;

    double bin_width() const { return (high - low) / static_cast<double>(counts.size()); }
    std::size_t total() const {
        std::size_t t = 0;
        for (auto c : counts) t += c;
        return t;
    }
};

/// Fixed-width bins over [low, high]; values on the upper edge go to the last bin
/// and out-of-range values are clamped into the end bins.
inline Histogram histogram(const Tensor& values, std::size_t bins, double low, double high) {
    if (bins == 0 || !(high > low)) throw std::invalid_argument("histogram needs bins > 0 and high > low");
    Histogram h{low, high, std::vector<std::size_t>(bins, 0)};
    const double w = h.bin_width();
    for (double v : values.data()) {
        auto b = static_cast<long long>(std::floor((v - low) / w));
        b = std::clamp<long long>(b, 0, static_cast<long long>(bins) - 1);
        ++h.counts[static_cast<std::size_t>(b)];
    }
    return h;
}

inline void write_histogram_csv(std::ostream& os, const Histogram& h) {
    os << "bin,low,high,count\n";
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
        const double lo = h.low + h.bin_width() * static_cast<double>(b);
        os << b << ',' << format_g17(lo) << ',' << format_g17(lo + h.bin_width()) << ',' << h.counts[b] << '\n';
    }
}

}  // namespace agsl::graph
