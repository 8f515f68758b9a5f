#pragma once

#include <stdexcept>
#include <string>

#include "agsl/numkernel/tensor.hpp"

namespace agsl::data {

/// Raised for malformed datasets, bad specs and impossible splits.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// A multivariate series of discrete frames, values laid out T_total×N×C.
struct SpatioTemporalSeries {
    Tensor values;
    double interval_minutes = 5.0;
    std::string name;

    std::size_t length() const { return values.rank() == 3 ? values.dim(0) : 0; }
    std::size_t num_nodes() const { return values.rank() == 3 ? values.dim(1) : 0; }
    std::size_t channels() const { return values.rank() == 3 ? values.dim(2) : 0; }

    double at(std::size_t t, std::size_t node, std::size_t c) const { return values.at(t, node, c); }

    void validate() const {
        if (values.rank() != 3) throw DataError("series values must be T×N×C, got " + shape_str(values.shape()));
        if (!values.all_finite()) throw DataError("series '" + name + "' contains non-finite values");
    }

    /// Frames [begin, end) as a new series.
    SpatioTemporalSeries slice(std::size_t begin, std::size_t end) const {
        if (begin > end || end > length()) throw DataError("series slice out of range");
        const std::size_t row = num_nodes() * channels();
        std::vector<double> v(values.data().begin() + static_cast<std::ptrdiff_t>(begin * row),
                              values.data().begin() + static_cast<std::ptrdiff_t>(end * row));
        return {Tensor(Shape{end - begin, num_nodes(), channels()}, std::move(v)), interval_minutes, name};
    }
};

}  // namespace agsl::data
