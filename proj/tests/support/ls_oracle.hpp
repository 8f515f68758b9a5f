#pragma once

// Least-squares one-step-ahead predictors used to calibrate the synthetic
// data modes. Test-only; relies on Eigen.

#include <Eigen/Dense>

#include "agsl/data/series.hpp"

namespace agsl::testing {

/// Fits y_i(t+1) per node on [own `lags` values, one-hot of (t+1) mod
/// `period`] (and, when `neighbour_aware`, every node's latest value) over
/// `train`, then returns the MAE on `test`. The calendar columns let the
/// oracle know the seasonal phase, so neighbours only help when they carry
/// information beyond it. `*_begin` are the segments' absolute start frames.
inline double ls_oracle_mae(const data::SpatioTemporalSeries& train, std::size_t train_begin,
                            const data::SpatioTemporalSeries& test, std::size_t test_begin, std::size_t lags,
                            std::size_t period, bool neighbour_aware) {
    const std::size_t n = train.num_nodes();
    const std::size_t width = lags + period + (neighbour_aware ? n : 0);
    auto features = [&](const data::SpatioTemporalSeries& s, std::size_t begin, std::size_t i, std::size_t t) {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(width));
        for (std::size_t l = 0; l < lags; ++l) x(l) = s.at(t - l, i, 0);
        x(lags + (begin + t + 1) % period) = 1.0;
        if (neighbour_aware)
            for (std::size_t j = 0; j < n; ++j) x(lags + period + j) = s.at(t, j, 0);
        return x;
    };
    double abs_sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t rows = train.length() - lags;
        Eigen::MatrixXd x(rows, width);
        Eigen::VectorXd y(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            x.row(r) = features(train, train_begin, i, r + lags - 1).transpose();
            y(r) = train.at(r + lags, i, 0);
        }
        const Eigen::VectorXd beta = x.colPivHouseholderQr().solve(y);
        for (std::size_t t = lags - 1; t + 1 < test.length(); ++t) {
            abs_sum += std::abs(features(test, test_begin, i, t).dot(beta) - test.at(t + 1, i, 0));
            ++count;
        }
    }
    return abs_sum / static_cast<double>(count);
}

}  // namespace agsl::testing
