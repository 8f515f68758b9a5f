#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "agsl/data/series.hpp"
#include "agsl/numkernel/rng.hpp"

namespace agsl::data {

/// One forecasting example: T history frames followed immediately by H target frames.
struct WindowSample {
    Tensor history;  // T × N × C
    Tensor target;   // H × N × C
    std::size_t origin = 0;
};

inline std::size_t window_count(std::size_t length, std::size_t history, std::size_t horizon) {
    return length >= history + horizon ? length - history - horizon + 1 : 0;
}

inline void check_window_fit(const SpatioTemporalSeries& s, std::size_t history, std::size_t horizon) {
    if (history == 0 || horizon == 0) throw DataError("history and horizon must be ≥ 1");
    if (s.length() < history + horizon)
        throw DataError("series '" + s.name + "' has " + std::to_string(s.length()) + " frames; at least " +
                        std::to_string(history + horizon) + " are needed for T=" + std::to_string(history) +
                        ", H=" + std::to_string(horizon));
}

/// Every stride-1 window, in origin order.
inline std::vector<WindowSample> make_windows(const SpatioTemporalSeries& s, std::size_t history, std::size_t horizon) {
    check_window_fit(s, history, horizon);
    std::vector<WindowSample> out;
    for (std::size_t o = 0; o < window_count(s.length(), history, horizon); ++o)
        out.push_back({s.slice(o, o + history).values, s.slice(o + history, o + history + horizon).values, o});
    return out;
}

struct Segments {
    SpatioTemporalSeries train, val, test;
    std::size_t val_begin = 0, test_begin = 0;
};

/// Chronological split. Two ratios give train/test with an empty validation
/// segment; three give train/val/test. Windows are later built inside each
/// segment, so none straddles a boundary.
inline Segments split(const SpatioTemporalSeries& s, const std::vector<double>& ratios, std::size_t history,
                      std::size_t horizon) {
    if (ratios.size() != 2 && ratios.size() != 3) throw DataError("split ratios must have two or three entries");
    double total = 0.0;
    for (double r : ratios) {
        if (!(r > 0.0)) throw DataError("split ratios must be positive");
        total += r;
    }
    if (std::abs(total - 1.0) > 1e-9) throw DataError("split ratios must sum to 1");
    const auto len = static_cast<double>(s.length());
    const auto n_train = static_cast<std::size_t>(std::llround(ratios[0] * len));
    const auto n_val = ratios.size() == 3 ? static_cast<std::size_t>(std::llround(ratios[1] * len)) : 0;
    if (n_train + n_val > s.length()) throw DataError("split ratios leave no test frames");
    Segments seg{s.slice(0, n_train), s.slice(n_train, n_train + n_val), s.slice(n_train + n_val, s.length()),
                 n_train, n_train + n_val};
    check_window_fit(seg.train, history, horizon);
    if (ratios.size() == 3) check_window_fit(seg.val, history, horizon);
    check_window_fit(seg.test, history, horizon);
    return seg;
}

/// Z-score statistics from the training segment, per (node, channel) or
/// a single global pair.
struct NormStats {
    Tensor mean;  // N × C
    Tensor std;   // N × C
    bool global = false;
    std::vector<std::string> warnings;
};

inline NormStats compute_norm_stats(const SpatioTemporalSeries& train, bool global = false) {
    train.validate();
    const std::size_t t = train.length(), n = train.num_nodes(), c = train.channels();
    NormStats st{Tensor(Shape{n, c}, 0.0), Tensor(Shape{n, c}, 1.0), global, {}};
    auto finish = [&](double sum, double sq, double count, std::size_t i, std::size_t k) {
        const double mean = sum / count;
        double var = sq / count - mean * mean;
        double sd = var > 0.0 ? std::sqrt(var) : 0.0;
        if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
            st.warnings.push_back(global ? "zero standard deviation; using 1"
                                         : "node " + std::to_string(i) + " channel " + std::to_string(k) +
                                               " has zero standard deviation; using 1");
            sd = 1.0;
        }
        return std::pair{mean, sd};
    };
    if (global) {
        // two-pass for accuracy
        double sum = 0.0;
        for (double v : train.values.data()) sum += v;
        const double mean = sum / static_cast<double>(train.values.size());
        double sq = 0.0;
        for (double v : train.values.data()) sq += (v - mean) * (v - mean);
        auto [m, sd] = finish(0.0, sq, static_cast<double>(train.values.size()), 0, 0);
        (void)m;
        st.mean.fill(mean);
        st.std.fill(sd);
        return st;
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < c; ++k) {
            double sum = 0.0;
            for (std::size_t s = 0; s < t; ++s) sum += train.at(s, i, k);
            const double mean = sum / static_cast<double>(t);
            double sq = 0.0;
            for (std::size_t s = 0; s < t; ++s) sq += (train.at(s, i, k) - mean) * (train.at(s, i, k) - mean);
            auto [m, sd] = finish(0.0, sq, static_cast<double>(t), i, k);
            (void)m;
            st.mean.at(i, k) = mean;
            st.std.at(i, k) = sd;
        }
    return st;
}

inline SpatioTemporalSeries normalize(const SpatioTemporalSeries& s, const NormStats& st) {
    if (st.mean.shape() != Shape{s.num_nodes(), s.channels()}) throw ShapeError("normalize", {s.values.shape(), st.mean.shape()});
    SpatioTemporalSeries out = s;
    const std::size_t row = s.num_nodes() * s.channels();
    for (std::size_t k = 0; k < out.values.size(); ++k)
        out.values[k] = (s.values[k] - st.mean[k % row]) / st.std[k % row];
    return out;
}

inline SpatioTemporalSeries denormalize(const SpatioTemporalSeries& s, const NormStats& st) {
    if (st.mean.shape() != Shape{s.num_nodes(), s.channels()}) throw ShapeError("denormalize", {s.values.shape(), st.mean.shape()});
    SpatioTemporalSeries out = s;
    const std::size_t row = s.num_nodes() * s.channels();
    for (std::size_t k = 0; k < out.values.size(); ++k) out.values[k] = s.values[k] * st.std[k % row] + st.mean[k % row];
    return out;
}

/// Inverse transform for a model output laid out N × B × (H·C).
inline Tensor denormalize_forecast(const Tensor& pred, const NormStats& st) {
    const std::size_t n = st.mean.dim(0), c = st.mean.dim(1);
    if (pred.rank() != 3 || pred.dim(0) != n || pred.dim(2) % c != 0) throw ShapeError("denormalize_forecast", {pred.shape(), st.mean.shape()});
    Tensor out(pred.shape());
    const std::size_t per_node = pred.dim(1) * pred.dim(2);
    for (std::size_t k = 0; k < pred.size(); ++k) {
        const std::size_t i = k / per_node, ch = (k % pred.dim(2)) % c;
        out[k] = pred[k] * st.std.at(i, ch) + st.mean.at(i, ch);
    }
    return out;
}

/// Model-ready mini-batch: history N×T×B×C, target N×B×(H·C) with the
/// target index h·C + c.
struct Batch {
    Tensor history;
    Tensor target;
};

inline Batch make_batch(const SpatioTemporalSeries& s, const std::vector<std::size_t>& origins, std::size_t history,
                        std::size_t horizon) {
    const std::size_t n = s.num_nodes(), c = s.channels(), b = origins.size();
    Batch out{Tensor(Shape{n, history, b, c}), Tensor(Shape{n, b, horizon * c})};
    for (std::size_t k = 0; k < b; ++k) {
        const std::size_t o = origins[k];
        if (o + history + horizon > s.length()) throw DataError("window origin " + std::to_string(o) + " runs past the series end");
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t ch = 0; ch < c; ++ch) {
                for (std::size_t t = 0; t < history; ++t)
                    out.history[((i * history + t) * b + k) * c + ch] = s.at(o + t, i, ch);
                for (std::size_t h = 0; h < horizon; ++h)
                    out.target[(i * b + k) * horizon * c + h * c + ch] = s.at(o + history + h, i, ch);
            }
    }
    return out;
}

/// Every window of a segment in origin order, chunked into batches of at most `batch_size`.
inline std::vector<Batch> all_batches(const SpatioTemporalSeries& s, std::size_t history, std::size_t horizon,
                                      std::size_t batch_size) {
    check_window_fit(s, history, horizon);
    const std::size_t count = window_count(s.length(), history, horizon);
    std::vector<Batch> out;
    for (std::size_t start = 0; start < count; start += batch_size) {
        std::vector<std::size_t> origins;
        for (std::size_t o = start; o < std::min(count, start + batch_size); ++o) origins.push_back(o);
        out.push_back(make_batch(s, origins, history, horizon));
    }
    return out;
}

/// Endless stream of shuffled training batches; reshuffles each epoch.
class BatchSampler {
public:
    BatchSampler(const SpatioTemporalSeries& s, std::size_t history, std::size_t horizon, std::size_t batch_size,
                 std::uint64_t seed)
        : series_(&s), history_(history), horizon_(horizon), batch_size_(batch_size), rng_(seed) {
        check_window_fit(s, history, horizon);
        if (batch_size == 0) throw DataError("batch size must be ≥ 1");
        order_.resize(window_count(s.length(), history, horizon));
        for (std::size_t k = 0; k < order_.size(); ++k) order_[k] = k;
        pos_ = order_.size();
    }

    Batch next() {
        std::vector<std::size_t> origins;
        while (origins.size() < std::min(batch_size_, order_.size())) {
            if (pos_ == order_.size()) {
                rng_.shuffle(order_.begin(), order_.end());
                pos_ = 0;
            }
            origins.push_back(order_[pos_++]);
        }
        return make_batch(*series_, origins, history_, horizon_);
    }

    std::size_t windows() const { return order_.size(); }

private:
    const SpatioTemporalSeries* series_;
    std::size_t history_, horizon_, batch_size_;
    Rng rng_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
};

}  // namespace agsl::data
