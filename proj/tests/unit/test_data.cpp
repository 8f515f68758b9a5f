#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "agsl/data.hpp"
#include "support/ls_oracle.hpp"

using namespace agsl;
using namespace agsl::data;

namespace {

SpatioTemporalSeries ramp(std::size_t len, std::size_t n = 2, std::size_t c = 1) {
    Tensor v(Shape{len, n, c});
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = static_cast<double>(k) * 0.5 - 3.0;
    return {v, 5.0, "ramp"};
}

DatasetMeta meta(std::size_t n, std::size_t c = 1) { return {n, c, 5.0, "t", false}; }

}  // namespace

TEST(Csv, ParsesRowsIntoSeries) {
    std::istringstream in("1,2\n3,4\n5,6\n7,8\n");
    auto s = parse_csv_dataset(in, meta(2));
    EXPECT_EQ(s.values.shape(), (Shape{4, 2, 1}));
    EXPECT_EQ(s.at(2, 1, 0), 6.0);
}

TEST(Csv, HeaderRowIsSkipped) {
    std::istringstream in("a,b\n1,2\n");
    DatasetMeta m = meta(2);
    m.header = true;
    EXPECT_EQ(parse_csv_dataset(in, m).length(), 1u);
}

TEST(Csv, ColumnCountMismatchNamesRow) {
    std::istringstream in("1,2\n3,4\n");
    try {
        parse_csv_dataset(in, meta(3));
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos) << e.what();
    }
}

TEST(Csv, RaggedRowRejected) {
    std::istringstream in("1,2\n3\n");
    try {
        parse_csv_dataset(in, meta(2));
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos) << e.what();
    }
}

TEST(Csv, NonNumericCellNamesCoordinates) {
    std::istringstream in("1,2\n3,x4\n");
    try {
        parse_csv_dataset(in, meta(2));
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("row 2, column 2"), std::string::npos) << e.what();
    }
}

TEST(Csv, ExportImportIsLossless) {
    SyntheticSpec spec;
    spec.num_nodes = 3;
    spec.length = 50;
    spec.mode = SyntheticMode::SpatialEssential;
    auto s = generate_synthetic(spec);
    const auto dir = std::filesystem::temp_directory_path();
    const auto d = (dir / "agsl_data_rt.csv").string(), m = (dir / "agsl_data_rt.json").string();
    save_csv_dataset(s, d, m);
    auto back = load_csv_dataset(d, m);
    EXPECT_EQ(back.values, s.values);
    EXPECT_EQ(back.name, s.name);
    std::filesystem::remove(d);
    std::filesystem::remove(m);
}

TEST(Csv, MissingFilesRaise) {
    EXPECT_THROW(load_csv_dataset("/nonexistent/x.csv", "/nonexistent/x.json"), DataError);
}

TEST(Synthetic, SameSpecSameSeries) {
    SyntheticSpec spec;
    spec.length = 300;
    EXPECT_EQ(generate_synthetic(spec).values, generate_synthetic(spec).values);
    spec.seed = 1;
    auto other = generate_synthetic(spec);
    spec.seed = 0;
    EXPECT_NE(other.values, generate_synthetic(spec).values);
}

TEST(Synthetic, SpecJsonRoundTripAndValidation) {
    SyntheticSpec spec;
    spec.mode = SyntheticMode::SpatialEssential;
    spec.alpha = 0.3;
    auto back = spec_from_json(spec_to_json(spec));
    EXPECT_EQ(spec_to_json(back), spec_to_json(spec));
    EXPECT_THROW(spec_from_json({{"alpha", 2.0}}), DataError);
    EXPECT_THROW(spec_from_json({{"mode", "bogus"}}), DataError);
    EXPECT_THROW(spec_from_json({{"nodes", 3}}), DataError);
    EXPECT_THROW(spec_from_json(nlohmann::json::array()), DataError);
}

TEST(Synthetic, NoMixingIsolatesNoiseStreams) {
    for (auto mode : {SyntheticMode::Subsumed, SyntheticMode::SpatialEssential}) {
        SyntheticSpec spec;
        spec.num_nodes = 6;
        spec.length = 200;
        spec.alpha = 0.0;
        spec.mode = mode;
        auto st = draw_structure(spec);
        auto z = draw_noise(spec);
        auto base = synthesize(spec, st, z);
        for (std::size_t t = 0; t < z.innovation.dim(0); ++t) {
            z.innovation.at(t, 2) += 1.0;
            z.observation.at(t, 2) -= 0.7;
        }
        auto pert = synthesize(spec, st, z);
        bool j_changed = false;
        for (std::size_t t = 0; t < spec.length; ++t)
            for (std::size_t i = 0; i < 6; ++i) {
                if (i == 2) {
                    j_changed = j_changed || pert.at(t, i, 0) != base.at(t, i, 0);
                } else {
                    ASSERT_EQ(pert.at(t, i, 0), base.at(t, i, 0));
                }
            }
        EXPECT_TRUE(j_changed);
    }
}

TEST(Synthetic, MixingPropagatesAlongLatentEdges) {
    SyntheticSpec spec;
    spec.num_nodes = 6;
    spec.length = 100;
    spec.mode = SyntheticMode::SpatialEssential;
    auto st = draw_structure(spec);
    auto z = draw_noise(spec);
    auto base = synthesize(spec, st, z);
    for (std::size_t t = 0; t < z.innovation.dim(0); ++t) z.innovation.at(t, 0) += 1.0;
    auto pert = synthesize(spec, st, z);
    for (std::size_t i = 0; i < 6; ++i) {
        bool direct = std::find(st.in_neighbours[i].begin(), st.in_neighbours[i].end(), 0) != st.in_neighbours[i].end();
        if (direct) {
            EXPECT_NE(pert.at(50, i, 0), base.at(50, i, 0)) << i;
        }
    }
}

TEST(Synthetic, EveryNodeHasAnInNeighbour) {
    SyntheticSpec spec;
    spec.density = 0.0;
    auto st = draw_structure(spec);
    for (std::size_t i = 0; i < spec.num_nodes; ++i) {
        ASSERT_EQ(st.in_neighbours[i].size(), 1u);
        EXPECT_NE(st.in_neighbours[i][0], i);
    }
}

namespace {

std::pair<double, double> oracle_pair(SyntheticMode mode, std::uint64_t seed) {
    SyntheticSpec spec;
    spec.mode = mode;
    spec.seed = seed;
    auto s = generate_synthetic(spec);
    auto seg = split(s, {0.6, 0.2, 0.2}, 12, 12);
    auto mae = [&](bool nb) { return agsl::testing::ls_oracle_mae(seg.train, 0, seg.test, seg.test_begin, 12, spec.period, nb); };
    return {mae(false), mae(true)};
}

}  // namespace

TEST(Synthetic, SpatialEssentialNeedsNeighbours) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        auto [own, nb] = oracle_pair(SyntheticMode::SpatialEssential, seed);
        EXPECT_GT(own, nb) << "seed " << seed;
        EXPECT_GE((own - nb) / own, 0.05) << "own " << own << " neighbour-aware " << nb;
    }
}

TEST(Synthetic, SubsumedNeedsOnlyOwnHistory) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        auto [own, nb] = oracle_pair(SyntheticMode::Subsumed, seed);
        EXPECT_LE(std::abs(own - nb) / own, 0.01) << "own " << own << " neighbour-aware " << nb;
    }
}

TEST(Windows, CountAndContiguity) {
    auto s = ramp(10);
    auto w = make_windows(s, 3, 2);
    ASSERT_EQ(w.size(), 6u);
    EXPECT_EQ(make_windows(ramp(5), 3, 2).size(), 1u);
    EXPECT_EQ(w[0].target, s.slice(3, 5).values);
    for (const auto& x : w) {
        EXPECT_EQ(x.history, s.slice(x.origin, x.origin + 3).values);
        EXPECT_EQ(x.target, s.slice(x.origin + 3, x.origin + 5).values);
    }
    EXPECT_THROW(make_windows(ramp(4), 3, 2), DataError);
}

TEST(Windows, BatchLayoutMatchesWindows) {
    auto s = ramp(12, 3, 2);
    auto w = make_windows(s, 4, 3);
    Batch b = make_batch(s, {0, 5, 2}, 4, 3);
    EXPECT_EQ(b.history.shape(), (Shape{3, 4, 3, 2}));
    EXPECT_EQ(b.target.shape(), (Shape{3, 3, 6}));
    const std::size_t origins[] = {0, 5, 2};
    for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t c = 0; c < 2; ++c) {
                for (std::size_t t = 0; t < 4; ++t)
                    EXPECT_EQ(b.history[((i * 4 + t) * 3 + k) * 2 + c], w[origins[k]].history.at(t, i, c));
                for (std::size_t h = 0; h < 3; ++h)
                    EXPECT_EQ(b.target[(i * 3 + k) * 6 + h * 2 + c], w[origins[k]].target.at(h, i, c));
            }
}

TEST(Windows, AllBatchesCoverEveryWindowOnce) {
    auto s = ramp(30);
    auto batches = all_batches(s, 4, 2, 7);
    std::size_t total = 0;
    for (const auto& b : batches) total += b.history.dim(2);
    EXPECT_EQ(total, window_count(30, 4, 2));
}

TEST(Windows, SamplerIsDeterministicAndEpochComplete) {
    auto s = ramp(20);
    BatchSampler a(s, 3, 2, 4, 9), b(s, 3, 2, 4, 9);
    for (int k = 0; k < 10; ++k) EXPECT_EQ(a.next().history, b.next().history);
}

TEST(Split, ThreeWayRatios) {
    auto seg = split(ramp(100), {0.6, 0.2, 0.2}, 3, 2);
    EXPECT_EQ(seg.train.length(), 60u);
    EXPECT_EQ(seg.val.length(), 20u);
    EXPECT_EQ(seg.test.length(), 20u);
    EXPECT_EQ(seg.test.values, ramp(100).slice(80, 100).values);
}

TEST(Split, TwoWayRatios) {
    auto seg = split(ramp(100), {0.8, 0.2}, 3, 2);
    EXPECT_EQ(seg.train.length(), 80u);
    EXPECT_EQ(seg.val.length(), 0u);
    EXPECT_EQ(seg.test.length(), 20u);
}

TEST(Split, NoWindowSpansABoundary) {
    auto s = ramp(100);
    auto seg = split(s, {0.6, 0.2, 0.2}, 5, 3);
    // Windows built per segment use only frames of that segment.
    for (const auto& w : make_windows(seg.val, 5, 3))
        EXPECT_EQ(w.target, s.slice(seg.val_begin + w.origin + 5, seg.val_begin + w.origin + 8).values);
    EXPECT_LE(window_count(seg.train.length(), 5, 3) - 1 + 5 + 3, seg.val_begin);
}

TEST(Split, InvalidInputs) {
    EXPECT_THROW(split(ramp(100), {0.5, 0.2}, 3, 2), DataError);
    EXPECT_THROW(split(ramp(100), {0.6, -0.2, 0.6}, 3, 2), DataError);
    EXPECT_THROW(split(ramp(20), {0.6, 0.2, 0.2}, 3, 2), DataError);
    EXPECT_THROW(split(ramp(100), {1.0}, 3, 2), DataError);
}

TEST(Normalize, RoundTrip) {
    auto s = generate_synthetic(SyntheticSpec{});
    auto st = compute_norm_stats(s);
    EXPECT_TRUE(st.warnings.empty());
    auto back = denormalize(normalize(s, st), st);
    EXPECT_LE(max_abs_diff(back.values, s.values), 1e-12);
    auto z = normalize(s, st);
    double mean0 = 0;
    for (std::size_t t = 0; t < z.length(); ++t) mean0 += z.at(t, 0, 0);
    EXPECT_NEAR(mean0 / static_cast<double>(z.length()), 0.0, 1e-12);
}

TEST(Normalize, ConstantSeriesWarnsAndMapsToZero) {
    SpatioTemporalSeries s{Tensor(Shape{10, 2, 1}, 4.0), 5.0, "c"};
    auto st = compute_norm_stats(s);
    EXPECT_EQ(st.warnings.size(), 2u);
    const auto z = normalize(s, st);
    for (double v : z.values.data()) EXPECT_EQ(v, 0.0);
    auto g = compute_norm_stats(s, true);
    EXPECT_EQ(g.warnings.size(), 1u);
}

TEST(Normalize, StatsIgnoreTestSegment) {
    auto s = ramp(100);
    auto seg = split(s, {0.6, 0.2, 0.2}, 3, 2);
    auto st = compute_norm_stats(seg.train);
    SpatioTemporalSeries s2 = s;
    for (std::size_t k = 80 * 2; k < s2.values.size(); ++k) s2.values[k] = 1e6;
    auto st2 = compute_norm_stats(split(s2, {0.6, 0.2, 0.2}, 3, 2).train);
    EXPECT_EQ(st.mean, st2.mean);
    EXPECT_EQ(st.std, st2.std);
}

TEST(Normalize, ForecastInverseUsesNodeStats) {
    auto s = ramp(40, 2, 1);
    auto st = compute_norm_stats(s);
    auto z = normalize(s, st);
    Batch bz = make_batch(z, {3, 7}, 4, 3), b = make_batch(s, {3, 7}, 4, 3);
    EXPECT_LE(max_abs_diff(denormalize_forecast(bz.target, st), b.target), 1e-12);
}
