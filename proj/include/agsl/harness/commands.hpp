#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "agsl/graph.hpp"
#include "agsl/harness/config.hpp"
#include "agsl/harness/run_dir.hpp"
#include "agsl/metrics.hpp"
#include "agsl/sparsify.hpp"
#include "agsl/temporal/checkpoint.hpp"
#include "agsl/temporal/model.hpp"
#include "agsl/util/hash.hpp"

namespace agsl::harness {

// ---------------------------------------------------------------- data plumbing

inline data::SpatioTemporalSeries load_series(const DatasetRef& d) {
    if (d.synthetic) return data::generate_synthetic(*d.synthetic);
    return data::load_csv_dataset(d.csv_path, d.meta_path);
}

/// Node count and channel count always come from the dataset.
inline temporal::ModelConfig bind_model(temporal::ModelConfig m, const data::SpatioTemporalSeries& s) {
    m.num_nodes = s.num_nodes();
    m.in_channels = s.channels();
    m.validate();
    return m;
}

struct Workspace {
    temporal::ModelConfig model;
    data::PreparedData data;
};

inline Workspace open_workspace(const DatasetRef& d, const temporal::ModelConfig& model) {
    const auto series = load_series(d);
    Workspace w{bind_model(model, series), {}};
    w.data = data::prepare_data(series, d.ratios, w.model.history, w.model.horizon, d.global_stats);
    return w;
}

/// Level label used in directory names, e.g. 0.995 → "0.9950".
inline std::string level_label(double s) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", s);
    return buf;
}

inline std::string log_csv(const sparsify::TrainLog& log) {
    std::ostringstream os;
    log.write_csv(os);
    return os.str();
}

inline temporal::Checkpoint make_checkpoint(const temporal::ModelConfig& model, ParamSet params, graph::EdgeMask mask,
                                            const sparsify::SparsifyConfig& sc, std::uint64_t seed,
                                            const DatasetRef& dataset, const std::string& stage) {
    temporal::Checkpoint ck{model, std::move(params), std::move(mask), sc.gate, seed, nlohmann::json::object()};
    ck.extras["stage"] = stage;
    ck.extras["dataset"] = dataset_to_json(dataset);
    ck.extras["sparsify"] = sparsify::sparsify_config_to_json(sc);
    return ck;
}

inline graph::EdgeMask dense_mask(std::size_t n) {
    graph::EdgeMask m = graph::EdgeMask::initial(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m.set_keep(i, j);
    return m;
}

inline void save_checkpoint(RunDir& run, const std::string& rel, const temporal::Checkpoint& ck) {
    temporal::save_checkpoint(ck, run.path(rel).string());
    run.record(rel);
}

inline temporal::Checkpoint load_checkpoint(const std::string& path) { return temporal::load_checkpoint(path); }

/// Dataset a checkpoint was trained on, unless the caller supplies one.
inline DatasetRef checkpoint_dataset(const temporal::Checkpoint& ck, const std::optional<DatasetRef>& override_ref) {
    if (override_ref) return *override_ref;
    if (!ck.extras.contains("dataset")) throw ConfigError("checkpoint records no dataset; pass a config");
    return dataset_from_json(ck.extras.at("dataset"));
}

// ---------------------------------------------------------------- generate

/// Writes data.csv, meta.json and the spec under `out`.
inline nlohmann::json cmd_generate(const nlohmann::json& spec_json, const std::string& out) {
    data::SyntheticSpec spec;
    try {
        spec = data::spec_from_json(spec_json);
    } catch (const data::DataError& e) {
        throw ConfigError(e.what());
    }
    const auto series = data::generate_synthetic(spec);
    RunDir run(out, "generate", data::spec_to_json(spec));
    try {
        data::save_csv_dataset(series, run.path("data.csv").string(), run.path("meta.json").string());
    } catch (const data::DataError& e) {
        throw ArtifactError(e.what());
    }
    run.record("data.csv");
    run.record("meta.json");
    run.write_json("spec.json", data::spec_to_json(spec));
    run.write_manifest();
    return {{"data", run.path("data.csv").string()},
            {"meta", run.path("meta.json").string()},
            {"length", series.length()},
            {"num_nodes", series.num_nodes()}};
}

// ---------------------------------------------------------------- train

/// Pretrains one seed (optionally continuing from a checkpoint) and writes
/// checkpoint.json, log.csv and summary.json under `out`.
inline nlohmann::json cmd_train(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& out,
                                const std::optional<std::string>& resume = std::nullopt) {
    cfg.validate();
    Workspace w = open_workspace(cfg.dataset, cfg.model);
    sparsify::SparsifyConfig sc = cfg.sparsify;
    sc.seed = seed;
    ParamSet init;
    if (resume) {
        temporal::Checkpoint ck = load_checkpoint(*resume);
        if (!(ck.config == w.model)) throw ConfigError("resume checkpoint was trained with a different model config");
        init = std::move(ck.params);
    } else {
        init = temporal::init_params(w.model, seed);
    }
    auto res = sparsify::pretrain(w.model, std::move(init), w.data, sc);
    RunDir run(out, "train", experiment_to_json(cfg));
    auto ck = make_checkpoint(w.model, std::move(res.params), dense_mask(w.model.num_nodes), sc, seed, cfg.dataset, "pretrain");
    if (resume) ck.extras["resumed_from"] = *resume;
    save_checkpoint(run, "checkpoint.json", ck);
    run.write_text("log.csv", log_csv(res.log));
    nlohmann::json summary = res.log.summary();
    summary["seed"] = seed;
    summary["checkpoint_sha256"] = run.hash_of("checkpoint.json");
    run.write_json("summary.json", summary);
    run.write_manifest();
    return summary;
}

// ---------------------------------------------------------------- sparsify

/// One localised checkpoint per sweep level, all derived from the same
/// pretrained parent.
inline nlohmann::json cmd_sparsify(const ExperimentConfig& cfg, const std::string& checkpoint, const std::string& out) {
    cfg.validate();
    const temporal::Checkpoint parent = load_checkpoint(checkpoint);
    Workspace w = open_workspace(checkpoint_dataset(parent, cfg.dataset), parent.config);
    RunDir run(out, "sparsify", experiment_to_json(cfg));
    const std::string parent_hash = util::sha256_file(checkpoint);
    nlohmann::json levels = nlohmann::json::array();
    for (double level : cfg.sweep) {
        sparsify::SparsifyConfig sc = cfg.sparsify;
        sc.seed = parent.seed;
        sc.target_sparsity = level;
        auto res = sparsify::ags_sparsify(w.model, parent.params, w.data, sc);
        const std::string dir = "level_" + level_label(level) + "/";
        auto ck = make_checkpoint(w.model, std::move(res.params), res.mask, sc, parent.seed, checkpoint_dataset(parent, cfg.dataset),
                                  "sparsify");
        ck.extras["parent_sha256"] = parent_hash;
        ck.extras["target_sparsity"] = level;
        save_checkpoint(run, dir + "checkpoint.json", ck);
        run.write_text(dir + "log.csv", log_csv(res.log));
        nlohmann::json s = res.log.summary();
        s["target_sparsity"] = level;
        s["achieved_sparsity"] = sparsify::current_sparsity(res.mask);
        s["mask_sha256"] = temporal::mask_hash(res.mask);
        s["checkpoint_sha256"] = run.hash_of(dir + "checkpoint.json");
        run.write_json(dir + "summary.json", s);
        levels.push_back(s);
    }
    run.write_manifest({{"parent_sha256", parent_hash}});
    return {{"parent_sha256", parent_hash}, {"levels", levels}};
}

// ---------------------------------------------------------------- retrain

inline nlohmann::json cmd_retrain(const ExperimentConfig& cfg, const std::string& checkpoint, std::uint64_t init_seed,
                                  const std::string& out) {
    cfg.validate();
    const temporal::Checkpoint local = load_checkpoint(checkpoint);
    const DatasetRef dataset = checkpoint_dataset(local, cfg.dataset);
    Workspace w = open_workspace(dataset, local.config);
    sparsify::SparsifyConfig sc = cfg.sparsify;
    sc.seed = local.seed;
    auto res = sparsify::reinit_retrain(w.model, local.mask, w.data, sc, init_seed);
    RunDir run(out, "retrain", experiment_to_json(cfg));
    auto ck = make_checkpoint(w.model, std::move(res.params), local.mask, sc, local.seed, dataset, "retrain");
    ck.extras["init_seed"] = init_seed;
    ck.extras["parent_sha256"] = util::sha256_file(checkpoint);
    save_checkpoint(run, "checkpoint.json", ck);
    run.write_text("log.csv", log_csv(res.log));
    nlohmann::json s = res.log.summary();
    s["init_seed"] = init_seed;
    s["input_mask_sha256"] = temporal::mask_hash(local.mask);
    s["mask_sha256"] = temporal::mask_hash(ck.mask);
    s["checkpoint_sha256"] = run.hash_of("checkpoint.json");
    run.write_json("summary.json", s);
    run.write_manifest();
    return s;
}

// ---------------------------------------------------------------- eval

inline metrics::MetricReport evaluate_checkpoint(const temporal::Checkpoint& ck, const data::PreparedData& d,
                                                 const std::string& split) {
    return sparsify::evaluate(ck.config, ck.params, ck.mask.binary(), d.segment(split), d.stats);
}

/// Raw-unit metrics for each requested split, keyed by split name.
inline nlohmann::json cmd_eval(const std::string& checkpoint, const std::vector<std::string>& splits,
                               const std::optional<DatasetRef>& dataset = std::nullopt) {
    const temporal::Checkpoint ck = load_checkpoint(checkpoint);
    Workspace w = open_workspace(checkpoint_dataset(ck, dataset), ck.config);
    if (!(w.model == ck.config)) throw ConfigError("dataset shape does not match the checkpoint's model");
    nlohmann::json j{{"checkpoint_sha256", util::sha256_file(checkpoint)}, {"splits", nlohmann::json::object()}};
    for (const auto& s : splits) {
        try {
            j["splits"][s] = metrics::to_json(evaluate_checkpoint(ck, w.data, s));
        } catch (const data::DataError& e) {
            throw ConfigError(e.what());
        }
    }
    return j;
}

// ---------------------------------------------------------------- flops

inline metrics::CostReport checkpoint_cost(const temporal::Checkpoint& ck, std::size_t windows) {
    const auto& c = ck.config;
    const Tensor history(Shape{c.num_nodes, c.history, windows, c.in_channels}, 0.0);
    return metrics::cost_report(c, ck.params, ck.mask.binary(), history);
}

/// Aligned text table: one row per cost term, analytic and counted columns.
inline std::string render_cost_table(const metrics::CostReport& r) {
    std::ostringstream os;
    os << std::left << std::setw(14) << "term" << std::right << std::setw(16) << "analytic" << std::setw(16) << "counted"
       << '\n';
    for (std::size_t k = 0; k < r.analytic.size(); ++k)
        os << std::left << std::setw(14) << kFlopTermNames[k] << std::right << std::setw(16) << r.analytic[k]
           << std::setw(16) << r.counted[k] << '\n';
    os << std::left << std::setw(14) << "total" << std::right << std::setw(16) << r.flops_analytic << std::setw(16)
       << r.flops_counted << '\n';
    return os.str();
}

/// Cost of a checkpoint and its speedup over a dense reference. Without a
/// reference checkpoint the speedup is analytic against an all-ones mask.
inline nlohmann::json cmd_flops(const std::string& checkpoint, const std::optional<std::string>& dense_checkpoint,
                                std::size_t windows = 1, std::string* table = nullptr) {
    if (windows == 0) throw ConfigError("windows must be ≥ 1");
    const temporal::Checkpoint ck = load_checkpoint(checkpoint);
    const metrics::CostReport local = checkpoint_cost(ck, windows);
    nlohmann::json j{{"checkpoint", metrics::to_json(local)}};
    if (dense_checkpoint) {
        const temporal::Checkpoint dense = load_checkpoint(*dense_checkpoint);
        if (!(dense.config == ck.config)) throw ConfigError("dense reference has a different model config");
        const metrics::CostReport ref = checkpoint_cost(dense, windows);
        const double s = metrics::speedup(ref, local);
        j["dense"] = metrics::to_json(ref);
        j["dense_reference"] = true;
        j["speedup"] = s;
        j["speedup_text"] = metrics::format_speedup(s);
    } else {
        const std::size_t n = ck.config.num_nodes;
        const double s = metrics::speedup(metrics::flops_analytic(ck.config, n * n, windows), local);
        j["dense_reference"] = false;
        j["speedup_analytic"] = s;
        j["speedup_text"] = metrics::format_speedup(s);
    }
    if (table) *table = render_cost_table(local);
    return j;
}

// ---------------------------------------------------------------- inspect

/// Adjacency, effective adjacency, gate values (when a gate weight exists)
/// and a fixed-width histogram of adjacency entries over [0, 1].
inline nlohmann::json cmd_inspect(const std::string& checkpoint, const std::string& out, std::size_t bins = 20) {
    if (bins == 0) throw ConfigError("bins must be ≥ 1");
    const temporal::Checkpoint ck = load_checkpoint(checkpoint);
    const Tensor a = graph::compute_adaptive_adjacency(ck.params.value(temporal::kEmbeddingParam));
    const Tensor eff = graph::apply_mask(a, ck.mask.binary());
    RunDir run(out, "inspect", {{"checkpoint", checkpoint}, {"bins", bins}});
    auto matrix_text = [](const Tensor& m) {
        std::ostringstream os;
        graph::write_matrix_csv(os, m);
        return os.str();
    };
    run.write_text("adjacency.csv", matrix_text(a));
    run.write_text("effective_adjacency.csv", matrix_text(eff));
    bool have_gates = ck.params.contains(temporal::kGateWeightParam);
    if (have_gates) {
        Tape t(nullptr, false);
        const Tensor u = graph::gate_logits(t.constant(ck.params.value(temporal::kEmbeddingParam)),
                                            t.constant(ck.params.value(temporal::kGateWeightParam)))
                             .value();
        run.write_text("gates.csv", matrix_text(graph::deterministic_gate(u, ck.gate, ck.mask)));
    }
    const graph::Histogram h = graph::histogram(a, bins, 0.0, 1.0);
    std::ostringstream hs;
    graph::write_histogram_csv(hs, h);
    run.write_text("histogram.csv", hs.str());
    run.write_manifest();
    return {{"num_nodes", ck.config.num_nodes},
            {"bins", h.counts},
            {"bin_total", h.total()},
            {"gates", have_gates},
            {"sparsity", sparsify::current_sparsity(ck.mask)}};
}

// ---------------------------------------------------------------- experiment

/// One row of the tidy curves table.
struct CurveRow {
    double sparsity = 0.0;  // sweep level; 0 for the dense baseline
    std::uint64_t seed = 0;
    std::string variant;    // dense, ags or retrain
    std::optional<metrics::MetricReport> metrics;
    std::uint64_t flops = 0;
    double achieved_sparsity = 0.0;
    std::string checkpoint;  // relative path, empty on failure
    std::string error;
};

namespace detail {

struct CellOutput {
    CurveRow row;
    std::optional<temporal::Checkpoint> ck;
    std::string log;
};

inline std::vector<CellOutput> run_seed(const ExperimentConfig& cfg, const Workspace& w, std::uint64_t seed) {
    std::vector<CellOutput> cells;
    sparsify::SparsifyConfig sc = cfg.sparsify;
    sc.seed = seed;
    const std::string base = "seed_" + std::to_string(seed) + "/";
    auto cost = [&](const graph::EdgeMask& m) {
        return metrics::flops_analytic(w.model, metrics::kept_edges(m)).flops_analytic;
    };
    auto test_metrics = [&](const ParamSet& p, const graph::EdgeMask& m) {
        return sparsify::evaluate(w.model, p, m.binary(), w.data.test, w.data.stats);
    };

    CellOutput dense;
    dense.row = {0.0, seed, "dense", std::nullopt, 0, 0.0, base + "dense/checkpoint.json", {}};
    std::optional<ParamSet> parent;
    try {
        auto res = sparsify::pretrain(w.model, temporal::init_params(w.model, seed), w.data, sc);
        const auto mask = dense_mask(w.model.num_nodes);
        dense.row.metrics = test_metrics(res.params, mask);
        dense.row.flops = cost(mask);
        dense.log = log_csv(res.log);
        parent = res.params;
        dense.ck = make_checkpoint(w.model, std::move(res.params), mask, sc, seed, cfg.dataset, "pretrain");
    } catch (const std::exception& e) {
        dense.row.error = e.what();
        dense.row.checkpoint.clear();
    }
    cells.push_back(std::move(dense));

    for (double level : cfg.sweep) {
        const std::string lv = level_label(level);
        CellOutput ags;
        ags.row = {level, seed, "ags", std::nullopt, 0, 0.0, base + "ags_" + lv + "/checkpoint.json", {}};
        std::optional<graph::EdgeMask> mask;
        try {
            if (!parent) throw std::runtime_error("pretraining failed");
            sparsify::SparsifyConfig lsc = sc;
            lsc.target_sparsity = level;
            auto res = sparsify::ags_sparsify(w.model, *parent, w.data, lsc);
            ags.row.metrics = test_metrics(res.params, res.mask);
            ags.row.flops = cost(res.mask);
            ags.row.achieved_sparsity = sparsify::current_sparsity(res.mask);
            ags.log = log_csv(res.log);
            mask = res.mask;
            ags.ck = make_checkpoint(w.model, std::move(res.params), res.mask, lsc, seed, cfg.dataset, "sparsify");
            ags.ck->extras["target_sparsity"] = level;
        } catch (const std::exception& e) {
            ags.row.error = e.what();
            ags.row.checkpoint.clear();
        }
        cells.push_back(std::move(ags));
        if (!cfg.retrain) continue;

        CellOutput re;
        re.row = {level, seed, "retrain", std::nullopt, 0, 0.0, base + "retrain_" + lv + "/checkpoint.json", {}};
        try {
            if (!mask) throw std::runtime_error("no localised mask to retrain under");
            const std::uint64_t init_seed = seed + cfg.retrain_seed_offset;
            auto res = sparsify::reinit_retrain(w.model, *mask, w.data, sc, init_seed);
            re.row.metrics = test_metrics(res.params, *mask);
            re.row.flops = cost(*mask);
            re.row.achieved_sparsity = sparsify::current_sparsity(*mask);
            re.log = log_csv(res.log);
            re.ck = make_checkpoint(w.model, std::move(res.params), *mask, sc, seed, cfg.dataset, "retrain");
            re.ck->extras["init_seed"] = init_seed;
            re.ck->extras["target_sparsity"] = level;
        } catch (const std::exception& e) {
            re.row.error = e.what();
            re.row.checkpoint.clear();
        }
        cells.push_back(std::move(re));
    }
    return cells;
}

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Population standard deviation; a single value gives 0.
inline double stddev(const std::vector<double>& v) {
    double mu = 0.0;
    for (double x : v) mu += x;
    mu /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - mu) * (x - mu);
    return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace detail

inline std::string curves_csv(const std::vector<CurveRow>& rows) {
    std::ostringstream os;
    os << "sparsity,seed,variant,mae,rmse,mape,flops\n";
    for (const auto& r : rows) {
        os << graph::format_g17(r.sparsity) << ',' << r.seed << ',' << r.variant << ',';
        if (r.metrics) {
            os << graph::format_g17(r.metrics->mae) << ',' << graph::format_g17(r.metrics->rmse) << ',';
            if (r.metrics->mape_defined) os << graph::format_g17(r.metrics->mape);
            os << ',' << r.flops;
        } else {
            os << ",,,";
        }
        os << '\n';
    }
    return os.str();
}

/// Median and standard deviation over seeds for each (variant, sparsity).
inline nlohmann::json summarise(const std::vector<CurveRow>& rows) {
    std::vector<std::pair<std::string, double>> keys;
    for (const auto& r : rows)
        if (std::find(keys.begin(), keys.end(), std::make_pair(r.variant, r.sparsity)) == keys.end())
            keys.emplace_back(r.variant, r.sparsity);
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& [variant, level] : keys) {
        std::vector<double> mae, rmse, mape, flops;
        for (const auto& r : rows)
            if (r.variant == variant && r.sparsity == level && r.metrics) {
                mae.push_back(r.metrics->mae);
                rmse.push_back(r.metrics->rmse);
                if (r.metrics->mape_defined) mape.push_back(r.metrics->mape);
                flops.push_back(static_cast<double>(r.flops));
            }
        nlohmann::json c{{"variant", variant}, {"sparsity", level}, {"runs", mae.size()}};
        auto stat = [&](const char* name, const std::vector<double>& v) {
            if (v.empty()) {
                c[name] = {{"median", nullptr}, {"stddev", nullptr}};
                return;
            }
            c[name] = {{"median", detail::median(v)}, {"stddev", detail::stddev(v)}};
        };
        stat("mae", mae);
        stat("rmse", rmse);
        stat("mape", mape);
        stat("flops", flops);
        cells.push_back(c);
    }
    return cells;
}

struct ExperimentResult {
    std::vector<CurveRow> rows;
    nlohmann::json summary;
};

/// Per seed: pretrain, sparsify to every sweep level from the shared
/// parent, evaluate on the test split, then reinitialise and retrain under
/// each mask. Failures are recorded per cell and the run continues.
inline ExperimentResult cmd_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const Workspace w = open_workspace(cfg.dataset, cfg.model);
    RunDir run(cfg.output_dir, "experiment", experiment_to_json(cfg));

    std::vector<std::vector<detail::CellOutput>> per_seed(cfg.seeds.size());
    if (cfg.workers > 1 && !deterministic_mode(false)) {
        std::vector<std::future<std::vector<detail::CellOutput>>> jobs;
        for (std::size_t k = 0; k < cfg.seeds.size(); ++k) {
            if (jobs.size() == cfg.workers) {
                const std::size_t done = k - jobs.size();
                per_seed[done] = jobs.front().get();
                jobs.erase(jobs.begin());
            }
            jobs.push_back(std::async(std::launch::async, [&, k] { return detail::run_seed(cfg, w, cfg.seeds[k]); }));
        }
        const std::size_t first = cfg.seeds.size() - jobs.size();
        for (std::size_t k = 0; k < jobs.size(); ++k) per_seed[first + k] = jobs[k].get();
    } else {
        for (std::size_t k = 0; k < cfg.seeds.size(); ++k) per_seed[k] = detail::run_seed(cfg, w, cfg.seeds[k]);
    }

    ExperimentResult result;
    nlohmann::json rows_json = nlohmann::json::array(), failures = nlohmann::json::array();
    for (auto& cells : per_seed)
        for (auto& cell : cells) {
            CurveRow& r = cell.row;
            nlohmann::json rj{{"sparsity", r.sparsity}, {"seed", r.seed}, {"variant", r.variant}};
            if (cell.ck) {
                save_checkpoint(run, r.checkpoint, *cell.ck);
                const std::string dir = r.checkpoint.substr(0, r.checkpoint.rfind('/') + 1);
                run.write_text(dir + "log.csv", cell.log);
                rj["checkpoint"] = r.checkpoint;
                rj["checkpoint_sha256"] = run.hash_of(r.checkpoint);
                rj["mask_sha256"] = temporal::mask_hash(cell.ck->mask);
                rj["achieved_sparsity"] = r.achieved_sparsity;
                rj["metrics"] = metrics::to_json(*r.metrics);
                rj["flops"] = r.flops;
            } else {
                rj["error"] = r.error;
                failures.push_back(rj);
            }
            rows_json.push_back(rj);
            result.rows.push_back(std::move(r));
        }
    run.write_text("curves.csv", curves_csv(result.rows));
    result.summary = {{"cells", summarise(result.rows)}, {"rows", rows_json}, {"failures", failures}};
    run.write_json("summary.json", result.summary);
    run.write_manifest();
    return result;
}

}  // namespace agsl::harness
