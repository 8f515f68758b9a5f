#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "agsl/data/prepared.hpp"
#include "agsl/graph/export.hpp"
#include "agsl/metrics/metrics.hpp"
#include "agsl/sparsify/adam.hpp"
#include "agsl/sparsify/loss.hpp"
#include "agsl/temporal/model.hpp"

namespace agsl::sparsify {

/// Budgets count optimiser steps (one mini-batch each). Patience counts
/// validation evaluations, which happen every `eval_every` steps.
struct SparsifyConfig {
    double target_sparsity = 0.99;  // s_g, off-diagonal fraction
    double lambda = 1e-4;
    std::size_t pretrain_steps = 1500;   // N1
    std::size_t sparsify_steps = 2000;   // N2
    double prune_quantum = 0.0;          // p_g; 0 means s_g / 20
    AdamConfig optimiser{};
    std::size_t batch_size = 32;
    std::size_t patience = 15;
    std::size_t eval_every = 25;
    std::uint64_t seed = 0;
    graph::GateParams gate{};
    double candidate_threshold = 0.5;
    bool force_prune_at_phase_end = true;
    double settle_fraction = 0.5;  // share of each phase trained after its candidates are removed
    double final_settle_fraction = 0.6;  // share of N2 trained under the final binary mask

    double quantum() const { return prune_quantum > 0.0 ? prune_quantum : target_sparsity / 20.0; }

    void validate() const {
        if (!(target_sparsity >= 0.0 && target_sparsity <= 1.0))
            throw std::invalid_argument("target sparsity must lie in [0, 1]");
        if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be ≥ 0");
        if (!(prune_quantum >= 0.0 && prune_quantum <= 1.0)) throw std::invalid_argument("prune quantum must lie in (0, 1]");
        if (!(optimiser.lr >= 0.0)) throw std::invalid_argument("learning rate must be ≥ 0");
        if (batch_size == 0) throw std::invalid_argument("batch size must be ≥ 1");
        if (eval_every == 0) throw std::invalid_argument("eval_every must be ≥ 1");
        if (!(candidate_threshold > 0.0 && candidate_threshold < 1.0))
            throw std::invalid_argument("candidate threshold must lie in (0, 1)");
        if (!(settle_fraction >= 0.0 && settle_fraction < 1.0)) throw std::invalid_argument("settle fraction must lie in [0, 1)");
        if (!(final_settle_fraction >= 0.0 && final_settle_fraction < 1.0))
            throw std::invalid_argument("final settle fraction must lie in [0, 1)");
        gate.validate();
    }
};

inline nlohmann::json sparsify_config_to_json(const SparsifyConfig& c) {
    return {{"target_sparsity", c.target_sparsity},
            {"lambda", c.lambda},
            {"pretrain_steps", c.pretrain_steps},
            {"sparsify_steps", c.sparsify_steps},
            {"prune_quantum", c.prune_quantum},
            {"learning_rate", c.optimiser.lr},
            {"max_grad_norm", c.optimiser.max_grad_norm},
            {"batch_size", c.batch_size},
            {"patience", c.patience},
            {"eval_every", c.eval_every},
            {"seed", c.seed},
            {"gate_beta", c.gate.beta},
            {"candidate_threshold", c.candidate_threshold},
            {"force_prune_at_phase_end", c.force_prune_at_phase_end},
            {"settle_fraction", c.settle_fraction},
            {"final_settle_fraction", c.final_settle_fraction}};
}

inline SparsifyConfig sparsify_config_from_json(const nlohmann::json& j, SparsifyConfig c = {}) {
    if (!j.is_object()) throw std::invalid_argument("sparsify config must be a JSON object");
    c.target_sparsity = j.value("target_sparsity", c.target_sparsity);
    c.lambda = j.value("lambda", c.lambda);
    c.pretrain_steps = j.value("pretrain_steps", c.pretrain_steps);
    c.sparsify_steps = j.value("sparsify_steps", c.sparsify_steps);
    c.prune_quantum = j.value("prune_quantum", c.prune_quantum);
    c.optimiser.lr = j.value("learning_rate", c.optimiser.lr);
    c.optimiser.max_grad_norm = j.value("max_grad_norm", c.optimiser.max_grad_norm);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.patience = j.value("patience", c.patience);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.seed = j.value("seed", c.seed);
    c.gate.beta = j.value("gate_beta", c.gate.beta);
    c.candidate_threshold = j.value("candidate_threshold", c.candidate_threshold);
    c.force_prune_at_phase_end = j.value("force_prune_at_phase_end", c.force_prune_at_phase_end);
    c.settle_fraction = j.value("settle_fraction", c.settle_fraction);
    c.final_settle_fraction = j.value("final_settle_fraction", c.final_settle_fraction);
    c.validate();
    return c;
}

struct TrainRecord {
    std::size_t iteration = 0;
    double loss = 0.0;
    double sparsity = 0.0;
    std::optional<metrics::MetricReport> val;
};

struct TrainLog {
    std::string stage;
    std::vector<TrainRecord> records;
    std::vector<std::string> warnings;
    bool stopped_early = false;
    bool target_reached = true;
    std::size_t best_iteration = 0;
    double best_val_mae = std::numeric_limits<double>::quiet_NaN();

    void write_csv(std::ostream& os) const {
        os << "iteration,loss,sparsity,val_mae,val_rmse,val_mape\n";
        for (const auto& r : records) {
            os << r.iteration << ',' << graph::format_g17(r.loss) << ',' << graph::format_g17(r.sparsity) << ',';
            if (r.val) {
                os << graph::format_g17(r.val->mae) << ',' << graph::format_g17(r.val->rmse) << ',';
                if (r.val->mape_defined) os << graph::format_g17(r.val->mape);
            } else {
                os << ",,";
            }
            os << '\n';
        }
    }

    nlohmann::json summary() const {
        nlohmann::json j{{"stage", stage},
                         {"iterations", records.size()},
                         {"stopped_early", stopped_early},
                         {"target_reached", target_reached},
                         {"best_iteration", best_iteration},
                         {"warnings", warnings}};
        j["best_val_mae"] = std::isfinite(best_val_mae) ? nlohmann::json(best_val_mae) : nlohmann::json(nullptr);
        if (!records.empty()) {
            j["first_loss"] = records.front().loss;
            j["final_loss"] = records.back().loss;
            j["final_sparsity"] = records.back().sparsity;
        }
        return j;
    }

    bool sparsity_monotone() const {
        for (std::size_t k = 1; k < records.size(); ++k)
            if (records[k].sparsity < records[k - 1].sparsity) return false;
        return true;
    }
};

/// Fraction of off-diagonal entries that are frozen-prune, i.e. whose
/// evaluation gate is exactly zero.
inline double current_sparsity(const graph::EdgeMask& m) {
    const std::size_t n = m.n();
    if (n < 2) return 1.0;
    std::size_t pruned = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j && m.is_prune(i, j)) ++pruned;
    return static_cast<double>(pruned) / static_cast<double>(n * n - n);
}

/// Forecast metrics in raw units over every window of a normalised segment.
inline metrics::MetricReport evaluate(const temporal::ModelConfig& cfg, const ParamSet& p, const Tensor& mask,
                                      const data::SpatioTemporalSeries& segment, const data::NormStats& stats,
                                      std::size_t batch_size = 64) {
    std::vector<double> pred_all, target_all;
    for (const auto& b : data::all_batches(segment, cfg.history, cfg.horizon, batch_size)) {
        Tape t(nullptr, false);
        const Tensor pred = data::denormalize_forecast(temporal::forecast_masked(t, cfg, p, b.history, mask).value(), stats);
        const Tensor target = data::denormalize_forecast(b.target, stats);
        pred_all.insert(pred_all.end(), pred.data().begin(), pred.data().end());
        target_all.insert(target_all.end(), target.data().begin(), target.data().end());
    }
    const std::size_t width = cfg.output_width();
    const std::size_t rows = pred_all.size() / width;
    return metrics::compute_metrics(Tensor(Shape{rows, width}, std::move(pred_all)),
                                    Tensor(Shape{rows, width}, std::move(target_all)), metrics::kDefaultMapeEpsilon,
                                    cfg.horizon);
}

struct TrainResult {
    ParamSet params;
    TrainLog log;
};

/// Minimises the prediction loss under a fixed binary mask with early
/// stopping on validation MAE; returns the best-validation snapshot. Used
/// for both pretraining (all-ones mask) and reinitialise-and-retrain.
inline TrainResult train_fixed_mask(const temporal::ModelConfig& cfg, ParamSet params, const Tensor& mask,
                                    const data::PreparedData& d, const SparsifyConfig& sc, std::size_t steps,
                                    const std::string& stage) {
    sc.validate();
    cfg.validate();
    data::BatchSampler sampler(d.train, cfg.history, cfg.horizon, sc.batch_size, sc.seed ^ 0x9e3779b97f4a7c15ULL);
    Adam opt(sc.optimiser);
    TrainResult best{params, {}};
    TrainLog& log = best.log;
    log.stage = stage;
    const bool have_val = d.val.length() >= cfg.history + cfg.horizon;
    double sparsity = 0.0;
    {
        const std::size_t n = cfg.num_nodes;
        std::size_t zeros = 0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (i != j && mask.at(i, j) == 0.0) ++zeros;
        sparsity = n > 1 ? static_cast<double>(zeros) / static_cast<double>(n * n - n) : 1.0;
    }
    std::size_t bad_evals = 0;
    for (std::size_t it = 1; it <= steps; ++it) {
        const data::Batch b = sampler.next();
        double loss_value = 0.0;
        try {
            Tape t;
            Var pred = temporal::forecast_masked(t, cfg, params, b.history, mask);
            Var loss = loss_prediction(pred, t.constant(b.target));
            backward(loss, params);
            loss_value = loss.value().item();
        } catch (const NumericError& e) {
            throw NumericError(stage + " iteration " + std::to_string(it) + ": " + e.what());
        }
        opt.step(params);
        TrainRecord rec{it, loss_value, sparsity, std::nullopt};
        if (it % sc.eval_every == 0 || it == steps) {
            if (have_val) {
                rec.val = evaluate(cfg, params, mask, d.val, d.stats);
                if (!std::isfinite(rec.val->mae)) throw NumericError(stage + " iteration " + std::to_string(it) + ": non-finite validation MAE");
                if (!(rec.val->mae >= log.best_val_mae)) {
                    log.best_val_mae = rec.val->mae;
                    log.best_iteration = it;
                    best.params = params;
                    bad_evals = 0;
                } else if (++bad_evals >= sc.patience && sc.patience > 0) {
                    log.records.push_back(std::move(rec));
                    log.stopped_early = true;
                    break;
                }
            } else {
                log.best_iteration = it;
                best.params = params;
            }
        }
        log.records.push_back(std::move(rec));
    }
    if (steps == 0) best.params = params;
    return best;
}

inline TrainResult pretrain(const temporal::ModelConfig& cfg, ParamSet params, const data::PreparedData& d,
                            const SparsifyConfig& sc) {
    return train_fixed_mask(cfg, std::move(params), Tensor(Shape{cfg.num_nodes, cfg.num_nodes}, 1.0), d, sc,
                            sc.pretrain_steps, "pretrain");
}

/// Fresh initialisation from `init_seed`, trained under the frozen binary
/// mask with the pretraining budget.
inline TrainResult reinit_retrain(const temporal::ModelConfig& cfg, const graph::EdgeMask& mask,
                                  const data::PreparedData& d, const SparsifyConfig& sc, std::uint64_t init_seed) {
    return train_fixed_mask(cfg, temporal::init_params(cfg, init_seed), mask.binary(), d, sc, sc.pretrain_steps,
                            "retrain");
}

}  // namespace agsl::sparsify
