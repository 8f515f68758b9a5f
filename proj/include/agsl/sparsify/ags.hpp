#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "agsl/sparsify/train.hpp"

namespace agsl::sparsify {

using Edge = std::pair<std::size_t, std::size_t>;

/// Off-diagonal coordinates sorted by A[i,j] ascending; ties keep (i, j)
/// lexicographic order.
inline std::vector<Edge> rank_edges(const Tensor& a) {
    if (a.rank() != 2 || a.dim(0) != a.dim(1)) throw ShapeError("rank_edges", {a.shape()});
    if (!a.all_finite()) throw NumericError("rank_edges: adjacency is not finite");
    const std::size_t n = a.dim(0);
    std::vector<Edge> k;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) k.emplace_back(i, j);
    std::stable_sort(k.begin(), k.end(), [&](const Edge& x, const Edge& y) { return a.at(x.first, x.second) < a.at(y.first, y.second); });
    return k;
}

/// Number of off-diagonal edges that must be pruned to reach `sparsity`.
inline std::size_t prune_budget(std::size_t n, double sparsity) {
    const double off = static_cast<double>(n * n - n);
    // tolerate representation error so 0.5·240 stays 120
    return std::min(n * n - n, static_cast<std::size_t>(std::ceil(sparsity * off - 1e-9)));
}

struct AgsResult {
    ParamSet params;
    graph::EdgeMask mask;
    TrainLog log;
    std::vector<Edge> ranking;  // the magnitude order the schedule followed
    std::size_t budget = 0;     // ⌈s_g·(N²−N)⌉
};

namespace detail {

inline Tensor gate_logit_values(const ParamSet& p) {
    Tape t(nullptr, false);
    return graph::gate_logits(t.param(p, temporal::kEmbeddingParam), t.param(p, temporal::kGateWeightParam)).value();
}

}  // namespace detail

/// Progressive magnitude-ranked masking trained under the L0-regularised
/// objective. The first (1 − final_settle_fraction) of `sparsify_steps` is
/// divided over ⌈s_g/p_g⌉ phases. Phase k makes the first ⌈k·p_g·(N²−N)⌉
/// ranked edges (capped at the prune budget) free candidates and freezes
/// every other surviving edge to keep. After each step, candidates whose
/// deterministic gate falls below the threshold are frozen to prune. With
/// force pruning on, candidates still alive after the first
/// (1 − settle_fraction) of a phase are pruned outright and the rest of the
/// phase trains under the fixed mask. Survivors then become frozen-keep and
/// the remaining steps train under the final binary mask, returning the
/// best-validation snapshot of that stretch.
inline AgsResult ags_sparsify(const temporal::ModelConfig& cfg, ParamSet params, const data::PreparedData& d,
                              const SparsifyConfig& sc) {
    sc.validate();
    cfg.validate();
    const std::size_t n = cfg.num_nodes;
    temporal::add_gate_weight(cfg, params, sc.seed);
    AgsResult res;
    res.log.stage = "sparsify";
    res.mask = graph::EdgeMask::initial(n);
    res.ranking = rank_edges(graph::compute_adaptive_adjacency(params.value(temporal::kEmbeddingParam)));
    res.budget = prune_budget(n, sc.target_sparsity);
    graph::EdgeMask& mask = res.mask;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) mask.set_keep(i, j);

    const std::size_t phases =
        res.budget == 0 ? 0 : static_cast<std::size_t>(std::ceil(sc.target_sparsity / sc.quantum() - 1e-9));
    const std::size_t settle_steps =
        phases == 0 ? sc.sparsify_steps
                    : static_cast<std::size_t>(std::llround(static_cast<double>(sc.sparsify_steps) * sc.final_settle_fraction));
    const std::size_t phased_steps = sc.sparsify_steps - settle_steps;
    const bool have_val = d.val.length() >= cfg.history + cfg.horizon;
    data::BatchSampler sampler(d.train, cfg.history, cfg.horizon, sc.batch_size, sc.seed ^ 0xbb67ae8584caa73bULL);
    Rng noise_rng(sc.seed ^ 0x3c6ef372fe94f82bULL);
    Adam opt(sc.optimiser);
    std::size_t it = 0;

    auto prune_all_free = [&] {
        for (std::size_t k : mask.free_indices()) mask.set_prune(k / n, k % n);
    };
    auto prune_weak = [&] {
        const Tensor gates = graph::deterministic_gate(detail::gate_logit_values(params), sc.gate, mask);
        for (std::size_t k : mask.free_indices())
            if (gates[k] < sc.candidate_threshold) mask.set_prune(k / n, k % n);
    };
    auto train_step = [&] {
        ++it;
        const data::Batch b = sampler.next();
        Tensor noise(Shape{n, n});
        for (auto& z : noise.data()) z = noise_rng.uniform_open();
        try {
            Tape t;
            Var e = t.param(params, temporal::kEmbeddingParam);
            Var u = graph::gate_logits(e, t.param(params, temporal::kGateWeightParam));
            Var gates = graph::sample_hard_concrete(u, sc.gate, noise, mask);
            Var a_eff = graph::apply_mask(graph::adaptive_adjacency(e), gates);
            Var pred = temporal::forecast(t, cfg, params, b.history, a_eff);
            Var loss = loss_ags(pred, t.constant(b.target), u, sc.gate, mask, sc.lambda);
            backward(loss, params);
            opt.step(params);
            return loss.value().item();
        } catch (const NumericError& e) {
            throw NumericError("sparsify iteration " + std::to_string(it) + ": " + e.what());
        }
    };

    for (std::size_t phase = 1; phase <= phases; ++phase) {
        if (mask.prune_count() >= res.budget) break;
        const auto quota = std::min(
            res.budget, static_cast<std::size_t>(std::ceil(static_cast<double>(phase) * sc.quantum() *
                                                               static_cast<double>(n * n - n) - 1e-9)));
        for (std::size_t r = 0; r < res.ranking.size(); ++r) {
            const auto [i, j] = res.ranking[r];
            if (mask.is_prune(i, j)) continue;
            if (r < quota)
                mask.set_free(i, j);
            else
                mask.set_keep(i, j);
        }
        const std::size_t phase_steps = phased_steps * phase / phases - phased_steps * (phase - 1) / phases;
        const auto gated_steps = static_cast<std::size_t>(
            std::llround(static_cast<double>(phase_steps) * (1.0 - sc.settle_fraction)));
        for (std::size_t s = 0; s < phase_steps; ++s) {
            if (s == gated_steps && sc.force_prune_at_phase_end) prune_all_free();
            const double loss_value = train_step();
            prune_weak();
            TrainRecord rec{it, loss_value, current_sparsity(mask), std::nullopt};
            if (have_val && it % sc.eval_every == 0) rec.val = evaluate(cfg, params, mask.binary(), d.val, d.stats);
            res.log.records.push_back(std::move(rec));
        }
        if (sc.force_prune_at_phase_end) prune_all_free();
    }
    for (std::size_t k : mask.free_indices()) mask.set_keep(k / n, k % n);

    const double achieved = current_sparsity(mask);
    res.log.target_reached = mask.prune_count() >= res.budget;
    if (!res.log.target_reached)
        res.log.warnings.push_back("target sparsity " + graph::format_g17(sc.target_sparsity) + " not reached; achieved " +
                                   graph::format_g17(achieved));

    // the mask is now fixed, so validation scores are comparable across the settle stretch
    const Tensor final_mask = mask.binary();
    ParamSet best = params;
    if (have_val) {
        res.log.best_val_mae = evaluate(cfg, params, final_mask, d.val, d.stats).mae;
        res.log.best_iteration = it;
    }
    for (std::size_t s = 1; s <= settle_steps; ++s) {
        const double loss_value = train_step();
        TrainRecord rec{it, loss_value, achieved, std::nullopt};
        if (have_val && (it % sc.eval_every == 0 || s == settle_steps)) {
            rec.val = evaluate(cfg, params, final_mask, d.val, d.stats);
            if (!(rec.val->mae >= res.log.best_val_mae)) {
                res.log.best_val_mae = rec.val->mae;
                res.log.best_iteration = it;
                best = params;
            }
        }
        res.log.records.push_back(std::move(rec));
    }
    if (!have_val) best = params;
    if (have_val && (res.log.records.empty() || !res.log.records.back().val)) {
        TrainRecord last{it, res.log.records.empty() ? 0.0 : res.log.records.back().loss, achieved,
                         evaluate(cfg, best, final_mask, d.val, d.stats)};
        if (!res.log.records.empty() && res.log.records.back().iteration == it)
            res.log.records.back() = std::move(last);
        else
            res.log.records.push_back(std::move(last));
    }
    res.params = std::move(best);
    return res;
}

}  // namespace agsl::sparsify
