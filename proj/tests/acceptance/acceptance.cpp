// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "agsl/harness.hpp"
#include "agsl/temporal/agformer.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace agsl;
using agsl::testing::gradcheck;
using agsl::testing::random_tensor;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

temporal::ModelConfig toy_agcrn() {
    temporal::ModelConfig c;
    c.arch = temporal::Architecture::Agcrn;
    c.num_nodes = 16;
    c.embed_dim = 2;
    c.hidden = 8;
    c.history = 12;
    c.horizon = 12;
    return c;
}

data::PreparedData toy_data(std::uint64_t seed, data::SyntheticMode mode) {
    data::SyntheticSpec spec;
    spec.seed = seed;
    spec.mode = mode;
    return data::prepare_data(data::generate_synthetic(spec), {0.6, 0.2, 0.2}, 12, 12);
}

temporal::ModelConfig small(temporal::Architecture arch, std::size_t n, std::size_t steps) {
    temporal::ModelConfig c;
    c.arch = arch;
    c.num_nodes = n;
    c.hidden = 4;
    c.embed_dim = 2;
    c.history = steps;
    c.horizon = 2;
    c.heads = 2;
    c.ff_width = 6;
    c.embed_init_scale = 1.0;
    return c;
}

Tensor eye(std::size_t n) {
    Tensor t(Shape{n, n}, 0.0);
    for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

Tensor predict_with(const temporal::ModelConfig& c, const ParamSet& p, const Tensor& hist, const Tensor& mask) {
    Tape t(nullptr, false);
    return temporal::forecast_masked(t, c, p, hist, mask).value();
}

// ---------------------------------------------------------------- 1

Outcome adjacency_correctness() {
    Rng rng(100);
    double worst_row = 0.0, worst_layer = 0.0;
    for (int k = 0; k < 100; ++k) {
        const std::size_t n = 1 + rng.below(12), d = 1 + rng.below(4);
        const Tensor a = graph::compute_adaptive_adjacency(random_tensor(rng, {n, d}, -2, 2));
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += a.at(i, j);
            worst_row = std::max(worst_row, std::abs(s - 1.0));
        }
    }
    for (int k = 0; k < 50; ++k) {
        const std::size_t n = 1 + rng.below(4), c = 1 + rng.below(3), f = 1 + rng.below(3), d = 1 + rng.below(3);
        const Tensor e = random_tensor(rng, {n, d}), w = random_tensor(rng, {d, c, f}), x = random_tensor(rng, {n, c});
        const Tensor a = graph::compute_adaptive_adjacency(e);
        worst_layer = std::max(worst_layer, max_abs_diff(graph::napl_agcn_forward(a, x, e, w),
                                                         agsl::testing::oracle_napl_agcn(a, x, e, w)));
    }
    return {worst_row <= 1e-9 && worst_layer <= 1e-12,
            "max |row sum - 1| " + fmt("%.2e", worst_row) + ", layer vs oracle " + fmt("%.2e", worst_layer)};
}

// ---------------------------------------------------------------- 2

Outcome gradient_integrity() {
    Rng rng(17);
    std::vector<std::pair<std::string, double>> errs;

    {
        ParamSet ps;
        ps.add("E", random_tensor(rng, {3, 2}));
        ps.add("W", random_tensor(rng, {2, 2, 3}));
        ps.add("B", random_tensor(rng, {2, 3}));
        const Tensor x = random_tensor(rng, {3, 2, 2}), target = random_tensor(rng, {3, 2, 3});
        auto build = [&](Tape& t, const ParamSet& p) {
            Var e = t.param(p, "E");
            Var z = graph::napl_agcn(graph::adaptive_adjacency(e), t.constant(x), graph::node_weights(e, t.param(p, "W")),
                                     graph::node_bias(e, t.param(p, "B")), graph::Activation::Tanh);
            Var dz = ops::sub(z, t.constant(target));
            return ops::mean(ops::mul(dz, dz));
        };
        errs.emplace_back("napl-agcn", gradcheck(build, ps));
    }
    {
        auto c = small(temporal::Architecture::Agcrn, 3, 2);
        c.hidden = 2;
        ParamSet p = temporal::init_params(c, 60);
        const Tensor hist = random_tensor(rng, {3, 2, 2, 1});
        const Tensor target = random_tensor(rng, {3, 2, c.output_width()});
        auto build = [&](Tape& t, const ParamSet& ps) {
            Var y = temporal::forecast(t, c, ps, hist, temporal::model_adjacency(t, ps));
            Var d = ops::sub(y, t.constant(target));
            return ops::mean(ops::mul(d, d));
        };
        errs.emplace_back("agcrn", gradcheck(build, p));
    }
    {
        auto c = small(temporal::Architecture::Agformer, 3, 3);
        ParamSet p = temporal::init_params(c, 70);
        for (auto& [name, prm] : p)
            if (name.find(".b") != std::string::npos && name.find(".ln") == std::string::npos)
                for (auto& v : prm.value.data()) v = rng.uniform(-0.3, 0.3);
        const Tensor x0 = random_tensor(rng, {3, 6, c.hidden}), w = random_tensor(rng, {3, 6, c.hidden});
        auto build = [&](Tape& t, const ParamSet& ps) {
            Var e = t.param(ps, "embedding");
            Var y = temporal::agformer_block(t, c, ps, t.constant(x0), graph::adaptive_adjacency(e), e, 0);
            return ops::sum(ops::mul(ops::tanh(y), t.constant(w)));
        };
        errs.emplace_back("agformer block", gradcheck(build, p));
    }
    {
        auto c = small(temporal::Architecture::Agcrn, 3, 2);
        ParamSet p = temporal::init_params(c, 80);
        temporal::add_gate_weight(c, p, 80);
        const graph::GateParams gp;
        const graph::EdgeMask mask = graph::EdgeMask::initial(3);
        const Tensor hist = random_tensor(rng, {3, 2, 2, 1});
        const Tensor target = random_tensor(rng, {3, 2, c.output_width()});
        // fixed noise whose stretched gates stay clear of the clamp edges
        Tensor noise(Shape{3, 3});
        for (;;) {
            for (auto& v : noise.data()) v = rng.uniform(0.2, 0.8);
            Tape probe(nullptr, false);
            const Tensor u = graph::gate_logits(probe.param(p, temporal::kEmbeddingParam),
                                                probe.param(p, temporal::kGateWeightParam))
                                 .value();
            bool clear = true;
            for (std::size_t k = 0; k < 9; ++k) {
                const double s = agsl::testing::oracle_sigmoid((std::log(noise[k] / (1 - noise[k])) + u[k]) / gp.beta);
                const double sb = s * 1.2 - 0.1;
                clear = clear && sb > 1e-3 && sb < 1 - 1e-3;
            }
            if (clear) break;
        }
        auto build = [&](Tape& t, const ParamSet& ps) {
            Var e = t.param(ps, temporal::kEmbeddingParam);
            Var u = graph::gate_logits(e, t.param(ps, temporal::kGateWeightParam));
            Var a = graph::apply_mask(graph::adaptive_adjacency(e), graph::sample_hard_concrete(u, gp, noise, mask));
            Var pred = temporal::forecast(t, c, ps, hist, a);
            return sparsify::loss_ags(pred, t.constant(target), u, gp, mask, 0.05);
        };
        errs.emplace_back("loss_ags", gradcheck(build, p));
    }
    bool pass = true;
    std::string detail;
    for (const auto& [name, e] : errs) {
        pass = pass && e <= 1e-4;
        detail += (detail.empty() ? "" : ", ") + name + " " + fmt("%.1e", e);
    }
    return {pass, "max relative error: " + detail};
}

// ---------------------------------------------------------------- 3

Outcome hard_concrete_contract() {
    Rng rng(1000);
    bool in_range = true;
    for (int k = 0; k < 1000; ++k) {
        const std::size_t n = 1 + rng.below(4);
        const Tensor u = random_tensor(rng, {n, n}, -10, 10);
        Tensor z(Shape{n, n});
        for (auto& v : z.data()) v = rng.uniform_open();
        const graph::EdgeMask mask = graph::EdgeMask::initial(n, rng.below(2) == 0);
        Tape t;
        Var uv = t.constant(u);
        for (double g : graph::sample_hard_concrete(uv, {}, z, mask).value().data()) in_range = in_range && g >= 0 && g <= 1;
        for (double g : graph::deterministic_gate(uv, {}, mask).value().data()) in_range = in_range && g >= 0 && g <= 1;
    }
    bool saturates = true;
    const graph::EdgeMask free1(1);
    for (int k = 0; k < 200; ++k) {
        const Tensor z(Shape{1, 1}, rng.uniform(0.01, 0.99));
        Tape t;
        Var hi = t.constant(Tensor(Shape{1, 1}, 20.0)), lo = t.constant(Tensor(Shape{1, 1}, -20.0));
        saturates = saturates && graph::sample_hard_concrete(hi, {}, z, free1).value()[0] == 1.0 &&
                    graph::sample_hard_concrete(lo, {}, z, free1).value()[0] == 0.0 &&
                    graph::deterministic_gate(hi, {}, free1).value()[0] == 1.0 &&
                    graph::deterministic_gate(lo, {}, free1).value()[0] == 0.0;
    }
    Tape t;
    const double l0 = graph::expected_l0(t.constant(Tensor(Shape{1, 1}, 0.0)), {}, free1).value().item();
    return {in_range && saturates && std::abs(l0 - 0.8318) <= 1e-3,
            std::string("range ") + (in_range ? "ok" : "violated") + ", saturation " + (saturates ? "exact" : "inexact") +
                ", expected_l0(0) " + fmt("%.5f", l0)};
}

// ---------------------------------------------------------------- 4

Outcome ags_schedule() {
    const auto cfg = toy_agcrn();
    const auto d = toy_data(0, data::SyntheticMode::Subsumed);
    sparsify::SparsifyConfig sc;
    sc.seed = 0;
    sc.target_sparsity = 0.99;
    auto pre = sparsify::pretrain(cfg, temporal::init_params(cfg, 0), d, sc);
    const auto r = sparsify::ags_sparsify(cfg, pre.params, d, sc);
    const double s = sparsify::current_sparsity(r.mask);
    const std::set<sparsify::Edge> prefix(r.ranking.begin(), r.ranking.begin() + static_cast<std::ptrdiff_t>(r.budget));
    bool in_prefix = true;
    for (std::size_t i = 0; i < cfg.num_nodes; ++i)
        for (std::size_t j = 0; j < cfg.num_nodes; ++j)
            if (r.mask.is_prune(i, j)) in_prefix = in_prefix && prefix.count({i, j});
    const bool monotone = r.log.sparsity_monotone();
    return {s >= 0.99 && monotone && in_prefix,
            "sparsity " + fmt("%.4f", s) + ", log " + (monotone ? "monotone" : "not monotone") + ", pruned set " +
                (in_prefix ? "inside" : "outside") + " ranked prefix"};
}

// ---------------------------------------------------------------- 5

Outcome localisation_quality() {
    const auto cfg = toy_agcrn();
    const std::vector<double> levels{0.99, 0.995, 1.0};
    std::vector<std::vector<double>> ratios(levels.size());
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto d = toy_data(seed, data::SyntheticMode::Subsumed);
        sparsify::SparsifyConfig sc;
        sc.seed = seed;
        auto pre = sparsify::pretrain(cfg, temporal::init_params(cfg, seed), d, sc);
        const double dense = sparsify::evaluate(cfg, pre.params, Tensor(Shape{16, 16}, 1.0), d.test, d.stats).mae;
        for (std::size_t k = 0; k < levels.size(); ++k) {
            sc.target_sparsity = levels[k];
            const auto r = sparsify::ags_sparsify(cfg, pre.params, d, sc);
            ratios[k].push_back(sparsify::evaluate(cfg, r.params, r.mask.binary(), d.test, d.stats).mae / dense);
        }
    }
    const double limits[] = {1.05, 1.05, 1.10};
    bool pass = true;
    std::string detail = "median MAE ratio vs dense:";
    for (std::size_t k = 0; k < levels.size(); ++k) {
        const double m = median(ratios[k]);
        pass = pass && m <= limits[k];
        detail += " " + fmt("%.3f", levels[k]) + "→" + fmt("%.3f", m);
    }
    return {pass, detail};
}

// ---------------------------------------------------------------- 6

Outcome retrain_control() {
    const auto cfg = toy_agcrn();
    std::vector<double> ags, retrained;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto d = toy_data(seed, data::SyntheticMode::SpatialEssential);
        sparsify::SparsifyConfig sc;
        sc.seed = seed;
        sc.target_sparsity = 0.99;
        auto pre = sparsify::pretrain(cfg, temporal::init_params(cfg, seed), d, sc);
        const auto r = sparsify::ags_sparsify(cfg, pre.params, d, sc);
        ags.push_back(sparsify::evaluate(cfg, r.params, r.mask.binary(), d.test, d.stats).mae);
        const auto rr = sparsify::reinit_retrain(cfg, r.mask, d, sc, seed + 1000);
        retrained.push_back(sparsify::evaluate(cfg, rr.params, r.mask.binary(), d.test, d.stats).mae);
    }
    const double ma = median(ags), mr = median(retrained);
    return {mr > ma, "median MAE at 0.99: retrain " + fmt("%.5f", mr) + ", AGS " + fmt("%.5f", ma)};
}

// ---------------------------------------------------------------- 7

std::vector<std::vector<bool>> reachable_within(const Tensor& mask, std::size_t hops) {
    const std::size_t n = mask.dim(0);
    std::vector<std::vector<bool>> r(n, std::vector<bool>(n, false));
    for (std::size_t i = 0; i < n; ++i) r[i][i] = true;
    for (std::size_t h = 0; h < hops; ++h) {
        auto next = r;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < n; ++k)
                if (mask.at(i, k) != 0.0)
                    for (std::size_t j = 0; j < n; ++j) next[i][j] = next[i][j] || r[k][j];
        r = std::move(next);
    }
    return r;
}

Outcome locality() {
    Rng rng(22);
    std::size_t leaks = 0, hop_violations = 0, probes = 0;
    for (auto arch : {temporal::Architecture::Agcrn, temporal::Architecture::Agformer}) {
        auto c = small(arch, 6, 4);
        c.layers = 2;
        const ParamSet p = temporal::init_params(c, 21);
        const Tensor hist = random_tensor(rng, {6, 4, 2, 1});
        const Tensor base = predict_with(c, p, hist, eye(6));
        const std::size_t row = base.size() / 6, hrow = hist.size() / 6;
        for (std::size_t j = 0; j < 6; ++j) {
            Tensor h2 = hist;
            for (std::size_t r = 0; r < hrow; ++r) h2[j * hrow + r] += rng.uniform(-2, 2);
            const Tensor y = predict_with(c, p, h2, eye(6));
            for (std::size_t i = 0; i < 6; ++i)
                if (i != j)
                    for (std::size_t r = 0; r < row; ++r) leaks += y[i * row + r] != base[i * row + r];
        }
        for (int trial = 0; trial < 6; ++trial) {
            const std::size_t n = 4 + rng.below(5);
            // one aggregation per AGCRN layer at T = 1, four per AGFormer block
            auto pc = small(arch, n, arch == temporal::Architecture::Agcrn ? 1 : 2);
            pc.layers = 1 + trial % 2;
            const std::size_t hops = arch == temporal::Architecture::Agcrn ? pc.layers : 4 * pc.layers;
            const ParamSet pp = temporal::init_params(pc, 50 + trial);
            Tensor mask = eye(n);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    if (i != j && rng.uniform() < 0.12) mask.at(i, j) = 1.0;
            const auto reach = reachable_within(mask, hops);
            const Tensor h = random_tensor(rng, {n, pc.history, 1, 1});
            const Tensor b = predict_with(pc, pp, h, mask);
            const std::size_t prow = b.size() / n, phrow = h.size() / n;
            for (std::size_t j = 0; j < n; ++j) {
                Tensor h2 = h;
                for (std::size_t r = 0; r < phrow; ++r) h2[j * phrow + r] += 1.5;
                const Tensor y = predict_with(pc, pp, h2, mask);
                for (std::size_t i = 0; i < n; ++i) {
                    bool changed = false;
                    for (std::size_t r = 0; r < prow; ++r) changed = changed || y[i * prow + r] != b[i * prow + r];
                    hop_violations += changed && !reach[i][j];
                    ++probes;
                }
            }
        }
    }
    return {leaks == 0 && hop_violations == 0, "cross-node changes under diagonal mask " + std::to_string(leaks) +
                                                   ", out-of-reach influences " + std::to_string(hop_violations) + " of " +
                                                   std::to_string(probes) + " probes"};
}

// ---------------------------------------------------------------- 8

Outcome flops_accounting() {
    Rng rng(5);
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
        temporal::ModelConfig c;
        c.arch = rng.uniform() < 0.5 ? temporal::Architecture::Agcrn : temporal::Architecture::Agformer;
        c.num_nodes = 2 + rng.below(7);
        c.embed_dim = 1 + rng.below(4);
        c.heads = 1 + rng.below(2);
        c.hidden = c.heads * (1 + rng.below(3));
        c.ff_width = 2 + rng.below(7);
        c.history = 1 + rng.below(5);
        c.horizon = 1 + rng.below(4);
        c.layers = 1 + rng.below(2);
        c.in_channels = 1 + rng.below(2);
        const ParamSet p = temporal::init_params(c, static_cast<std::uint64_t>(k));
        const double keep = rng.uniform();
        Tensor mask(Shape{c.num_nodes, c.num_nodes}, 0.0);
        for (std::size_t i = 0; i < c.num_nodes; ++i)
            for (std::size_t j = 0; j < c.num_nodes; ++j) mask.at(i, j) = (i == j || rng.uniform() < keep) ? 1.0 : 0.0;
        const Tensor hist = random_tensor(rng, {c.num_nodes, c.history, 2, c.in_channels});
        const auto r = metrics::cost_report(c, p, mask, hist);
        worst = std::max(worst, std::abs(static_cast<double>(r.flops_counted) - static_cast<double>(r.flops_analytic)) /
                                    static_cast<double>(r.flops_analytic));
    }
    const std::string a = metrics::format_speedup(metrics::speedup(400.26, 253.33));
    const std::string b = metrics::format_speedup(metrics::speedup(8.58, 2.82));
    const auto cfg = toy_agcrn();
    const std::size_t n = cfg.num_nodes;
    bool monotone = true;
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t kept = n; kept <= n * n; ++kept) {
        const double s = metrics::speedup(metrics::flops_analytic(cfg, n * n), metrics::flops_analytic(cfg, kept));
        monotone = monotone && s < prev;
        prev = s;
    }
    return {worst <= 0.05 && a == "1.6×" && b == "3.0×" && monotone,
            "worst counted/analytic gap " + fmt("%.2e", worst) + ", speedups " + a + " and " + b + ", " +
                (monotone ? "strictly monotone" : "not monotone") + " in kept edges"};
}

// ---------------------------------------------------------------- 9

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome determinism() {
    harness::ExperimentConfig c;
    c.dataset.synthetic->num_nodes = 6;
    c.dataset.synthetic->length = 400;
    c.model.hidden = 4;
    c.model.history = 6;
    c.model.horizon = 3;
    c.sparsify.pretrain_steps = 60;
    c.sparsify.sparsify_steps = 60;
    c.sparsify.eval_every = 10;
    c.sparsify.batch_size = 8;
    c.sweep = {0.5, 0.99, 1.0};
    c.seeds = {0, 1};
    const fs::path root = fs::temp_directory_path() / "agsl_acceptance_determinism";
    fs::remove_all(root);
    c.output_dir = (root / "a").string();
    harness::cmd_experiment(c);
    c.output_dir = (root / "b").string();
    harness::cmd_experiment(c);
    const std::string ca = slurp(root / "a/curves.csv"), cb = slurp(root / "b/curves.csv");
    const bool csv_same = !ca.empty() && ca == cb;

    const std::string ck_path = (root / "a/seed_0/ags_0.9900/checkpoint.json").string();
    const auto ck = temporal::load_checkpoint(ck_path);
    const std::string copy = (root / "copy.json").string();
    temporal::save_checkpoint(ck, copy);
    const auto back = temporal::load_checkpoint(copy);
    const bool round_trip = back.params == ck.params && back.mask == ck.mask && back.config == ck.config &&
                            util::read_file(copy) == util::read_file(ck_path);
    return {csv_same && round_trip, std::string("curves csv ") + (csv_same ? "byte-identical" : "differs") +
                                        ", checkpoint round trip " + (round_trip ? "bit-exact" : "inexact")};
}

}  // namespace

int main(int argc, char** argv) {
    setenv("AGSL_DETERMINISTIC", "1", 1);
    struct Criterion {
        int id;
        const char* name;
        double budget_s;  // 0 when no runtime bound applies
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> all{
        {1, "adjacency correctness", 5, adjacency_correctness},
        {2, "gradient integrity", 60, gradient_integrity},
        {3, "hard-concrete contract", 0, hard_concrete_contract},
        {4, "AGS schedule", 300, ags_schedule},
        {5, "localisation quality", 900, localisation_quality},
        {6, "retrain control", 0, retrain_control},
        {7, "locality and receptive field", 0, locality},
        {8, "FLOPs accounting", 0, flops_accounting},
        {9, "determinism and round trip", 0, determinism},
    };
    std::set<int> only;
    for (int k = 1; k < argc; ++k) only.insert(std::atoi(argv[k]));

    int failed = 0;
    for (const auto& c : all) {
        if (!only.empty() && !only.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.budget_s > 0 && secs > c.budget_s) {
            o.pass = false;
            o.detail += ", over the " + fmt("%.0f", c.budget_s) + " s budget";
        }
        failed += !o.pass;
        std::cout << "criterion " << c.id << " (" << c.name << "): " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail
                  << "  [" << fmt("%.1f", secs) << " s]" << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
