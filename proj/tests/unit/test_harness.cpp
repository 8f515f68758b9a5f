#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "agsl/harness.hpp"

using namespace agsl;
using namespace agsl::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("agsl_harness_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ExperimentConfig tiny_experiment(const fs::path& out) {
    ExperimentConfig c;
    c.dataset.synthetic->num_nodes = 5;
    c.dataset.synthetic->length = 300;
    c.dataset.synthetic->seed = 2;
    c.model.hidden = 4;
    c.model.history = 4;
    c.model.horizon = 2;
    c.sparsify.pretrain_steps = 20;
    c.sparsify.sparsify_steps = 20;
    c.sparsify.eval_every = 5;
    c.sparsify.batch_size = 8;
    c.sweep = {0.5, 0.8, 1.0};
    c.seeds = {0, 1};
    c.output_dir = out.string();
    return c;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(AGSL_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(HarnessConfig, DefaultsAndRoundTrip) {
    ExperimentConfig c;
    EXPECT_EQ(c.sweep, (std::vector<double>{0.0, 0.30, 0.50, 0.80, 0.99, 0.995, 1.00}));
    EXPECT_TRUE(c.retrain);
    const auto back = experiment_from_json(experiment_to_json(c));
    EXPECT_EQ(experiment_to_json(back), experiment_to_json(c));
}

TEST(HarnessConfig, RejectsBadValues) {
    nlohmann::json j = experiment_to_json(ExperimentConfig{});
    auto bad = [&](const char* key, nlohmann::json v) {
        nlohmann::json k = j;
        k[key] = v;
        EXPECT_THROW(experiment_from_json(k), ConfigError) << key;
    };
    bad("sweep", {0.5, 0.3});
    bad("sweep", {1.5});
    bad("sweep", nlohmann::json::array());
    bad("seeds", nlohmann::json::array());
    bad("workers", 0);
    bad("seeds", "zero");
    nlohmann::json k = j;
    k["surprise"] = 1;
    EXPECT_THROW(experiment_from_json(k), ConfigError);
    k = j;
    k["dataset"]["csv"] = {{"data", "a.csv"}, {"meta", "a.json"}};
    EXPECT_THROW(experiment_from_json(k), ConfigError);  // both synthetic and csv
    k = j;
    k["sparsify"]["target_sparsity"] = 2.0;
    EXPECT_THROW(experiment_from_json(k), ConfigError);
}

TEST(HarnessConfig, ExitCodes) {
    EXPECT_EQ(exit_code_for(ConfigError("x")), 2);
    EXPECT_EQ(exit_code_for(data::DataError("x")), 2);
    EXPECT_EQ(exit_code_for(ArtifactError("x")), 3);
    EXPECT_EQ(exit_code_for(temporal::CheckpointError("x")), 3);
    EXPECT_EQ(exit_code_for(NumericError("x")), 4);
}

TEST(HarnessConfig, DeterministicEnvOverride) {
    unsetenv("AGSL_DETERMINISTIC");
    EXPECT_TRUE(deterministic_mode());
    EXPECT_FALSE(deterministic_mode(false));
    setenv("AGSL_DETERMINISTIC", "0", 1);
    EXPECT_FALSE(deterministic_mode(true));
    setenv("AGSL_DETERMINISTIC", "1", 1);
    EXPECT_TRUE(deterministic_mode(false));
    unsetenv("AGSL_DETERMINISTIC");
}

TEST(HarnessGenerate, DeterministicAndReloadable) {
    const auto a = scratch("gen_a"), b = scratch("gen_b");
    data::SyntheticSpec spec;
    spec.num_nodes = 4;
    spec.length = 100;
    spec.seed = 7;
    cmd_generate(data::spec_to_json(spec), a.string());
    cmd_generate(data::spec_to_json(spec), b.string());
    EXPECT_EQ(slurp(a / "data.csv"), slurp(b / "data.csv"));
    EXPECT_EQ(slurp(a / "manifest.json"), slurp(b / "manifest.json"));
    const auto loaded = data::load_csv_dataset((a / "data.csv").string(), (a / "meta.json").string());
    const auto direct = data::generate_synthetic(spec);
    ASSERT_EQ(loaded.values.shape(), direct.values.shape());
    for (std::size_t k = 0; k < direct.values.size(); ++k) EXPECT_DOUBLE_EQ(loaded.values[k], direct.values[k]);
    const auto manifest = read_json_file((a / "manifest.json").string());
    EXPECT_EQ(manifest.at("artifacts").size(), 3u);
    EXPECT_FALSE(manifest.dump().find("time") != std::string::npos);
}

TEST(HarnessGenerate, InvalidSpecIsConfigError) {
    nlohmann::json spec = data::spec_to_json({});
    spec["num_nodes"] = 0;
    EXPECT_THROW(cmd_generate(spec, scratch("gen_bad").string()), ConfigError);
}

TEST(HarnessTrain, MissingDatasetIsConfigError) {
    ExperimentConfig c = tiny_experiment(scratch("missing"));
    c.dataset.synthetic.reset();
    c.dataset.csv_path = "/nonexistent/data.csv";
    c.dataset.meta_path = "/nonexistent/meta.json";
    try {
        cmd_train(c, 0, scratch("missing").string());
        FAIL() << "expected an exception";
    } catch (const std::exception& e) {
        EXPECT_EQ(exit_code_for(e), 2) << e.what();
    }
}

TEST(HarnessPipeline, TrainSparsifyRetrainEvalInspect) {
    const auto root = scratch("pipeline");
    const ExperimentConfig c = tiny_experiment(root / "unused");
    cmd_train(c, 4, (root / "train").string());
    const std::string parent = (root / "train/checkpoint.json").string();
    const auto ck = temporal::load_checkpoint(parent);
    EXPECT_EQ(ck.extras.at("stage"), "pretrain");
    EXPECT_EQ(ck.seed, 4u);
    EXPECT_EQ(ck.config.num_nodes, 5u);

    const auto sp = cmd_sparsify(c, parent, (root / "sparsify").string());
    ASSERT_EQ(sp.at("levels").size(), 3u);
    for (const char* lv : {"level_0.5000", "level_0.8000", "level_1.0000"})
        EXPECT_TRUE(fs::exists(root / "sparsify" / lv / "checkpoint.json")) << lv;
    EXPECT_DOUBLE_EQ(sp.at("levels")[2].at("achieved_sparsity").get<double>(), 1.0);

    const std::string local = (root / "sparsify/level_0.8000/checkpoint.json").string();
    const auto re = cmd_retrain(c, local, 99, (root / "retrain").string());
    EXPECT_EQ(re.at("mask_sha256"), re.at("input_mask_sha256"));
    EXPECT_EQ(temporal::load_checkpoint((root / "retrain/checkpoint.json").string()).mask,
              temporal::load_checkpoint(local).mask);

    const auto ev = cmd_eval(local, {"val", "test"});
    EXPECT_TRUE(ev.at("splits").contains("val"));
    EXPECT_GT(ev.at("splits").at("test").at("mae").get<double>(), 0.0);
    EXPECT_THROW(cmd_eval(local, {"holdout"}), ConfigError);

    const auto fl = cmd_flops(local, parent, 2);
    EXPECT_TRUE(fl.at("dense_reference").get<bool>());
    EXPECT_GT(fl.at("speedup").get<double>(), 1.0);
    EXPECT_EQ(fl.at("checkpoint").at("flops_analytic"), fl.at("checkpoint").at("flops_counted"));
    const auto fl_alone = cmd_flops(local, std::nullopt, 2);
    EXPECT_FALSE(fl_alone.at("dense_reference").get<bool>());
    EXPECT_TRUE(fl_alone.contains("speedup_analytic"));

    const auto in = cmd_inspect(local, (root / "inspect").string(), 7);
    EXPECT_EQ(in.at("bin_total").get<std::size_t>(), 25u);
    EXPECT_EQ(in.at("bins").size(), 7u);
    EXPECT_TRUE(fs::exists(root / "inspect/gates.csv"));
    EXPECT_TRUE(fs::exists(root / "inspect/effective_adjacency.csv"));
}

TEST(HarnessPipeline, ResumeContinuesFromCheckpoint) {
    const auto root = scratch("resume");
    const ExperimentConfig c = tiny_experiment(root / "unused");
    cmd_train(c, 0, (root / "a").string());
    const std::string first = (root / "a/checkpoint.json").string();
    cmd_train(c, 0, (root / "b").string(), first);
    const auto b = temporal::load_checkpoint((root / "b/checkpoint.json").string());
    EXPECT_EQ(b.extras.at("resumed_from"), first);
    EXPECT_FALSE(b.params == temporal::init_params(b.config, 0));
}

TEST(HarnessPipeline, CorruptedCheckpointIsArtifactError) {
    const auto root = scratch("corrupt");
    const ExperimentConfig c = tiny_experiment(root / "unused");
    cmd_train(c, 0, (root / "train").string());
    const fs::path ck = root / "train/checkpoint.json";
    std::string text = slurp(ck);
    text.resize(text.size() / 2);
    std::ofstream(ck, std::ios::binary | std::ios::trunc) << text;
    try {
        cmd_eval(ck.string(), {"test"});
        FAIL() << "expected an exception";
    } catch (const std::exception& e) {
        EXPECT_EQ(exit_code_for(e), 3) << e.what();
    }
}

TEST(HarnessExperiment, CardinalityAndSummary) {
    const auto root = scratch("experiment");
    const auto r = cmd_experiment(tiny_experiment(root));
    // 2 seeds × (1 dense + 3 levels × {ags, retrain})
    ASSERT_EQ(r.rows.size(), 14u);
    std::size_t dense = 0;
    for (const auto& row : r.rows) {
        EXPECT_TRUE(row.metrics.has_value()) << row.error;
        if (row.variant == "dense") ++dense;
        if (row.variant != "dense") {
            EXPECT_GE(row.achieved_sparsity, row.sparsity - 1e-12);
        }
    }
    EXPECT_EQ(dense, 2u);
    EXPECT_TRUE(r.summary.at("failures").empty());
    EXPECT_EQ(r.summary.at("cells").size(), 7u);

    const std::string csv = slurp(root / "curves.csv");
    std::istringstream is(csv);
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "sparsity,seed,variant,mae,rmse,mape,flops");
    std::size_t n = 0;
    while (std::getline(is, line)) ++n;
    EXPECT_EQ(n, 14u);
    for (const auto& row : r.summary.at("rows")) EXPECT_EQ(row.at("checkpoint_sha256").get<std::string>().size(), 64u);
}

TEST(HarnessExperiment, SingleSeedHasZeroSpreadAndIsReproducible) {
    auto c = tiny_experiment(scratch("repro_a"));
    c.seeds = {3};
    c.sweep = {1.0};
    cmd_experiment(c);
    const auto r = cmd_experiment(c);  // same directory overwritten
    for (const auto& cell : r.summary.at("cells")) EXPECT_EQ(cell.at("mae").at("stddev").get<double>(), 0.0);
    const std::string first = slurp(fs::path(c.output_dir) / "curves.csv");
    c.output_dir = scratch("repro_b").string();
    cmd_experiment(c);
    EXPECT_EQ(first, slurp(fs::path(c.output_dir) / "curves.csv"));
}

TEST(HarnessExperiment, ParallelMatchesSequential) {
    auto c = tiny_experiment(scratch("seq"));
    c.sweep = {1.0};
    c.retrain = false;
    cmd_experiment(c);
    const std::string seq = slurp(fs::path(c.output_dir) / "curves.csv");
    c.output_dir = scratch("par").string();
    c.workers = 2;
    setenv("AGSL_DETERMINISTIC", "0", 1);
    cmd_experiment(c);
    unsetenv("AGSL_DETERMINISTIC");
    EXPECT_EQ(seq, slurp(fs::path(c.output_dir) / "curves.csv"));
}

TEST(HarnessStats, MedianAndPopulationStddev) {
    EXPECT_DOUBLE_EQ(detail::median({3.0, 1.0, 2.0}), 2.0);
    EXPECT_DOUBLE_EQ(detail::median({4.0, 1.0, 2.0, 3.0}), 2.5);
    EXPECT_DOUBLE_EQ(detail::stddev({2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0}), 2.0);
    EXPECT_DOUBLE_EQ(detail::stddev({5.0}), 0.0);
}

TEST(HarnessCli, ExitCodes) {
    const auto root = scratch("cli");
    fs::create_directories(root);
    EXPECT_EQ(run_cli("generate --out " + (root / "gen").string()), 0);
    EXPECT_EQ(run_cli("frobnicate"), 2);
    std::ofstream(root / "bad_spec.json") << R"({"num_nodes": 0})";
    EXPECT_EQ(run_cli("generate --spec " + (root / "bad_spec.json").string() + " --out " + (root / "x").string()), 2);
    std::ofstream(root / "missing.json")
        << R"({"dataset": {"csv": {"data": "/nonexistent.csv", "meta": "/nonexistent.json"}}})";
    EXPECT_EQ(run_cli("train --config " + (root / "missing.json").string() + " --out " + (root / "t").string()), 2);
    std::ofstream(root / "broken_ck.json") << R"({"version": 1, "params": )";
    EXPECT_EQ(run_cli("eval --checkpoint " + (root / "broken_ck.json").string()), 3);
}
