#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "agsl/harness.hpp"

namespace h = agsl::harness;

namespace {

h::ExperimentConfig config_or_default(const std::string& path) {
    return path.empty() ? h::ExperimentConfig{} : h::load_experiment_config(path);
}

void print(const nlohmann::json& j) { std::cout << j.dump(2) << '\n'; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive graph sparsification for spatio-temporal forecasting"};
    app.require_subcommand(1);

    std::string spec_path, config_path, checkpoint, dense, out;
    std::optional<std::string> resume;
    std::uint64_t seed = 0;
    std::size_t windows = 1, bins = 20;
    std::vector<std::string> splits{"test"};
    bool as_json = false;

    auto* gen = app.add_subcommand("generate", "Write a synthetic dataset (data.csv, meta.json)");
    gen->add_option("--spec", spec_path, "synthetic spec JSON; defaults when omitted")->check(CLI::ExistingFile);
    gen->add_option("--out", out, "output directory")->required();

    auto* train = app.add_subcommand("train", "Pretrain a dense model");
    train->add_option("--config", config_path, "experiment config JSON");
    train->add_option("--seed", seed, "run seed");
    train->add_option("--resume", resume, "continue from this checkpoint");
    train->add_option("--out", out, "output directory")->required();

    auto* sparsify = app.add_subcommand("sparsify", "Localise a pretrained checkpoint at every sweep level");
    sparsify->add_option("--config", config_path, "experiment config JSON");
    sparsify->add_option("--checkpoint", checkpoint, "pretrained checkpoint")->required();
    sparsify->add_option("--out", out, "output directory")->required();

    auto* retrain = app.add_subcommand("retrain", "Reinitialise and train under a localised mask");
    retrain->add_option("--config", config_path, "experiment config JSON");
    retrain->add_option("--checkpoint", checkpoint, "localised checkpoint")->required();
    retrain->add_option("--seed", seed, "initialisation seed");
    retrain->add_option("--out", out, "output directory")->required();

    auto* eval = app.add_subcommand("eval", "Forecast metrics of a checkpoint");
    eval->add_option("--checkpoint", checkpoint, "checkpoint to evaluate")->required();
    eval->add_option("--config", config_path, "take the dataset from this config instead of the checkpoint");
    eval->add_option("--split", splits, "train, val or test (repeatable)")->check(CLI::IsMember({"train", "val", "test"}));

    auto* flops = app.add_subcommand("flops", "Inference cost of a checkpoint");
    flops->add_option("--checkpoint", checkpoint, "checkpoint to cost")->required();
    flops->add_option("--dense", dense, "dense reference checkpoint");
    flops->add_option("--windows", windows, "number of forecast windows")->check(CLI::PositiveNumber);
    flops->add_flag("--json", as_json, "print JSON instead of a table");

    auto* experiment = app.add_subcommand("experiment", "Full sweep: pretrain, sparsify, retrain, evaluate");
    experiment->add_option("--config", config_path, "experiment config JSON")->required();
    experiment->add_option("--out", out, "overrides output_dir");

    auto* inspect = app.add_subcommand("inspect", "Dump adjacency, gates and a histogram");
    inspect->add_option("--checkpoint", checkpoint, "checkpoint to inspect")->required();
    inspect->add_option("--out", out, "output directory")->required();
    inspect->add_option("--bins", bins, "histogram bins")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? h::kExitOk : h::kExitConfig;
    }

    try {
        if (gen->parsed()) {
            print(h::cmd_generate(spec_path.empty() ? agsl::data::spec_to_json({}) : h::read_json_file(spec_path), out));
        } else if (train->parsed()) {
            print(h::cmd_train(config_or_default(config_path), seed, out, resume));
        } else if (sparsify->parsed()) {
            print(h::cmd_sparsify(config_or_default(config_path), checkpoint, out));
        } else if (retrain->parsed()) {
            print(h::cmd_retrain(config_or_default(config_path), checkpoint, seed, out));
        } else if (eval->parsed()) {
            std::optional<h::DatasetRef> ref;
            if (!config_path.empty()) ref = h::load_experiment_config(config_path).dataset;
            print(h::cmd_eval(checkpoint, splits, ref));
        } else if (flops->parsed()) {
            std::string table;
            const auto j = h::cmd_flops(checkpoint, dense.empty() ? std::nullopt : std::optional<std::string>(dense),
                                        windows, &table);
            if (as_json) {
                print(j);
            } else {
                std::cout << table;
                if (j.at("dense_reference").get<bool>())
                    std::cout << "speedup vs dense checkpoint: " << j.at("speedup_text").get<std::string>() << '\n';
                else
                    std::cout << "speedup vs all-ones mask (analytic only): " << j.at("speedup_text").get<std::string>()
                              << '\n';
            }
        } else if (experiment->parsed()) {
            auto cfg = h::load_experiment_config(config_path);
            if (!out.empty()) cfg.output_dir = out;
            const auto r = h::cmd_experiment(cfg);
            std::cout << h::curves_csv(r.rows);
            if (!r.summary.at("failures").empty()) {
                std::cerr << r.summary.at("failures").size() << " run(s) failed; see summary.json\n";
                return h::kExitNumeric;
            }
        } else if (inspect->parsed()) {
            print(h::cmd_inspect(checkpoint, out, bins));
        }
    } catch (const std::exception& e) {
        std::cerr << "agsl: " << e.what() << '\n';
        return h::exit_code_for(e);
    }
    return h::kExitOk;
}
