#pragma once

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "agsl/data.hpp"
#include "agsl/data/prepared.hpp"
#include "agsl/sparsify/train.hpp"
#include "agsl/temporal/checkpoint.hpp"

namespace agsl::harness {

/// Bad configuration or input; CLI exit code 2.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Artifact could not be read or written; CLI exit code 3.
class ArtifactError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitArtifact = 3;
inline constexpr int kExitNumeric = 4;

/// Maps the exception currently being handled to a CLI exit code.
inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
    if (dynamic_cast<const ArtifactError*>(&e) || dynamic_cast<const temporal::CheckpointError*>(&e)) return kExitArtifact;
    return kExitConfig;
}

/// Where the series comes from: a synthetic spec or a CSV file with its
/// metadata sidecar.
struct DatasetRef {
    std::optional<data::SyntheticSpec> synthetic = data::SyntheticSpec{};
    std::string csv_path, meta_path;
    std::vector<double> ratios{0.6, 0.2, 0.2};
    bool global_stats = false;
};

struct ExperimentConfig {
    DatasetRef dataset;
    temporal::ModelConfig model;
    sparsify::SparsifyConfig sparsify;
    std::vector<double> sweep{0.0, 0.30, 0.50, 0.80, 0.99, 0.995, 1.00};
    std::vector<std::uint64_t> seeds{0};
    bool retrain = true;
    std::uint64_t retrain_seed_offset = 1000;  // retrain init seed = run seed + offset
    std::size_t workers = 1;
    std::string output_dir = "runs/experiment";

    void validate() const {
        if (sweep.empty()) throw ConfigError("sweep must list at least one sparsity level");
        for (std::size_t k = 0; k < sweep.size(); ++k) {
            if (!(sweep[k] >= 0.0 && sweep[k] <= 1.0)) throw ConfigError("sweep values must lie in [0, 1]");
            if (k && !(sweep[k] > sweep[k - 1])) throw ConfigError("sweep values must be strictly increasing");
        }
        if (seeds.empty()) throw ConfigError("seeds must list at least one seed");
        if (workers == 0) throw ConfigError("workers must be ≥ 1");
        if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
        if (!dataset.synthetic && (dataset.csv_path.empty() || dataset.meta_path.empty()))
            throw ConfigError("dataset needs either a synthetic spec or csv data and meta paths");
    }
};

inline nlohmann::json dataset_to_json(const DatasetRef& d) {
    nlohmann::json j{{"ratios", d.ratios}, {"global_stats", d.global_stats}};
    if (d.synthetic)
        j["synthetic"] = data::spec_to_json(*d.synthetic);
    else
        j["csv"] = {{"data", d.csv_path}, {"meta", d.meta_path}};
    return j;
}

inline DatasetRef dataset_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("dataset must be a JSON object");
    for (const auto& [k, _] : j.items())
        if (k != "synthetic" && k != "csv" && k != "ratios" && k != "global_stats")
            throw ConfigError("dataset: unknown key '" + k + "'");
    if (j.contains("synthetic") == j.contains("csv")) throw ConfigError("dataset needs exactly one of 'synthetic' or 'csv'");
    DatasetRef d;
    try {
        if (j.contains("csv")) {
            d.synthetic.reset();
            d.csv_path = j.at("csv").at("data").get<std::string>();
            d.meta_path = j.at("csv").at("meta").get<std::string>();
        } else {
            d.synthetic = data::spec_from_json(j.at("synthetic"));
        }
        d.ratios = j.value("ratios", d.ratios);
        d.global_stats = j.value("global_stats", d.global_stats);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("dataset: ") + e.what());
    }
    return d;
}

inline nlohmann::json experiment_to_json(const ExperimentConfig& c) {
    return {{"dataset", dataset_to_json(c.dataset)},
            {"model", temporal::config_to_json(c.model)},
            {"sparsify", sparsify::sparsify_config_to_json(c.sparsify)},
            {"sweep", c.sweep},
            {"seeds", c.seeds},
            {"retrain", c.retrain},
            {"retrain_seed_offset", c.retrain_seed_offset},
            {"workers", c.workers},
            {"output_dir", c.output_dir}};
}

/// Missing keys keep their defaults; unknown top-level keys are rejected.
inline ExperimentConfig experiment_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
    static const std::vector<std::string> known{"dataset", "model",   "sparsify", "sweep",     "seeds",
                                                "retrain", "retrain_seed_offset", "workers", "output_dir"};
    for (const auto& [k, _] : j.items())
        if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("unknown config key '" + k + "'");
    ExperimentConfig c;
    try {
        if (j.contains("dataset")) c.dataset = dataset_from_json(j.at("dataset"));
        if (j.contains("model")) c.model = temporal::config_from_json(j.at("model"));
        if (j.contains("sparsify")) c.sparsify = sparsify::sparsify_config_from_json(j.at("sparsify"));
        c.sweep = j.value("sweep", c.sweep);
        c.seeds = j.value("seeds", c.seeds);
        c.retrain = j.value("retrain", c.retrain);
        c.retrain_seed_offset = j.value("retrain_seed_offset", c.retrain_seed_offset);
        c.workers = j.value("workers", c.workers);
        c.output_dir = j.value("output_dir", c.output_dir);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const data::DataError& e) {
        throw ConfigError(e.what());
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    c.validate();
    return c;
}

inline nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("'" + path + "' is not valid JSON");
    return j;
}

inline ExperimentConfig load_experiment_config(const std::string& path) { return experiment_from_json(read_json_file(path)); }

/// Deterministic mode forces sequential execution. On unless the
/// environment variable AGSL_DETERMINISTIC is set to 0, false or off.
inline bool deterministic_mode(std::optional<bool> flag = std::nullopt) {
    if (const char* env = std::getenv("AGSL_DETERMINISTIC")) {
        const std::string v(env);
        return !(v == "0" || v == "false" || v == "off");
    }
    return flag.value_or(true);
}

}  // namespace agsl::harness
