#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "agsl/harness/config.hpp"
#include "agsl/util/hash.hpp"

namespace agsl::harness {

namespace fs = std::filesystem;

/// Output directory of one command invocation. Every file written through
/// it is hashed into manifest.json; nothing time-dependent is recorded, so
/// a deterministic rerun reproduces the manifest byte for byte.
class RunDir {
public:
    RunDir(fs::path root, std::string command, nlohmann::json config)
        : root_(std::move(root)), command_(std::move(command)), config_(std::move(config)) {
        std::error_code ec;
        fs::create_directories(root_, ec);
        if (ec) throw ArtifactError("cannot create output directory '" + root_.string() + "': " + ec.message());
    }

    const fs::path& root() const { return root_; }

    /// Absolute location of a relative artifact path; parent folders are created.
    fs::path path(const std::string& rel) const {
        fs::path p = root_ / rel;
        std::error_code ec;
        fs::create_directories(p.parent_path(), ec);
        if (ec) throw ArtifactError("cannot create '" + p.parent_path().string() + "': " + ec.message());
        return p;
    }

    void write_text(const std::string& rel, const std::string& text) {
        const fs::path p = path(rel);
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        if (!out) throw ArtifactError("cannot write '" + p.string() + "'");
        out << text;
        if (!out) throw ArtifactError("write failed for '" + p.string() + "'");
        record(rel);
    }

    void write_json(const std::string& rel, const nlohmann::json& j) { write_text(rel, j.dump(2) + "\n"); }

    /// Adds an already written file to the manifest.
    void record(const std::string& rel) {
        const std::string hash = util::sha256_file((root_ / rel).string());
        auto it = std::find_if(artifacts_.begin(), artifacts_.end(), [&](const auto& a) { return a.first == rel; });
        if (it != artifacts_.end())
            it->second = hash;
        else
            artifacts_.emplace_back(rel, hash);
    }

    std::string hash_of(const std::string& rel) const {
        for (const auto& [p, h] : artifacts_)
            if (p == rel) return h;
        return {};
    }

    void write_manifest(const nlohmann::json& extra = nlohmann::json::object()) {
        auto sorted = artifacts_;
        std::sort(sorted.begin(), sorted.end());
        nlohmann::json arts = nlohmann::json::array();
        for (const auto& [p, h] : sorted) arts.push_back({{"path", p}, {"sha256", h}});
        nlohmann::json m{{"tool", "agsl"},
                         {"manifest_version", 1},
                         {"command", command_},
                         {"deterministic", deterministic_mode()},
                         {"config", config_},
                         {"artifacts", arts}};
        for (const auto& [k, v] : extra.items()) m[k] = v;
        const fs::path p = root_ / "manifest.json";
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        if (!out) throw ArtifactError("cannot write '" + p.string() + "'");
        out << m.dump(2) << '\n';
    }

private:
    fs::path root_;
    std::string command_;
    nlohmann::json config_;
    std::vector<std::pair<std::string, std::string>> artifacts_;
};

}  // namespace agsl::harness
