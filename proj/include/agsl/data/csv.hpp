#pragma once

// Dataset files: a CSV of T_total rows × (N·C) columns (node-major, channel
// fastest) plus a JSON metadata document:
//   {"num_nodes": N, "channels": C, "interval": minutes, "name": "...", "header": bool}

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "agsl/data/series.hpp"
#include "agsl/graph/export.hpp"

namespace agsl::data {

struct DatasetMeta {
    std::size_t num_nodes = 0;
    std::size_t channels = 1;
    double interval_minutes = 5.0;
    std::string name;
    bool header = false;
};

inline DatasetMeta meta_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw DataError("dataset metadata must be a JSON object");
    DatasetMeta m;
    try {
        m.num_nodes = j.at("num_nodes").get<std::size_t>();
        m.channels = j.value("channels", std::size_t{1});
        m.interval_minutes = j.value("interval", 5.0);
        m.name = j.value("name", std::string{});
        m.header = j.value("header", false);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("dataset metadata: ") + e.what());
    }
    if (m.num_nodes == 0 || m.channels == 0) throw DataError("dataset metadata: num_nodes and channels must be ≥ 1");
    return m;
}

inline nlohmann::json meta_to_json(const DatasetMeta& m) {
    return {{"num_nodes", m.num_nodes}, {"channels", m.channels}, {"interval", m.interval_minutes},
            {"name", m.name},           {"header", m.header}};
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace detail

/// Parses the CSV body against `meta`. Row numbers in errors are 1-based
/// file lines; columns are 1-based.
inline SpatioTemporalSeries parse_csv_dataset(std::istream& in, const DatasetMeta& meta) {
    const std::size_t width = meta.num_nodes * meta.channels;
    std::vector<double> values;
    std::string line;
    std::size_t lineno = 0, rows = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (meta.header && lineno == 1) continue;
        if (detail::trim(line).empty()) continue;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != width)
            throw DataError("row " + std::to_string(lineno) + ": expected " + std::to_string(width) + " columns (" +
                            std::to_string(meta.num_nodes) + " nodes × " + std::to_string(meta.channels) +
                            " channels), found " + std::to_string(cells.size()));
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const std::string s = detail::trim(cells[c]);
            char* end = nullptr;
            errno = 0;
            const double v = std::strtod(s.c_str(), &end);
            if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v))
                throw DataError("row " + std::to_string(lineno) + ", column " + std::to_string(c + 1) +
                                ": not a finite number: '" + s + "'");
            values.push_back(v);
        }
        ++rows;
    }
    if (rows == 0) throw DataError("dataset has no data rows");
    SpatioTemporalSeries s{Tensor(Shape{rows, meta.num_nodes, meta.channels}, std::move(values)),
                           meta.interval_minutes, meta.name};
    s.validate();
    return s;
}

inline SpatioTemporalSeries load_csv_dataset(const std::string& data_path, const std::string& meta_path) {
    std::ifstream mf(meta_path);
    if (!mf) throw DataError("cannot open metadata '" + meta_path + "'");
    nlohmann::json mj = nlohmann::json::parse(mf, nullptr, false);
    if (mj.is_discarded()) throw DataError("metadata '" + meta_path + "' is not valid JSON");
    const DatasetMeta meta = meta_from_json(mj);
    std::ifstream df(data_path);
    if (!df) throw DataError("cannot open dataset '" + data_path + "'");
    try {
        return parse_csv_dataset(df, meta);
    } catch (const DataError& e) {
        throw DataError(data_path + ": " + e.what());
    }
}

/// Writes values at 17 significant digits so a reload is exact.
inline void write_csv_dataset(const SpatioTemporalSeries& s, std::ostream& os) {
    const std::size_t width = s.num_nodes() * s.channels();
    for (std::size_t t = 0; t < s.length(); ++t) {
        for (std::size_t k = 0; k < width; ++k) {
            if (k) os << ',';
            os << graph::format_g17(s.values[t * width + k]);
        }
        os << '\n';
    }
}

inline void save_csv_dataset(const SpatioTemporalSeries& s, const std::string& data_path,
                             const std::string& meta_path) {
    std::ofstream df(data_path, std::ios::trunc);
    if (!df) throw DataError("cannot write dataset '" + data_path + "'");
    write_csv_dataset(s, df);
    std::ofstream mf(meta_path, std::ios::trunc);
    if (!mf) throw DataError("cannot write metadata '" + meta_path + "'");
    mf << meta_to_json({s.num_nodes(), s.channels(), s.interval_minutes, s.name, false}).dump(2) << '\n';
    if (!df || !mf) throw DataError("write failed for '" + data_path + "'");
}

}  // namespace agsl::data
