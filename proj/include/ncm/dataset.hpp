#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ncm/table.hpp"

namespace ncm {

// Where a dataset came from; carried in the JSON sidecar next to the CSV.
struct DatasetMeta {
    std::uint64_t seed = 0;
    std::uint64_t model_hash = 0;                  // hash of the generating model
    std::optional<std::pair<std::string, int>> intervention;
    std::optional<double> exact_ate;               // generating model's ATE
    std::optional<double> exact_tv;
    bool widened = false;
    std::optional<DistributionTable> exact_table;  // generating model's P(V)
};

// Rows of binary observations, row-major packed bytes (0/1).
struct Dataset {
    std::vector<std::string> vars;
    std::vector<std::uint8_t> rows;
    DatasetMeta meta;

    std::size_t n() const { return vars.empty() ? 0 : rows.size() / vars.size(); }
    int arity() const { return static_cast<int>(vars.size()); }
    std::uint8_t at(std::size_t row, int var) const { return rows[row * vars.size() + var]; }

    // Index of each row under the table encoding (bit i = vars[i]); arity <= 24.
    std::uint32_t row_index(std::size_t row) const;
    // Histogram over assignment indices, length 1 << arity.
    std::vector<std::uint64_t> counts() const;
};

// CSV: header line of variable names, then one 0/1 row per observation.
void write_csv(const Dataset& data, const std::string& path);
// Reads the CSV and, when present, the sidecar JSON next to it.
Dataset read_csv(const std::string& path);

// Sidecar path for a CSV path: "<path without .csv>.meta.json".
std::string sidecar_path(const std::string& csv_path);
void write_sidecar(const Dataset& data, const std::string& csv_path);

}  // namespace ncm
