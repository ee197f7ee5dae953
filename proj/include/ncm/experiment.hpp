#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ncm/canonical.hpp"
#include "ncm/graph.hpp"
#include "ncm/train.hpp"

namespace ncm {

// Deterministic seed for one unit of benchmark work, keyed by the trial
// parameters; `master` (the CLI --seed) shifts the whole family. Negative run
// indices are reserved for data generation.
std::uint64_t experiment_seed(const std::string& graph_text, std::size_t n, int trial, int run,
                              std::uint64_t master = 0);

// Hex digest of a JSON value's canonical serialization; stamped into reports
// so every record can be traced to its exact configuration.
std::string config_hash_hex(const nlohmann::json& config);

// A benchmark-ready ground-truth model: built from a derived seed, with the
// effect-versus-conditional gap widened when requested. Non-convergent seeds
// are discarded and redrawn (up to a bounded number of attempts).
struct GeneratedScm {
    CanonicalScm scm;
    bool widened = false;
    int widen_steps = 0;
    int attempts = 1;  // seeds tried until widening converged
};
GeneratedScm make_benchmark_scm(const CausalDiagram& g, const std::string& treatment,
                                const std::string& outcome,
                                std::optional<double> widen_threshold, std::uint64_t base_seed);

// --- identifiability benchmark ----------------------------------------------

struct IdBenchmarkConfig {
    std::vector<std::string> graphs;     // fixture names; empty = all eight
    int trials = 5;
    std::size_t n = 10000;
    int repeats = 4;
    std::vector<double> taus = {0.01, 0.03, 0.05};
    std::uint64_t seed = 1;
    double widen_threshold = 0.05;
    bool conventional_se = false;
    int threads = 1;                     // worker pool width; 1 = fully sequential
    TrainConfig train;                   // seed field is ignored (derived per trial)
};

// Runs the full pipeline and returns {report, timing}: `report` is the
// canonical deterministic document (bit-identical across reruns of the same
// config on one thread); `timing` holds wall-clock seconds, kept separate so
// the report stays reproducible.
struct BenchmarkOutput {
    nlohmann::json report;
    nlohmann::json timing;
};
BenchmarkOutput run_id_benchmark(const IdBenchmarkConfig& cfg);

// --- estimation benchmark ---------------------------------------------------

struct EstBenchmarkConfig {
    std::vector<std::string> graphs;     // empty = the four identifiable fixtures
    std::vector<std::size_t> grid = {1000, 10000, 100000};
    int trials = 5;
    std::uint64_t seed = 1;
    double widen_threshold = 0.05;
    int threads = 1;
    TrainConfig train;
};
BenchmarkOutput run_est_benchmark(const EstBenchmarkConfig& cfg);

// --- report handling --------------------------------------------------------

void write_json(const nlohmann::json& j, const std::string& path);
nlohmann::json read_json(const std::string& path);

// Emits the plot-ready CSV companions of a report into out_dir.
void write_report_csvs(const nlohmann::json& report, const std::string& out_dir);

// Structural validation against the shape documented in docs/report.schema.json.
bool validate_report(const nlohmann::json& report, std::string* error = nullptr);

// Short human-readable digest of a benchmark report.
std::string summarize_report(const nlohmann::json& report);

}  // namespace ncm
