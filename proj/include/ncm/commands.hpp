#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "ncm/experiment.hpp"
#include "ncm/graph.hpp"
#include "ncm/train.hpp"

namespace ncm {

// Defaults sized so the full identifiability benchmark finishes in hours on
// one desk CPU; the type defaults on TrainConfig are the full-scale settings.
TrainConfig desk_train_config();

// A --graph argument is either a bundled fixture name or a path to a diagram
// text file ("A -> B" / "A <-> B" lines).
struct ResolvedGraph {
    CausalDiagram graph;
    std::optional<Fixture> fixture;  // set when the argument named a fixture
    std::string text;                // serialized form (hash/seed basis)
};
ResolvedGraph resolve_graph(const std::string& name_or_path);

// --- gen-data ----------------------------------------------------------------

struct GenDataArgs {
    std::string graph;
    std::string out = "data.csv";
    std::size_t n = 10000;
    std::uint64_t seed = 1;
    std::string treatment, outcome;    // default from the fixture when empty
    std::optional<double> widen;       // minimum |ATE - TV| to enforce
    std::optional<int> high_dim;       // bits per covariate column
};

struct GenDataResult {
    std::string csv_path;
    std::string meta_path;
    std::size_t rows = 0;
    std::size_t columns = 0;
    std::optional<double> exact_ate, exact_tv;
    bool widened = false;
    std::uint64_t model_hash = 0;
};

GenDataResult cmd_gen_data(const GenDataArgs& args);

// --- identify ----------------------------------------------------------------

struct IdentifyArgs {
    std::string data;
    std::string graph;
    std::string out = "identify-out";  // directory for report + traces
    std::string treatment, outcome;
    double tau = 0.03;
    int repeats = 4;
    bool symbolic = false;             // decide via the symbolic engine instead
    bool conventional_se = false;
    TrainConfig train;
};

struct IdentifyResult {
    bool identifiable = false;
    std::optional<double> estimate;
    std::string report_path;
    nlohmann::json report;
};

IdentifyResult cmd_identify(const IdentifyArgs& args);

// --- estimate ----------------------------------------------------------------

struct EstimateArgs {
    std::string data;
    std::string graph;
    std::string out = "estimate-out";
    std::string treatment, outcome;
    TrainConfig train;
};

struct EstimateResult {
    double query_estimate = 0.0;       // P(outcome=1 | do(treatment=1))
    double ate = 0.0;
    double naive_ate = 0.0;
    std::optional<double> ate_error, naive_ate_error;  // need sidecar ground truth
    std::optional<double> kl, naive_kl;                // need sidecar exact table
    std::string report_path;
    nlohmann::json report;
};

EstimateResult cmd_estimate(const EstimateArgs& args);

// --- benchmarks and reports --------------------------------------------------

struct BenchmarkResult {
    std::string report_path;
    std::string timing_path;
    nlohmann::json report;
};

BenchmarkResult cmd_benchmark_id(const IdBenchmarkConfig& cfg, const std::string& out_dir);
BenchmarkResult cmd_benchmark_est(const EstBenchmarkConfig& cfg, const std::string& out_dir);

// Validates the report file and returns the printed summary.
std::string cmd_report(const std::string& report_path);

}  // namespace ncm
