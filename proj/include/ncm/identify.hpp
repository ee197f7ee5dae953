#pragma once

#include <optional>
#include <vector>

#include "ncm/dataset.hpp"
#include "ncm/estimand.hpp"
#include "ncm/graph.hpp"
#include "ncm/train.hpp"

namespace ncm {

struct GapTestResult {
    std::vector<double> gaps;
    double mean = 0.0;
    double se = 0.0;
    double tau = 0.0;
    bool identifiable = false;  // mean + 1.65 * se < tau, strictly
};

// One-sided test on repeated max-min gaps. The default standard error is
// (1/r) * sqrt(Σ (gap_i - mean)^2); conventional_se switches to the usual
// sample standard error s / sqrt(r). Needs at least 2 gaps.
GapTestResult gap_test(const std::vector<double>& gaps, double tau,
                       bool conventional_se = false);

struct NeuralIdResult {
    bool identifiable = false;
    std::optional<double> estimate;    // min-model query estimate when identifiable
    GapTestResult test;
    std::vector<GapTrace> traces;      // one per repeat
    std::vector<double> run_estimates; // first repeat's estimate is run_estimates[0]
};

// Decides identifiability of P(outcome=1 | do(treatment=1)) from data alone:
// repeats min/max training `repeats` times on the same dataset with distinct
// derived seeds, then tests the final-epoch gaps against tau. On an
// identifiable verdict the reported estimate comes from the first repeat's
// min model (a fixed arbitrary choice).
NeuralIdResult neural_id(const Dataset& data, const CausalDiagram& g, const Query& query,
                         const TrainConfig& cfg, double tau, int repeats,
                         bool conventional_se = false);

struct HybridResult {
    bool identifiable = false;
    std::optional<double> estimate;    // absent when not identifiable
    Estimand estimand;                 // fail node when not identifiable
};

// Symbolic identification first; only on success is a model trained (plain
// likelihood fit) and its query estimate returned. No training happens for a
// non-identifiable query.
HybridResult hybrid_id_estimate(const Dataset& data, const CausalDiagram& g, const Query& query,
                                const TrainConfig& cfg);

}  // namespace ncm
