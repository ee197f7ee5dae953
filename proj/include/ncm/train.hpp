#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ncm/autodiff.hpp"
#include "ncm/dataset.hpp"
#include "ncm/graph.hpp"
#include "ncm/model.hpp"
#include "ncm/nn.hpp"

namespace ncm {

// The interventional probability being optimized: P(outcome=o | do(treatment=t)).
struct Query {
    std::string treatment;
    std::string outcome;
    int treatment_value = 1;
    int outcome_value = 1;
};

struct TrainConfig {
    int epochs = 3000;
    std::size_t mc_samples = 20000;
    double lambda_start = 1.0;   // penalty weight, annealed geometrically
    double lambda_end = 0.001;
    AdamWConfig optimizer;
    int restart_period = 100;    // cosine schedule: first cycle length
    int restart_mult = 2;        // cycle growth factor
    int log_every = 10;          // trace cadence (epochs)
    int patience = 100;          // early stop: epochs without improvement
    double min_delta = 1e-6;     // early stop: minimum improvement
    std::uint64_t seed = 0;
    NcmArch arch;
};

// One logged snapshot. ATEs are evaluated on the post-update parameters with a
// deterministic per-epoch evaluation seed shared by both models; NLLs are the
// epoch's training objective data terms (pre-update parameters).
struct GapRecord {
    int epoch = 0;               // 1-based
    double ate_min = 0.0;
    double ate_max = 0.0;
    double gap = 0.0;            // always ate_max - ate_min
    double nll_min = 0.0;
    double nll_max = 0.0;
};
using GapTrace = std::vector<GapRecord>;

void write_trace_csv(const GapTrace& trace, const std::string& path);

// Deterministic derived seeds (epoch is 1-based). epoch_noise_seed feeds the
// shared Monte-Carlo draw of an epoch's losses; epoch_eval_seed feeds the
// trace's ATE evaluations. Exposed so logged values can be reproduced from
// saved checkpoints.
std::uint64_t epoch_noise_seed(std::uint64_t base_seed, int epoch);
std::uint64_t epoch_eval_seed(std::uint64_t base_seed, int epoch);

// Geometric interpolation from lambda_start (epoch 0) to lambda_end
// (epoch total-1); the unique schedule linear in log-lambda through both
// endpoints. total == 1 pins the single epoch at lambda_start.
double lambda_schedule(int epoch, int total, double lambda_start, double lambda_end);

// --- tape-attached losses ---------------------------------------------------

enum class Direction { minimize, maximize };

struct TapedLoss {
    std::vector<MlpNodes> nets;  // registered parameters, variable order
    ad::NodeId loss = -1;        // scalar objective
    ad::NodeId nll = -1;         // scalar data term
    ad::NodeId query = -1;       // scalar query estimate (-1 when absent)
};

// Mean negative log-likelihood of the dataset under the model's Monte-Carlo
// likelihood with mc_samples shared noise draws (one draw per call, seeded).
// Distinct rows are grouped, so cost scales with 2^|V|, not dataset size.
TapedLoss nll_loss(ad::Tape& tape, const Ncm& model, const Dataset& data,
                   std::size_t mc_samples, std::uint64_t noise_seed);

// nll - lambda * log(q-hat)        for Direction::maximize,
// nll - lambda * log(1 - q-hat)    for Direction::minimize,
// with the log arguments floored at 1e-12. The query estimate reuses the NLL
// term's noise draw and network forwards.
TapedLoss id_loss(ad::Tape& tape, const Ncm& model, const Dataset& data, const Query& query,
                  double lambda, Direction direction, std::size_t mc_samples,
                  std::uint64_t noise_seed);

// --- training loops ---------------------------------------------------------

struct MinMaxResult {
    Ncm min_model;
    Ncm max_model;
    GapTrace trace;              // never empty: the final epoch is always logged
    double final_gap = 0.0;      // trace.back().gap
};

// Trains two independently initialized models pushing the query down and up
// while fitting the data. Logs every log_every epochs and at the final epoch.
// Both models share each epoch's noise draw. Throws on a non-finite loss.
MinMaxResult train_minmax(const Dataset& data, const CausalDiagram& g, const Query& query,
                          const TrainConfig& cfg);

// Optional account of a train_nll run: per-epoch pre-update losses (index 0 =
// epoch 1), the epoch whose parameters were restored, and its loss.
struct NllTrainInfo {
    std::vector<double> losses;
    int best_epoch = 0;
    double best_loss = 0.0;
};

// Plain likelihood fit with patience-based early stopping; the best parameters
// seen (by training objective) are restored before returning.
Ncm train_nll(const Dataset& data, const CausalDiagram& g, const TrainConfig& cfg,
              NllTrainInfo* info = nullptr);

// Baseline with no causal structure: likelihood fit over the complete
// acyclic graph in dataset variable order (no confounding). Its causal answer
// is, by construction, the conditional computed from its fitted law.
Ncm train_naive(const Dataset& data, const TrainConfig& cfg);

}  // namespace ncm
