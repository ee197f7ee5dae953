#include "ncm/identify.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "ncm/rng.hpp"

namespace ncm {

namespace {

std::uint64_t derive(std::uint64_t base, const char* tag, std::uint64_t index = 0) {
    std::uint64_t h = fnv1a64(&base, sizeof(base));
    h = fnv1a64(tag, std::strlen(tag), h);
    return fnv1a64(&index, sizeof(index), h);
}

}  // namespace

GapTestResult gap_test(const std::vector<double>& gaps, double tau, bool conventional_se) {
    if (gaps.size() < 2) throw std::invalid_argument("gap_test: need at least 2 gaps");
    if (!(tau >= 0.0)) throw std::invalid_argument("gap_test: tau must be nonnegative");
    GapTestResult out;
    out.gaps = gaps;
    out.tau = tau;
    // Accumulate over a sorted copy so the statistics (and hence the verdict)
    // are exactly invariant under permutation of the input.
    std::vector<double> ordered = gaps;
    std::sort(ordered.begin(), ordered.end());
    const double r = static_cast<double>(ordered.size());
    for (double g : ordered) out.mean += g;
    out.mean /= r;
    double ss = 0.0;
    for (double g : ordered) ss += (g - out.mean) * (g - out.mean);
    if (conventional_se)
        out.se = std::sqrt(ss / (r - 1.0)) / std::sqrt(r);
    else
        out.se = std::sqrt(ss) / r;
    out.identifiable = out.mean + 1.65 * out.se < tau;
    return out;
}

NeuralIdResult neural_id(const Dataset& data, const CausalDiagram& g, const Query& query,
                         const TrainConfig& cfg, double tau, int repeats,
                         bool conventional_se) {
    if (repeats < 2) throw std::invalid_argument("neural_id: need at least 2 repeats");
    NeuralIdResult out;
    std::vector<double> gaps;
    for (int rep = 0; rep < repeats; ++rep) {
        TrainConfig run_cfg = cfg;
        run_cfg.seed = derive(cfg.seed, "repeat", static_cast<std::uint64_t>(rep));
        MinMaxResult result = train_minmax(data, g, query, run_cfg);
        gaps.push_back(result.final_gap);
        out.traces.push_back(std::move(result.trace));
        const Assignment y{{query.outcome, query.outcome_value}};
        const Assignment x{{query.treatment, query.treatment_value}};
        out.run_estimates.push_back(estimate_query(result.min_model, y, x, cfg.mc_samples,
                                                   derive(run_cfg.seed, "estimate")));
    }
    out.test = gap_test(gaps, tau, conventional_se);
    out.identifiable = out.test.identifiable;
    if (out.identifiable) out.estimate = out.run_estimates.front();
    return out;
}

HybridResult hybrid_id_estimate(const Dataset& data, const CausalDiagram& g, const Query& query,
                                const TrainConfig& cfg) {
    HybridResult out;
    out.estimand = symbolic_id(g, {query.treatment}, {query.outcome});
    if (out.estimand.failed()) return out;  // no training for a non-identifiable query
    out.identifiable = true;
    Ncm model = train_nll(data, g, cfg);
    const Assignment y{{query.outcome, query.outcome_value}};
    const Assignment x{{query.treatment, query.treatment_value}};
    out.estimate = estimate_query(model, y, x, cfg.mc_samples, derive(cfg.seed, "estimate"));
    return out;
}

}  // namespace ncm
