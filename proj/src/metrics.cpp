#include "ncm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ncm {

namespace {

double kl_terms(const DistributionTable& p, const std::vector<double>& q) {
    double total = 0.0;
    for (std::size_t i = 0; i < p.probabilities().size(); ++i) {
        const double pi = p.probabilities()[i];
        if (pi == 0.0) continue;
        if (!(q[i] > 0.0))
            throw std::domain_error("kl_divergence: q has no mass at assignment index " +
                                    std::to_string(i) + " where p is positive");
        total += pi * std::log(pi / q[i]);
    }
    return total;
}

}  // namespace

double kl_divergence(const DistributionTable& p, const DistributionTable& q) {
    if (p.variables() != q.variables())
        throw std::invalid_argument("kl_divergence: tables must share the same variables");
    return kl_terms(p, q.probabilities());
}

double kl_divergence(const DistributionTable& p, const std::vector<double>& q) {
    if (q.size() != p.probabilities().size())
        throw std::invalid_argument("kl_divergence: q must have one value per assignment");
    return kl_terms(p, q);
}

double mae(const std::vector<double>& estimates, const std::vector<double>& truths) {
    if (estimates.size() != truths.size() || estimates.empty())
        throw std::invalid_argument("mae: need equal-length nonempty vectors");
    double total = 0.0;
    for (std::size_t i = 0; i < estimates.size(); ++i)
        total += std::abs(estimates[i] - truths[i]);
    return total / static_cast<double>(estimates.size());
}

double percentile(std::vector<double> values, double pct) {
    if (values.empty()) throw std::invalid_argument("percentile: empty input");
    if (!(pct >= 0.0 && pct <= 100.0))
        throw std::invalid_argument("percentile: pct must be in [0, 100]");
    std::sort(values.begin(), values.end());
    const double rank = pct / 100.0 * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(rank);
    if (lo + 1 >= values.size()) return values.back();
    const double frac = rank - static_cast<double>(lo);
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

double median(std::vector<double> values) { return percentile(std::move(values), 50.0); }

}  // namespace ncm
