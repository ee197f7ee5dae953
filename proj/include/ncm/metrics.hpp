#pragma once

#include <vector>

#include "ncm/table.hpp"

namespace ncm {

// Σ_v p(v) ln(p(v)/q(v)). Throws std::domain_error when q is zero (or
// negative) somewhere p is positive, and std::invalid_argument on mismatched
// variable sets.
double kl_divergence(const DistributionTable& p, const DistributionTable& q);

// Same divergence against raw per-assignment values q (indexed like p's
// table, no normalization requirement) — the form used against Monte-Carlo
// probability estimates.
double kl_divergence(const DistributionTable& p, const std::vector<double>& q);

// Mean absolute error between paired vectors.
double mae(const std::vector<double>& estimates, const std::vector<double>& truths);

// Order statistics with linear interpolation between ranks; pct in [0, 100].
double percentile(std::vector<double> values, double pct);
double median(std::vector<double> values);

}  // namespace ncm
