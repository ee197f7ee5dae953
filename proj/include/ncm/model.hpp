#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ncm/dataset.hpp"
#include "ncm/graph.hpp"
#include "ncm/nn.hpp"
#include "ncm/table.hpp"

namespace ncm {

struct NcmArch {
    int hidden_width = 32;
    int hidden_layers = 4;

    std::vector<int> hidden_widths() const {
        return std::vector<int>(static_cast<std::size_t>(hidden_layers), hidden_width);
    }
};

// Graph-constrained neural causal model: one shared uniform noise block per
// confounded clique (singleton blocks for unconfounded variables), and one
// MLP per variable whose inputs are its parents' bits followed by the values
// of every noise block it belongs to.
struct Ncm {
    CausalDiagram g;
    NcmArch arch;
    std::vector<std::vector<int>> u_blocks;    // block members, ascending variable index
    std::vector<std::vector<int>> var_blocks;  // per variable: incident block ids, ascending
    std::vector<Mlp> nets;                     // per variable, indexed like g
    std::vector<int> topo;                     // cached topological order
    std::uint64_t seed = 0;

    // Total noise-input width of variable v (sum of its blocks' dimensions).
    int u_dim(int v) const;
    std::size_t parameter_count() const;
};

// Builds the model with freshly initialized networks. Deterministic per seed.
Ncm construct_ncm(const CausalDiagram& g, const NcmArch& arch, std::uint64_t seed);

// Ancestral sampling with Gumbel-max draws; intervened variables are clamped
// and consume no randomness. Deterministic per (seed, intervention).
Dataset sample_ncm(const Ncm& model, std::size_t n, std::uint64_t seed,
                   const Assignment& intervention = {});

// Monte-Carlo probability of the complete assignment v under do(x): average
// over mc_samples noise draws of the product of per-variable Bernoulli
// factors, accumulated in log space. Exactly 0 when v contradicts x.
double estimate_prob(const Ncm& model, const Assignment& v, const Assignment& x,
                     std::size_t mc_samples, std::uint64_t seed);

// P(y | do(x)): sum of estimate_prob over every complete assignment consistent
// with y, all terms sharing one noise draw (common random numbers). With the
// same seed this equals the sum of individual estimate_prob calls exactly.
double estimate_query(const Ncm& model, const Assignment& y, const Assignment& x,
                      std::size_t mc_samples, std::uint64_t seed);

// estimate_query(y=1 | do(x=1)) - estimate_query(y=1 | do(x=0)), both terms
// on the same noise draw.
double ate_ncm(const Ncm& model, const std::string& x, const std::string& y,
               std::size_t mc_samples, std::uint64_t seed);

// Raw Monte-Carlo estimates of the observational probability of every complete
// assignment (indexed like DistributionTable, shared noise). Sums close to one
// for a trained model but is not renormalized.
std::vector<double> estimate_all_probs(const Ncm& model, std::size_t mc_samples,
                                       std::uint64_t seed);

// Monte-Carlo estimate of the model's observational law over all complete
// assignments (shared noise), normalized to sum to one exactly.
DistributionTable fitted_l1_table(const Ncm& model, std::size_t mc_samples, std::uint64_t seed);

// Lossless JSON round trip of graph, architecture, and parameters.
void save_checkpoint(const Ncm& model, const std::string& path);
Ncm load_checkpoint(const std::string& path);

namespace detail {

// One uniform draw of every noise block, row-major [m x dim] per block. The
// fill order (blocks in index order, each row-major) is shared by the
// estimators above and by the trainer's tape-attached losses, so both see the
// same noise for the same seed.
std::vector<std::vector<double>> draw_block_noise(const Ncm& model, std::size_t m, Rng& rng);

// Stable log of the logistic function, the per-variable Bernoulli log-factor.
double log_sigmoid_of(double z);

// Network input matrix for variable v under fixed parent bits: [m x (k+u_dim)]
// row-major, parent bits first, then each incident block's noise values.
std::vector<double> assemble_input(const Ncm& model, int v, const std::vector<int>& parent_bits,
                                   const std::vector<std::vector<double>>& noise, std::size_t m);

}  // namespace detail

}  // namespace ncm
