#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ncm/dataset.hpp"
#include "ncm/graph.hpp"
#include "ncm/table.hpp"

namespace ncm {

// --- canonical boolean mechanisms -------------------------------------------
//
// A variable with k binary parents has 2^(2^k) possible boolean mechanisms.
// Selector r in [0, 2^(2^k)) names one of them: bit j of r (little-endian) is
// the output under the j-th parent assignment in lexicographic order, where
// the FIRST parent (lowest declaration index) is the most significant digit.
// So for one parent: r=0 is const 0, r=1 is NOT(parent), r=2 is the identity,
// r=3 is const 1.

// 2^(2^k); throws std::invalid_argument for k > 4 (the table would not fit the
// enumeration guard).
std::uint64_t selector_cardinality(int k);

// Lexicographic position of a parent-value tuple (first parent most significant).
std::uint32_t lex_index(const std::vector<int>& parent_bits);

// Output bit of mechanism r on the given parent values; validates r.
int canonical_output(std::uint64_t r, const std::vector<int>& parent_bits);

// --- canonical structural model ---------------------------------------------
//
// Ground-truth generator over binary variables. Each variable's mechanism is
// chosen by a random selector; selectors of distinct confounded clusters
// (connected components of the bidirected part) are independent. Within a
// cluster, dependence is introduced strictly along bidirected edges: each edge
// carries an independent latent, and each member's selector distribution is a
// table conditioned on its incident edge latents. Non-adjacent members stay
// independent, so the model's induced diagram is exactly the input diagram.
// The per-cluster joint selector table is materialized for exact valuation.
struct CanonicalScm {
    struct EdgeLatent {
        int a = 0, b = 0;            // graph variable indices, a < b
        std::vector<double> p;       // latent distribution, K = min(m_a, m_b)
    };
    struct Component {
        std::vector<int> members;    // ascending graph indices
        std::vector<EdgeLatent> edges;
        // Per member: positions into `edges` of its incident edges (ascending).
        std::vector<std::vector<int>> incident;
        std::vector<std::uint64_t> m;  // selector cardinality per member
        // Per member: conditional selector tables, rows indexed mixed-radix by
        // the incident latents (first incident edge most significant), row
        // length m[i]. Empty when the model was built directly from joints.
        std::vector<std::vector<double>> cond;
        // Joint selector distribution, mixed-radix over members (first member
        // most significant). Always populated.
        std::vector<double> joint;
    };

    CausalDiagram g;
    std::vector<Component> comps;    // in c_components(g) order
    std::vector<int> comp_of;        // variable -> component position
    std::uint64_t seed = 0;

    bool factored() const;           // true when cond tables are available
};

// Random model: flat-Dirichlet edge latents and conditional rows, derived
// deterministically from the seed.
CanonicalScm build_canonical(const CausalDiagram& g, std::uint64_t seed);

// Model with explicitly given per-cluster joint selector tables (in
// c_components(g) order, mixed-radix as documented above). No factored form,
// so widen_ate_tv_gap rejects such models.
CanonicalScm make_canonical_from_joints(const CausalDiagram& g,
                                        std::vector<std::vector<double>> joints);

// Content hash of graph + noise parameters; keys dataset sidecars.
std::uint64_t model_hash(const CanonicalScm& scm);

// --- exact valuations -------------------------------------------------------

// Observational joint P(V).
DistributionTable valuate_l1(const CanonicalScm& scm);

// Interventional joint P(V | do(x)): entries inconsistent with x are zero.
DistributionTable valuate_l2(const CanonicalScm& scm, const Assignment& x);

// One counterfactual clause: the event holds in the world where the
// intervention was applied (empty intervention = the factual world).
struct CfClause {
    Assignment intervention;
    Assignment event;
};

// Exact probability that all clauses hold jointly; enumerates the full joint
// selector space (guard: at most 2^24 joint states).
double valuate_l3(const CanonicalScm& scm, const std::vector<CfClause>& clauses);

// P(y=1 | do(x=1)) - P(y=1 | do(x=0)), exact.
double ate(const CanonicalScm& scm, const std::string& x, const std::string& y);
// P(y=1 | x=1) - P(y=1 | x=0) from the exact L1 table; throws
// std::domain_error when either conditioning event has probability zero.
double tv(const CanonicalScm& scm, const std::string& x, const std::string& y);

// Ancestral sampling; n > 0. Optional intervention clamps variables.
Dataset sample(const CanonicalScm& scm, std::size_t n, std::uint64_t seed,
               const Assignment& intervention = {});

// --- gap widening -----------------------------------------------------------

struct WidenError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Gradient ascent on |ate - tv| over the softmax logits of the factored noise
// parameters until the gap reaches `threshold`. Exits before the first step if
// the model already qualifies. Throws WidenError after max_steps without
// convergence (caller may rebuild with a fresh seed and retry), and
// std::logic_error for non-factored models. Returns steps taken.
int widen_ate_tv_gap(CanonicalScm& scm, const std::string& x, const std::string& y,
                     double threshold = 0.05, double learning_rate = 0.1,
                     int max_steps = 5000);

// --- high-dimensional covariate expansion -----------------------------------
//
// Every variable except treatment and outcome is replaced by k columns named
// "<name>__0" .. "<name>__<k-1>": bits 1..k-1 are fresh fair coins and bit 0
// is set so the XOR of all k bits equals the original value. The fixed decoder
// (XOR) recovers the original column exactly, so the joint law of
// (treatment, outcome, decoded covariates) is unchanged.
Dataset expand_high_dim(const Dataset& data, const std::string& treatment,
                        const std::string& outcome, int k, std::uint64_t seed);

// Inverse of the encoding: collapses each "<name>__i" group by XOR.
Dataset decode_high_dim(const Dataset& data);

// Companion diagram: each expanded covariate bit inherits all edges of the
// original covariate.
CausalDiagram expand_high_dim_graph(const CausalDiagram& g, const std::string& treatment,
                                    const std::string& outcome, int k);

}  // namespace ncm
