#pragma once

#include <string>
#include <vector>

#include "ncm/graph.hpp"
#include "ncm/table.hpp"

namespace ncm {

// Expression over the observational law. Leaves are the full joint; marginals,
// conditionals, and interventional formulas are built from sums, products, and
// fractions of it. A `fail` node marks a non-identifiable query.
struct Estimand {
    enum class Kind { joint, product, sum, fraction, fail };

    Kind kind = Kind::fail;
    std::vector<std::string> vars;      // joint only: the variable list
    std::vector<std::string> sum_vars;  // sum only: bound variables
    std::vector<Estimand> children;     // product: factors; sum: {body}; fraction: {num, den}

    bool failed() const { return kind == Kind::fail; }
};

// Canonical rendering; fraction-of-marginals patterns print as conditionals,
// e.g. "Σ_{Z} P(Z) · P(Y | X, Z)".
std::string to_string(const Estimand& e);

// Recursive evaluation with lexically scoped bindings: sums bind their
// variables (shadowing outer bindings), leaves read every variable from the
// environment. Throws std::invalid_argument on an unbound variable and
// std::domain_error (naming the conditioning event) when a denominator is 0.
double evaluate_estimand(const Estimand& e, const DistributionTable& table,
                         const Assignment& env);

// Variables some leaf reads from the outermost environment.
std::vector<std::string> free_variables(const Estimand& e);

// P(y | do(x)) evaluated against a table: binds x and y, and pins any residual
// free variable to 0 — such variables only arise from interventions the
// derivation added under do-calculus rule 3, whose value cannot change the
// result for any law compatible with the diagram.
double evaluate_query(const Estimand& e, const DistributionTable& table, const Assignment& x,
                      const Assignment& y);

// Sound and complete identification of P(y | do(x)) from the observational
// law, by c-component factorization over the diagram. Returns a `fail`
// estimand when the query is not identifiable.
Estimand symbolic_id(const CausalDiagram& g, const std::vector<std::string>& x,
                     const std::vector<std::string>& y);

// Back-door adjustment for fully observed (Markovian) diagrams:
// Σ_z P(y | x, z) P(z) with Z = non-descendants of X minus X and Y.
Estimand markovian_adjustment(const CausalDiagram& g, const std::string& x,
                              const std::string& y);

}  // namespace ncm
