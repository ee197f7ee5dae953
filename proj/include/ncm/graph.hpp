#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace ncm {

// Causal diagram over binary endogenous variables: a DAG of directed edges plus a
// set of bidirected (unobserved-confounder) edges. Variables are identified by
// declaration order, which is the universal tie-breaker for every algorithm here.
//
// Immutable after construction; use the factory functions below.
class CausalDiagram {
public:
    CausalDiagram() = default;

    // vars: declaration order. directed: (parent, child) index pairs.
    // bidirected: unordered index pairs. Validates: known endpoints, no self
    // loops, no duplicate edges, acyclic directed part.
    static CausalDiagram make(std::vector<std::string> vars,
                              std::vector<std::pair<int, int>> directed,
                              std::vector<std::pair<int, int>> bidirected);

    int size() const { return static_cast<int>(names_.size()); }
    const std::vector<std::string>& variables() const { return names_; }
    const std::string& name(int v) const { return names_.at(v); }
    // Throws std::invalid_argument for unknown names.
    int index_of(const std::string& name) const;
    bool contains(const std::string& name) const;

    // Sorted ascending by declaration index.
    const std::vector<int>& parents(int v) const { return parents_.at(v); }
    const std::vector<int>& children(int v) const { return children_.at(v); }
    const std::vector<int>& bidirected_neighbors(int v) const { return sib_.at(v); }

    bool has_directed(int from, int to) const;
    bool has_bidirected(int a, int b) const;

    // Deterministic order: sorted by (first, second); bidirected pairs stored (min, max).
    std::vector<std::pair<int, int>> directed_edges() const;
    std::vector<std::pair<int, int>> bidirected_edges() const;

private:
    std::vector<std::string> names_;
    std::vector<std::vector<int>> parents_, children_, sib_;
};

// --- text format ------------------------------------------------------------
//
//   # comment to end of line
//   node A            explicit declaration
//   A -> B            directed edge (A and B implicitly declared at first mention)
//   A <-> B           bidirected edge
//
// Errors carry 1-based line numbers. Duplicate edges and duplicate declarations
// are rejected; cycles are rejected with the offending variables named.
CausalDiagram parse_diagram(const std::string& text);
// Canonical text (node lines in declaration order, then directed, then
// bidirected edges); parse_diagram(serialize_diagram(g)) reproduces g exactly.
std::string serialize_diagram(const CausalDiagram& g);
// FNV-1a hash of the canonical text; used to key reports and derived seeds.
std::uint64_t diagram_hash(const CausalDiagram& g);

// --- structural queries -----------------------------------------------------

// Kahn topological order; among simultaneously-ready variables, declaration
// order wins, so the result is unique and deterministic.
std::vector<int> topological_order(const CausalDiagram& g);

// Maximal cliques of the bidirected part (confounded components). A variable
// with no bidirected edge forms a singleton. Components may overlap. Each
// component is sorted ascending; the list is sorted lexicographically.
std::vector<std::vector<int>> c2_components(const CausalDiagram& g);

// Connected components of the bidirected part: a disjoint partition, each
// sorted ascending, listed by smallest member. Every confounded component from
// c2_components is a subset of exactly one of these.
std::vector<std::vector<int>> c_components(const CausalDiagram& g);

// Diagram after do(X): drops directed edges into members of x and bidirected
// edges incident to them. Variables keep their declaration order. Idempotent.
CausalDiagram mutilate(const CausalDiagram& g, const std::vector<std::string>& x);

// Subgraph over keep (both edge kinds); variables keep relative order.
CausalDiagram induced_subgraph(const CausalDiagram& g, const std::vector<int>& keep);

// Inclusive ancestors/descendants of a set of variables, returned sorted.
std::vector<int> ancestors(const CausalDiagram& g, const std::vector<int>& of);
std::vector<int> descendants(const CausalDiagram& g, const std::vector<int>& of);
std::vector<int> ancestors(const CausalDiagram& g, const std::vector<std::string>& of);
std::vector<int> descendants(const CausalDiagram& g, const std::vector<std::string>& of);

// --- benchmark fixtures -----------------------------------------------------

struct Fixture {
    std::string name;
    CausalDiagram graph;
    std::string treatment;  // "X"
    std::string outcome;    // "Y"
    bool identifiable;      // expected status of P(Y|do(X)); confirmed by the
                            // symbolic engine in the test suite
};

// The eight benchmark diagrams: backdoor, frontdoor, m, napkin (identifiable);
// bow, extended_bow, iv, bad_m (not identifiable). Deterministic order.
const std::vector<Fixture>& benchmark_fixtures();
// Lookup by name; throws std::invalid_argument for unknown names.
const Fixture& fixture(const std::string& name);

}  // namespace ncm
