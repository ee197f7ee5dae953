#include "ncm/graph.hpp"

#include <algorithm>
#include <cctype>
#include <queue>
#include <sstream>
#include <stdexcept>

#include "ncm/rng.hpp"

namespace ncm {

namespace {

void insert_sorted(std::vector<int>& v, int x) {
    v.insert(std::lower_bound(v.begin(), v.end(), x), x);
}

bool contains_sorted(const std::vector<int>& v, int x) {
    return std::binary_search(v.begin(), v.end(), x);
}

}  // namespace

CausalDiagram CausalDiagram::make(std::vector<std::string> vars,
                                  std::vector<std::pair<int, int>> directed,
                                  std::vector<std::pair<int, int>> bidirected) {
    CausalDiagram g;
    const int n = static_cast<int>(vars.size());
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (vars[i] == vars[j])
                throw std::invalid_argument("duplicate variable \"" + vars[i] + "\"");
        }
    }
    g.names_ = std::move(vars);
    g.parents_.resize(n);
    g.children_.resize(n);
    g.sib_.resize(n);
    auto check = [&](int v) {
        if (v < 0 || v >= n) throw std::invalid_argument("edge endpoint out of range");
    };
    for (auto [a, b] : directed) {
        check(a);
        check(b);
        if (a == b)
            throw std::invalid_argument("self loop on \"" + g.names_[a] + "\"");
        if (contains_sorted(g.children_[a], b))
            throw std::invalid_argument("duplicate edge " + g.names_[a] + " -> " + g.names_[b]);
        insert_sorted(g.children_[a], b);
        insert_sorted(g.parents_[b], a);
    }
    for (auto [a, b] : bidirected) {
        check(a);
        check(b);
        if (a == b)
            throw std::invalid_argument("self loop on \"" + g.names_[a] + "\"");
        if (contains_sorted(g.sib_[a], b))
            throw std::invalid_argument("duplicate edge " + g.names_[a] + " <-> " + g.names_[b]);
        insert_sorted(g.sib_[a], b);
        insert_sorted(g.sib_[b], a);
    }
    // Acyclicity: Kahn count must reach n.
    std::vector<int> indeg(n, 0);
    for (int v = 0; v < n; ++v) indeg[v] = static_cast<int>(g.parents_[v].size());
    std::vector<int> ready;
    for (int v = 0; v < n; ++v)
        if (indeg[v] == 0) ready.push_back(v);
    int seen = 0;
    while (!ready.empty()) {
        int v = ready.back();
        ready.pop_back();
        ++seen;
        for (int c : g.children_[v])
            if (--indeg[c] == 0) ready.push_back(c);
    }
    if (seen != n) {
        std::string members;
        for (int v = 0; v < n; ++v) {
            if (indeg[v] > 0) {
                if (!members.empty()) members += ", ";
                members += g.names_[v];
            }
        }
        throw std::invalid_argument("directed cycle among {" + members + "}");
    }
    return g;
}

int CausalDiagram::index_of(const std::string& name) const {
    for (int i = 0; i < size(); ++i)
        if (names_[i] == name) return i;
    throw std::invalid_argument("unknown variable \"" + name + "\"");
}

bool CausalDiagram::contains(const std::string& name) const {
    for (const auto& s : names_)
        if (s == name) return true;
    return false;
}

bool CausalDiagram::has_directed(int from, int to) const {
    return contains_sorted(children_.at(from), to);
}

bool CausalDiagram::has_bidirected(int a, int b) const {
    return contains_sorted(sib_.at(a), b);
}

std::vector<std::pair<int, int>> CausalDiagram::directed_edges() const {
    std::vector<std::pair<int, int>> out;
    for (int v = 0; v < size(); ++v)
        for (int c : children_[v]) out.emplace_back(v, c);
    return out;
}

std::vector<std::pair<int, int>> CausalDiagram::bidirected_edges() const {
    std::vector<std::pair<int, int>> out;
    for (int v = 0; v < size(); ++v)
        for (int s : sib_[v])
            if (v < s) out.emplace_back(v, s);
    return out;
}

// --- parsing ----------------------------------------------------------------

namespace {

bool valid_name(const std::string& s) {
    if (s.empty()) return false;
    if (!(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
    for (char c : s)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
    return true;
}

[[noreturn]] void parse_fail(int line, const std::string& what) {
    throw std::invalid_argument("line " + std::to_string(line) + ": " + what);
}

}  // namespace

CausalDiagram parse_diagram(const std::string& text) {
    std::vector<std::string> vars;
    std::vector<bool> declared_explicitly;
    std::vector<std::pair<int, int>> directed, bidirected;
    auto intern = [&](const std::string& name, int line) {
        if (!valid_name(name)) parse_fail(line, "invalid variable name \"" + name + "\"");
        for (std::size_t i = 0; i < vars.size(); ++i)
            if (vars[i] == name) return static_cast<int>(i);
        vars.push_back(name);
        declared_explicitly.push_back(false);
        return static_cast<int>(vars.size() - 1);
    };

    std::istringstream in(text);
    std::string raw;
    int lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
        std::istringstream ls(raw);
        std::vector<std::string> tok;
        for (std::string t; ls >> t;) tok.push_back(t);
        if (tok.empty()) continue;
        if (tok[0] == "node") {
            if (tok.size() != 2) parse_fail(lineno, "expected: node NAME");
            if (!valid_name(tok[1])) parse_fail(lineno, "invalid variable name \"" + tok[1] + "\"");
            for (const auto& v : vars)
                if (v == tok[1]) parse_fail(lineno, "duplicate declaration of \"" + tok[1] + "\"");
            int id = intern(tok[1], lineno);
            declared_explicitly[id] = true;
        } else if (tok.size() == 3 && tok[1] == "->") {
            int a = intern(tok[0], lineno), b = intern(tok[2], lineno);
            if (a == b) parse_fail(lineno, "self loop on \"" + tok[0] + "\"");
            for (auto [x, y] : directed)
                if (x == a && y == b)
                    parse_fail(lineno, "duplicate edge " + tok[0] + " -> " + tok[2]);
            directed.emplace_back(a, b);
        } else if (tok.size() == 3 && tok[1] == "<->") {
            int a = intern(tok[0], lineno), b = intern(tok[2], lineno);
            if (a == b) parse_fail(lineno, "self loop on \"" + tok[0] + "\"");
            for (auto [x, y] : bidirected)
                if ((x == a && y == b) || (x == b && y == a))
                    parse_fail(lineno, "duplicate edge " + tok[0] + " <-> " + tok[2]);
            bidirected.emplace_back(std::min(a, b), std::max(a, b));
        } else {
            parse_fail(lineno, "unrecognized statement \"" + raw + "\"");
        }
    }
    try {
        return CausalDiagram::make(std::move(vars), std::move(directed), std::move(bidirected));
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(std::string("diagram: ") + e.what());
    }
}

std::string serialize_diagram(const CausalDiagram& g) {
    std::ostringstream out;
    for (const auto& v : g.variables()) out << "node " << v << "\n";
    for (auto [a, b] : g.directed_edges()) out << g.name(a) << " -> " << g.name(b) << "\n";
    for (auto [a, b] : g.bidirected_edges()) out << g.name(a) << " <-> " << g.name(b) << "\n";
    return out.str();
}

std::uint64_t diagram_hash(const CausalDiagram& g) { return fnv1a64(serialize_diagram(g)); }

// --- structural queries -----------------------------------------------------

std::vector<int> topological_order(const CausalDiagram& g) {
    const int n = g.size();
    std::vector<int> indeg(n);
    for (int v = 0; v < n; ++v) indeg[v] = static_cast<int>(g.parents(v).size());
    // Min-heap on declaration index makes the order unique.
    std::priority_queue<int, std::vector<int>, std::greater<>> ready;
    for (int v = 0; v < n; ++v)
        if (indeg[v] == 0) ready.push(v);
    std::vector<int> order;
    order.reserve(n);
    while (!ready.empty()) {
        int v = ready.top();
        ready.pop();
        order.push_back(v);
        for (int c : g.children(v))
            if (--indeg[c] == 0) ready.push(c);
    }
    return order;  // always length n: construction guarantees acyclicity
}

namespace {

// Pivoting Bron-Kerbosch over the bidirected part.
void bron_kerbosch(const CausalDiagram& g, std::vector<int>& r, std::vector<int> p,
                   std::vector<int> x, std::vector<std::vector<int>>& out) {
    if (p.empty() && x.empty()) {
        out.push_back(r);
        return;
    }
    // Pivot: vertex of p∪x with most neighbors in p (first such wins).
    int pivot = -1, best = -1;
    for (const auto& pool : {p, x}) {
        for (int u : pool) {
            int d = 0;
            for (int v : p)
                if (g.has_bidirected(u, v)) ++d;
            if (d > best) {
                best = d;
                pivot = u;
            }
        }
    }
    std::vector<int> cand;
    for (int v : p)
        if (!g.has_bidirected(pivot, v)) cand.push_back(v);
    for (int v : cand) {
        std::vector<int> p2, x2;
        for (int u : p)
            if (g.has_bidirected(v, u)) p2.push_back(u);
        for (int u : x)
            if (g.has_bidirected(v, u)) x2.push_back(u);
        r.push_back(v);
        bron_kerbosch(g, r, std::move(p2), std::move(x2), out);
        r.pop_back();
        p.erase(std::find(p.begin(), p.end(), v));
        insert_sorted(x, v);
    }
}

}  // namespace

std::vector<std::vector<int>> c2_components(const CausalDiagram& g) {
    std::vector<std::vector<int>> out;
    std::vector<int> connected, r;
    for (int v = 0; v < g.size(); ++v) {
        if (g.bidirected_neighbors(v).empty())
            out.push_back({v});
        else
            connected.push_back(v);
    }
    if (!connected.empty()) bron_kerbosch(g, r, connected, {}, out);
    for (auto& c : out) std::sort(c.begin(), c.end());
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::vector<int>> c_components(const CausalDiagram& g) {
    const int n = g.size();
    std::vector<int> comp(n, -1);
    std::vector<std::vector<int>> out;
    for (int start = 0; start < n; ++start) {
        if (comp[start] >= 0) continue;
        int id = static_cast<int>(out.size());
        out.emplace_back();
        std::vector<int> stack{start};
        comp[start] = id;
        while (!stack.empty()) {
            int v = stack.back();
            stack.pop_back();
            out[id].push_back(v);
            for (int s : g.bidirected_neighbors(v)) {
                if (comp[s] < 0) {
                    comp[s] = id;
                    stack.push_back(s);
                }
            }
        }
        std::sort(out[id].begin(), out[id].end());
    }
    return out;
}

CausalDiagram mutilate(const CausalDiagram& g, const std::vector<std::string>& x) {
    std::vector<bool> cut(g.size(), false);
    for (const auto& name : x) cut[g.index_of(name)] = true;
    std::vector<std::pair<int, int>> directed, bidirected;
    for (auto [a, b] : g.directed_edges())
        if (!cut[b]) directed.emplace_back(a, b);
    for (auto [a, b] : g.bidirected_edges())
        if (!cut[a] && !cut[b]) bidirected.emplace_back(a, b);
    return CausalDiagram::make(g.variables(), std::move(directed), std::move(bidirected));
}

CausalDiagram induced_subgraph(const CausalDiagram& g, const std::vector<int>& keep) {
    std::vector<int> remap(g.size(), -1);
    std::vector<int> ordered = keep;
    std::sort(ordered.begin(), ordered.end());
    ordered.erase(std::unique(ordered.begin(), ordered.end()), ordered.end());
    std::vector<std::string> vars;
    for (int v : ordered) {
        if (v < 0 || v >= g.size())
            throw std::invalid_argument("induced_subgraph: variable index out of range");
        remap[v] = static_cast<int>(vars.size());
        vars.push_back(g.name(v));
    }
    std::vector<std::pair<int, int>> directed, bidirected;
    for (auto [a, b] : g.directed_edges())
        if (remap[a] >= 0 && remap[b] >= 0) directed.emplace_back(remap[a], remap[b]);
    for (auto [a, b] : g.bidirected_edges())
        if (remap[a] >= 0 && remap[b] >= 0) bidirected.emplace_back(remap[a], remap[b]);
    return CausalDiagram::make(std::move(vars), std::move(directed), std::move(bidirected));
}

namespace {

std::vector<int> closure(const CausalDiagram& g, const std::vector<int>& of, bool up) {
    std::vector<bool> seen(g.size(), false);
    std::vector<int> stack;
    for (int v : of) {
        if (v < 0 || v >= g.size())
            throw std::invalid_argument("closure: variable index out of range");
        if (!seen[v]) {
            seen[v] = true;
            stack.push_back(v);
        }
    }
    while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        for (int w : up ? g.parents(v) : g.children(v)) {
            if (!seen[w]) {
                seen[w] = true;
                stack.push_back(w);
            }
        }
    }
    std::vector<int> out;
    for (int v = 0; v < g.size(); ++v)
        if (seen[v]) out.push_back(v);
    return out;
}

std::vector<int> to_indices(const CausalDiagram& g, const std::vector<std::string>& names) {
    std::vector<int> out;
    out.reserve(names.size());
    for (const auto& s : names) out.push_back(g.index_of(s));
    return out;
}

}  // namespace

std::vector<int> ancestors(const CausalDiagram& g, const std::vector<int>& of) {
    return closure(g, of, true);
}
std::vector<int> descendants(const CausalDiagram& g, const std::vector<int>& of) {
    return closure(g, of, false);
}
std::vector<int> ancestors(const CausalDiagram& g, const std::vector<std::string>& of) {
    return closure(g, to_indices(g, of), true);
}
std::vector<int> descendants(const CausalDiagram& g, const std::vector<std::string>& of) {
    return closure(g, to_indices(g, of), false);
}

// --- benchmark fixtures -----------------------------------------------------

const std::vector<Fixture>& benchmark_fixtures() {
    static const std::vector<Fixture> fixtures = [] {
        auto d = [](const char* text) { return parse_diagram(text); };
        std::vector<Fixture> f;
        f.push_back({"backdoor",
                     d("Z -> X\nZ -> Y\nX -> Y\n"), "X", "Y", true});
        f.push_back({"frontdoor",
                     d("X -> Z\nZ -> Y\nX <-> Y\n"), "X", "Y", true});
        f.push_back({"m",
                     d("X -> Y\nX <-> Z\nZ <-> Y\n"), "X", "Y", true});
        f.push_back({"napkin",
                     d("W -> R\nR -> X\nX -> Y\nW <-> X\nW <-> Y\n"), "X", "Y", true});
        f.push_back({"bow",
                     d("X -> Y\nX <-> Y\n"), "X", "Y", false});
        f.push_back({"extended_bow",
                     d("X -> Z\nZ -> Y\nX <-> Z\n"), "X", "Y", false});
        f.push_back({"iv",
                     d("Z -> X\nX -> Y\nX <-> Y\n"), "X", "Y", false});
        f.push_back({"bad_m",
                     d("Z -> X\nX -> Y\nX <-> Z\nZ <-> Y\n"), "X", "Y", false});
        return f;
    }();
    return fixtures;
}

const Fixture& fixture(const std::string& name) {
    for (const auto& f : benchmark_fixtures())
        if (f.name == name) return f;
    throw std::invalid_argument("unknown fixture \"" + name + "\"");
}

}  // namespace ncm
