#include "ncm/estimand.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>

namespace ncm {

namespace {

// --- constructors -----------------------------------------------------------

Estimand make_joint(std::vector<std::string> vars) {
    Estimand e;
    e.kind = Estimand::Kind::joint;
    e.vars = std::move(vars);
    return e;
}

Estimand make_fail() { return Estimand{}; }

Estimand make_sum(std::vector<std::string> over, Estimand body) {
    if (over.empty()) return body;
    Estimand e;
    e.kind = Estimand::Kind::sum;
    e.sum_vars = std::move(over);
    e.children.push_back(std::move(body));
    return e;
}

Estimand make_product(std::vector<Estimand> factors) {
    if (factors.size() == 1) return std::move(factors.front());
    Estimand e;
    e.kind = Estimand::Kind::product;
    e.children = std::move(factors);
    return e;
}

Estimand make_fraction(Estimand num, Estimand den) {
    Estimand e;
    e.kind = Estimand::Kind::fraction;
    e.children.push_back(std::move(num));
    e.children.push_back(std::move(den));
    return e;
}

// --- marginal / conditional pattern detection (printing and diagnostics) ----

// An expression is a "marginal pattern" when it is the original joint with
// some variables summed out; `kept` is what remains.
std::optional<std::vector<std::string>> marginal_kept(const Estimand& e) {
    if (e.kind == Estimand::Kind::joint) return e.vars;
    if (e.kind == Estimand::Kind::sum) {
        auto inner = marginal_kept(e.children.front());
        if (!inner) return std::nullopt;
        std::vector<std::string> kept;
        for (const auto& v : *inner)
            if (std::find(e.sum_vars.begin(), e.sum_vars.end(), v) == e.sum_vars.end())
                kept.push_back(v);
        if (inner->size() - kept.size() != e.sum_vars.size()) return std::nullopt;
        return kept;
    }
    return std::nullopt;
}

std::string join(const std::vector<std::string>& parts) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += ", ";
        out += parts[i];
    }
    return out;
}

bool subset_of(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    for (const auto& x : a)
        if (std::find(b.begin(), b.end(), x) == b.end()) return false;
    return true;
}

// --- printing ---------------------------------------------------------------

std::string print(const Estimand& e, bool parenthesize);

std::string print_fraction(const Estimand& e, bool parenthesize) {
    const auto num_kept = marginal_kept(e.children[0]);
    const auto den_kept = marginal_kept(e.children[1]);
    if (num_kept && den_kept && subset_of(*den_kept, *num_kept)) {
        std::vector<std::string> target;
        for (const auto& v : *num_kept)
            if (std::find(den_kept->begin(), den_kept->end(), v) == den_kept->end())
                target.push_back(v);
        if (den_kept->empty()) return "P(" + join(target) + ")";
        return "P(" + join(target) + " | " + join(*den_kept) + ")";
    }
    std::string out = print(e.children[0], true) + " / " + print(e.children[1], true);
    return parenthesize ? "(" + out + ")" : out;
}

std::string print(const Estimand& e, bool parenthesize) {
    switch (e.kind) {
        case Estimand::Kind::fail:
            return "FAIL";
        case Estimand::Kind::joint:
            return "P(" + join(e.vars) + ")";
        case Estimand::Kind::sum: {
            if (auto kept = marginal_kept(e)) return "P(" + join(*kept) + ")";
            std::string out = "Σ_{" + join(e.sum_vars) + "} " + print(e.children[0], true);
            return parenthesize ? "(" + out + ")" : out;
        }
        case Estimand::Kind::product: {
            std::string out;
            for (std::size_t i = 0; i < e.children.size(); ++i) {
                if (i) out += " · ";
                out += print(e.children[i], true);
            }
            return out;
        }
        case Estimand::Kind::fraction:
            return print_fraction(e, parenthesize);
    }
    return "?";
}

// --- evaluation -------------------------------------------------------------

using Env = std::map<std::string, int>;

int lookup(const Env& env, const std::string& var) {
    auto it = env.find(var);
    if (it == env.end())
        throw std::invalid_argument("estimand evaluation: variable \"" + var + "\" is unbound");
    return it->second;
}

std::string describe_event(const Estimand& e, const DistributionTable& table, const Env& env) {
    if (auto kept = marginal_kept(e)) {
        std::vector<std::string> parts;
        for (const auto& v : *kept) parts.push_back(v + "=" + std::to_string(lookup(env, v)));
        return "P(" + join(parts) + ")";
    }
    (void)table;
    return print(e, false);
}

double eval(const Estimand& e, const DistributionTable& table, Env& env) {
    switch (e.kind) {
        case Estimand::Kind::fail:
            throw std::logic_error("cannot evaluate a non-identifiable estimand");
        case Estimand::Kind::joint: {
            std::uint32_t index = 0;
            for (const auto& v : e.vars)
                if (lookup(env, v)) index |= 1u << table.index_of(v);
            return table.prob(index);
        }
        case Estimand::Kind::product: {
            double out = 1.0;
            for (const auto& child : e.children) out *= eval(child, table, env);
            return out;
        }
        case Estimand::Kind::fraction: {
            const double den = eval(e.children[1], table, env);
            if (!(den > 0.0))
                throw std::domain_error("estimand evaluation: conditioning event " +
                                        describe_event(e.children[1], table, env) +
                                        " has zero probability");
            return eval(e.children[0], table, env) / den;
        }
        case Estimand::Kind::sum: {
            const std::size_t k = e.sum_vars.size();
            std::vector<std::optional<int>> saved(k);
            for (std::size_t i = 0; i < k; ++i) {
                auto it = env.find(e.sum_vars[i]);
                if (it != env.end()) saved[i] = it->second;  // shadowed binding
            }
            double total = 0.0;
            for (std::uint32_t bits = 0; bits < (1u << k); ++bits) {
                for (std::size_t i = 0; i < k; ++i)
                    env[e.sum_vars[i]] = static_cast<int>((bits >> i) & 1u);
                total += eval(e.children[0], table, env);
            }
            for (std::size_t i = 0; i < k; ++i) {
                if (saved[i])
                    env[e.sum_vars[i]] = *saved[i];
                else
                    env.erase(e.sum_vars[i]);
            }
            return total;
        }
    }
    throw std::logic_error("corrupt estimand node");
}

void collect_free(const Estimand& e, std::set<std::string>& bound, std::set<std::string>& free) {
    switch (e.kind) {
        case Estimand::Kind::fail:
            return;
        case Estimand::Kind::joint:
            for (const auto& v : e.vars)
                if (!bound.count(v)) free.insert(v);
            return;
        case Estimand::Kind::sum: {
            std::vector<std::string> added;
            for (const auto& v : e.sum_vars)
                if (bound.insert(v).second) added.push_back(v);
            collect_free(e.children[0], bound, free);
            for (const auto& v : added) bound.erase(v);
            return;
        }
        default:
            for (const auto& child : e.children) collect_free(child, bound, free);
            return;
    }
}

// --- the identification recursion -------------------------------------------

// All sets are bitmasks over the original diagram's variable indices.
struct IdContext {
    const CausalDiagram& g;
    std::vector<int> pi;  // one topological order, fixed for the whole derivation

    std::vector<std::string> names_of(std::uint32_t mask) const {
        std::vector<std::string> out;
        for (int v : pi)
            if (mask & (1u << v)) out.push_back(g.name(v));
        return out;
    }

    // Inclusive ancestors of `targets` within `scope`, using only directed
    // edges whose endpoints both lie in scope and that survive `cut`: edges
    // into cut-variables are removed (as are bidirected ones, irrelevant
    // here).
    std::uint32_t ancestors_in(std::uint32_t scope, std::uint32_t targets,
                               std::uint32_t cut = 0) const {
        std::uint32_t reach = targets & scope;
        bool grew = true;
        while (grew) {
            grew = false;
            for (auto [a, b] : g.directed_edges()) {
                const std::uint32_t abit = 1u << a, bbit = 1u << b;
                if (!(scope & abit) || !(scope & bbit)) continue;
                if (cut & bbit) continue;  // edge into an intervened variable
                if ((reach & bbit) && !(reach & abit)) {
                    reach |= abit;
                    grew = true;
                }
            }
        }
        return reach;
    }

    // Confounded components of the induced subgraph on `scope`, each a mask;
    // ordered by smallest member.
    std::vector<std::uint32_t> components_in(std::uint32_t scope) const {
        std::vector<std::uint32_t> out;
        std::uint32_t seen = 0;
        for (int v = 0; v < g.size(); ++v) {
            const std::uint32_t vbit = 1u << v;
            if (!(scope & vbit) || (seen & vbit)) continue;
            std::uint32_t comp = vbit;
            bool grew = true;
            while (grew) {
                grew = false;
                for (auto [a, b] : g.bidirected_edges()) {
                    const std::uint32_t abit = 1u << a, bbit = 1u << b;
                    if (!(scope & abit) || !(scope & bbit)) continue;
                    if ((comp & abit) && !(comp & bbit)) comp |= bbit, grew = true;
                    if ((comp & bbit) && !(comp & abit)) comp |= abit, grew = true;
                }
            }
            out.push_back(comp);
            seen |= comp;
        }
        return out;
    }

    // P(target | pi-predecessors of target within scope), as a ratio of
    // marginals of `p` (an expression over exactly the scope variables).
    Estimand cond_factor(const Estimand& p, std::uint32_t scope, int target) const {
        std::uint32_t pred = 0;
        for (int v : pi) {
            if (v == target) break;
            if (scope & (1u << v)) pred |= 1u << v;
        }
        const std::uint32_t tbit = 1u << target;
        Estimand num = make_sum(names_of(scope & ~(pred | tbit)), p);
        Estimand den = make_sum(names_of(scope & ~pred), p);
        return make_fraction(std::move(num), std::move(den));
    }

    Estimand run(std::uint32_t y, std::uint32_t x, const Estimand& p,
                 std::uint32_t scope) const {
        // 1: no intervention left — marginalize.
        if (x == 0) return make_sum(names_of(scope & ~y), p);

        // 2: restrict to the ancestors of y.
        const std::uint32_t anc = ancestors_in(scope, y);
        if (anc != scope)
            return run(y, x & anc, make_sum(names_of(scope & ~anc), p), anc);

        // 3: absorb variables that rule 3 lets us intervene on for free.
        const std::uint32_t anc_mut = ancestors_in(scope, y, x);
        const std::uint32_t w = (scope & ~x) & ~anc_mut;
        if (w != 0) return run(y, x | w, p, scope);

        // 4: factorize across the confounded components of scope minus x.
        const auto comps = components_in(scope & ~x);
        if (comps.size() > 1) {
            std::vector<Estimand> factors;
            for (std::uint32_t comp : comps) {
                Estimand sub = run(comp, scope & ~comp, p, scope);
                if (sub.failed()) return make_fail();
                factors.push_back(std::move(sub));
            }
            return make_sum(names_of(scope & ~(y | x)), make_product(std::move(factors)));
        }

        // 5: a single component s remains.
        const std::uint32_t s = comps.front();
        const auto full = components_in(scope);
        if (full.size() == 1) return make_fail();  // scope is one confounded tangle
        for (std::uint32_t sprime : full) {
            if (sprime == s) {
                // 5b: s is itself a component of scope — chain-rule factors.
                std::vector<Estimand> factors;
                for (int v : pi)
                    if (s & (1u << v)) factors.push_back(cond_factor(p, scope, v));
                return make_sum(names_of(s & ~y), make_product(std::move(factors)));
            }
            if ((s & sprime) == s) {
                // 5c: s sits strictly inside a larger component — recurse on it.
                std::vector<Estimand> factors;
                for (int v : pi)
                    if (sprime & (1u << v)) factors.push_back(cond_factor(p, scope, v));
                return run(y, x & sprime, make_product(std::move(factors)), sprime);
            }
        }
        throw std::logic_error("identification: component not covered");
    }
};

std::uint32_t mask_of(const CausalDiagram& g, const std::vector<std::string>& names,
                      const char* what) {
    std::uint32_t mask = 0;
    for (const auto& name : names) {
        const std::uint32_t bit = 1u << g.index_of(name);
        if (mask & bit)
            throw std::invalid_argument(std::string(what) + " lists \"" + name + "\" twice");
        mask |= bit;
    }
    return mask;
}

}  // namespace

std::string to_string(const Estimand& e) { return print(e, false); }

double evaluate_estimand(const Estimand& e, const DistributionTable& table,
                         const Assignment& env) {
    Env scope;
    for (const auto& [name, value] : env) {
        if (value != 0 && value != 1)
            throw std::invalid_argument("estimand environment: value for \"" + name +
                                        "\" must be 0 or 1");
        if (!scope.emplace(name, value).second)
            throw std::invalid_argument("estimand environment: \"" + name + "\" bound twice");
    }
    return eval(e, table, scope);
}

std::vector<std::string> free_variables(const Estimand& e) {
    std::set<std::string> bound, free;
    collect_free(e, bound, free);
    return {free.begin(), free.end()};
}

double evaluate_query(const Estimand& e, const DistributionTable& table, const Assignment& x,
                      const Assignment& y) {
    Assignment env = y;
    env.insert(env.end(), x.begin(), x.end());
    std::set<std::string> given;
    for (const auto& [name, value] : env) {
        (void)value;
        given.insert(name);
    }
    for (const auto& name : free_variables(e))
        if (!given.count(name)) env.emplace_back(name, 0);
    return evaluate_estimand(e, table, env);
}

Estimand symbolic_id(const CausalDiagram& g, const std::vector<std::string>& x,
                     const std::vector<std::string>& y) {
    if (g.size() > 24) throw std::invalid_argument("symbolic_id: more than 24 variables");
    const std::uint32_t xm = mask_of(g, x, "intervention set");
    const std::uint32_t ym = mask_of(g, y, "outcome set");
    if (ym == 0) throw std::invalid_argument("symbolic_id: outcome set is empty");
    if (xm & ym)
        throw std::invalid_argument("symbolic_id: intervention and outcome sets overlap");
    IdContext ctx{g, topological_order(g)};
    const std::uint32_t scope = g.size() == 32 ? ~0u : (1u << g.size()) - 1u;
    return ctx.run(ym, xm, make_joint(g.variables()), scope);
}

Estimand markovian_adjustment(const CausalDiagram& g, const std::string& x,
                              const std::string& y) {
    if (!g.bidirected_edges().empty())
        throw std::invalid_argument("markovian_adjustment: diagram has latent confounding");
    const int xi = g.index_of(x), yi = g.index_of(y);
    if (xi == yi) throw std::invalid_argument("markovian_adjustment: x and y must differ");
    const auto desc = descendants(g, std::vector<int>{xi});
    std::vector<std::string> z;
    for (int v = 0; v < g.size(); ++v) {
        if (v == xi || v == yi) continue;
        if (std::find(desc.begin(), desc.end(), v) != desc.end()) continue;
        z.push_back(g.name(v));
    }
    Estimand joint = make_joint(g.variables());
    // P(y | x, z): marginals over {x,y} ∪ z and {x} ∪ z.
    std::vector<std::string> num_kept = z, den_kept = z;
    num_kept.push_back(x);
    num_kept.push_back(y);
    den_kept.push_back(x);
    auto marginal_to = [&](const std::vector<std::string>& kept) {
        std::vector<std::string> drop;
        for (const auto& name : g.variables())
            if (std::find(kept.begin(), kept.end(), name) == kept.end()) drop.push_back(name);
        return make_sum(std::move(drop), joint);
    };
    Estimand cond = make_fraction(marginal_to(num_kept), marginal_to(den_kept));
    Estimand pz = marginal_to(z);
    return make_sum(z, make_product({std::move(cond), std::move(pz)}));
}

}  // namespace ncm
