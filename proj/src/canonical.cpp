#include "ncm/canonical.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>

#include "ncm/autodiff.hpp"
#include "ncm/rng.hpp"

namespace ncm {

std::uint64_t selector_cardinality(int k) {
    if (k < 0) throw std::invalid_argument("selector_cardinality: negative parent count");
    if (k > 4)
        throw std::invalid_argument(
            "selector_cardinality: more than 4 parents exceeds the enumeration guard");
    return std::uint64_t{1} << (std::uint64_t{1} << k);
}

std::uint32_t lex_index(const std::vector<int>& parent_bits) {
    std::uint32_t pos = 0;
    for (int bit : parent_bits) {
        if (bit != 0 && bit != 1) throw std::invalid_argument("lex_index: bits must be 0 or 1");
        pos = (pos << 1) | static_cast<std::uint32_t>(bit);
    }
    return pos;
}

int canonical_output(std::uint64_t r, const std::vector<int>& parent_bits) {
    const std::uint64_t m = selector_cardinality(static_cast<int>(parent_bits.size()));
    if (r >= m)
        throw std::invalid_argument("canonical_output: selector " + std::to_string(r) +
                                    " out of range for " + std::to_string(parent_bits.size()) +
                                    " parents");
    return static_cast<int>((r >> lex_index(parent_bits)) & 1u);
}

bool CanonicalScm::factored() const {
    for (const auto& c : comps)
        for (const auto& row : c.cond)
            if (row.empty()) return false;
    return true;
}

// --- construction -----------------------------------------------------------

namespace {

constexpr int kMaxLatentStates = 16;
constexpr std::uint64_t kJointGuard = std::uint64_t{1} << 24;

std::vector<int> member_positions(const std::vector<int>& members, int n) {
    std::vector<int> pos(n, -1);
    for (std::size_t i = 0; i < members.size(); ++i) pos[members[i]] = static_cast<int>(i);
    return pos;
}

// Skeleton: members, edges, incident lists, selector cardinalities. cond and
// joint left for the caller.
std::vector<CanonicalScm::Component> component_skeletons(const CausalDiagram& g) {
    std::vector<CanonicalScm::Component> comps;
    for (const auto& members : c_components(g)) {
        CanonicalScm::Component c;
        c.members = members;
        const auto pos = member_positions(members, g.size());
        for (auto [a, b] : g.bidirected_edges()) {
            if (pos[a] >= 0 && pos[b] >= 0) {
                CanonicalScm::EdgeLatent e;
                e.a = a;
                e.b = b;
                c.edges.push_back(std::move(e));
            }
        }
        c.incident.resize(members.size());
        for (std::size_t ei = 0; ei < c.edges.size(); ++ei) {
            c.incident[pos[c.edges[ei].a]].push_back(static_cast<int>(ei));
            c.incident[pos[c.edges[ei].b]].push_back(static_cast<int>(ei));
        }
        std::uint64_t joint_size = 1;
        for (int v : members) {
            const auto m = selector_cardinality(static_cast<int>(g.parents(v).size()));
            c.m.push_back(m);
            joint_size *= m;
            if (joint_size > kJointGuard)
                throw std::invalid_argument(
                    "canonical model: joint selector space exceeds the 2^24 guard");
        }
        c.cond.resize(members.size());
        comps.push_back(std::move(c));
    }
    return comps;
}

std::uint64_t latent_states(const CanonicalScm::Component& c, int edge_pos) {
    const auto& e = c.edges[edge_pos];
    auto card_of = [&](int var) {
        for (std::size_t i = 0; i < c.members.size(); ++i)
            if (c.members[i] == var) return c.m[i];
        throw std::logic_error("edge endpoint outside component");
    };
    const std::uint64_t k = std::min(card_of(e.a), card_of(e.b));
    return std::min<std::uint64_t>(k, kMaxLatentStates);
}

std::uint64_t cond_rows(const CanonicalScm::Component& c, std::size_t member_pos) {
    std::uint64_t rows = 1;
    for (int ei : c.incident[member_pos]) rows *= latent_states(c, ei);
    return rows;
}

// Mixed-radix row index of a latent combo for one member (first incident edge
// most significant).
std::uint64_t row_of_combo(const CanonicalScm::Component& c, std::size_t member_pos,
                           const std::vector<std::uint64_t>& combo) {
    std::uint64_t row = 0;
    for (int ei : c.incident[member_pos]) row = row * latent_states(c, ei) + combo[ei];
    return row;
}

void materialize_joint(CanonicalScm::Component& c) {
    std::uint64_t joint_size = 1;
    for (auto m : c.m) joint_size *= m;
    c.joint.assign(joint_size, 0.0);
    // Odometer over edge latents.
    std::vector<std::uint64_t> combo(c.edges.size(), 0);
    while (true) {
        double w = 1.0;
        for (std::size_t ei = 0; ei < c.edges.size(); ++ei) w *= c.edges[ei].p[combo[ei]];
        // Per-member conditional row under this combo.
        std::vector<const double*> row(c.members.size());
        for (std::size_t i = 0; i < c.members.size(); ++i)
            row[i] = c.cond[i].data() + row_of_combo(c, i, combo) * c.m[i];
        for (std::uint64_t r = 0; r < joint_size; ++r) {
            double val = w;
            std::uint64_t rest = r;
            for (std::size_t i = c.members.size(); i-- > 0;) {
                val *= row[i][rest % c.m[i]];
                rest /= c.m[i];
            }
            c.joint[r] += val;
        }
        // Advance odometer.
        std::size_t ei = c.edges.size();
        while (ei > 0) {
            --ei;
            if (++combo[ei] < latent_states(c, static_cast<int>(ei))) break;
            combo[ei] = 0;
            if (ei == 0) return;
        }
        if (c.edges.empty()) return;
    }
}

void dirichlet_fill(std::vector<double>& out, std::size_t count, Rng& rng) {
    out.resize(count);
    double total = 0.0;
    for (auto& x : out) {
        x = rng.exponential();
        total += x;
    }
    for (auto& x : out) x /= total;
}

}  // namespace

CanonicalScm build_canonical(const CausalDiagram& g, std::uint64_t seed) {
    CanonicalScm scm;
    scm.g = g;
    scm.seed = seed;
    scm.comps = component_skeletons(g);
    scm.comp_of.assign(g.size(), -1);
    for (std::size_t ci = 0; ci < scm.comps.size(); ++ci)
        for (int v : scm.comps[ci].members) scm.comp_of[v] = static_cast<int>(ci);
    Rng rng(seed);
    for (auto& c : scm.comps) {
        for (std::size_t ei = 0; ei < c.edges.size(); ++ei)
            dirichlet_fill(c.edges[ei].p, latent_states(c, static_cast<int>(ei)), rng);
        for (std::size_t i = 0; i < c.members.size(); ++i) {
            const std::uint64_t rows = cond_rows(c, i);
            c.cond[i].clear();
            c.cond[i].reserve(rows * c.m[i]);
            for (std::uint64_t row = 0; row < rows; ++row) {
                std::vector<double> one;
                dirichlet_fill(one, c.m[i], rng);
                c.cond[i].insert(c.cond[i].end(), one.begin(), one.end());
            }
        }
        materialize_joint(c);
    }
    return scm;
}

CanonicalScm make_canonical_from_joints(const CausalDiagram& g,
                                        std::vector<std::vector<double>> joints) {
    CanonicalScm scm;
    scm.g = g;
    scm.comps = component_skeletons(g);
    scm.comp_of.assign(g.size(), -1);
    for (std::size_t ci = 0; ci < scm.comps.size(); ++ci)
        for (int v : scm.comps[ci].members) scm.comp_of[v] = static_cast<int>(ci);
    if (joints.size() != scm.comps.size())
        throw std::invalid_argument("make_canonical_from_joints: expected " +
                                    std::to_string(scm.comps.size()) + " joint tables");
    for (std::size_t ci = 0; ci < scm.comps.size(); ++ci) {
        auto& c = scm.comps[ci];
        std::uint64_t joint_size = 1;
        for (auto m : c.m) joint_size *= m;
        if (joints[ci].size() != joint_size)
            throw std::invalid_argument("make_canonical_from_joints: table " +
                                        std::to_string(ci) + " must have " +
                                        std::to_string(joint_size) + " entries");
        double total = 0.0;
        for (double x : joints[ci]) {
            if (!(x >= 0.0))
                throw std::invalid_argument("make_canonical_from_joints: negative entry");
            total += x;
        }
        if (std::abs(total - 1.0) > 1e-12)
            throw std::invalid_argument("make_canonical_from_joints: table " +
                                        std::to_string(ci) + " sums to " + std::to_string(total));
        c.joint = std::move(joints[ci]);
        for (auto& row : c.cond) row.clear();
    }
    return scm;
}

std::uint64_t model_hash(const CanonicalScm& scm) {
    std::uint64_t h = fnv1a64(serialize_diagram(scm.g));
    for (const auto& c : scm.comps)
        h = fnv1a64(c.joint.data(), c.joint.size() * sizeof(double), h);
    return h;
}

// --- valuation --------------------------------------------------------------

namespace {

// Parent values of variable v under full assignment idx.
std::vector<int> parent_bits_of(const CausalDiagram& g, int v, std::uint32_t idx) {
    std::vector<int> bits;
    bits.reserve(g.parents(v).size());
    for (int p : g.parents(v)) bits.push_back((idx >> p) & 1u);
    return bits;
}

// consistent[member][r] flags mechanisms that produce the assignment's value.
std::vector<std::vector<char>> consistency_masks(const CausalDiagram& g,
                                                 const CanonicalScm::Component& c,
                                                 std::uint32_t idx) {
    std::vector<std::vector<char>> out(c.members.size());
    for (std::size_t i = 0; i < c.members.size(); ++i) {
        const int v = c.members[i];
        const auto pa = parent_bits_of(g, v, idx);
        const int want = (idx >> v) & 1u;
        out[i].resize(c.m[i]);
        for (std::uint64_t r = 0; r < c.m[i]; ++r)
            out[i][r] = canonical_output(r, pa) == want ? 1 : 0;
    }
    return out;
}

double component_mass(const CanonicalScm::Component& c,
                      const std::vector<std::vector<char>>& consistent,
                      std::uint32_t skip_members) {
    double total = 0.0;
    for (std::uint64_t r = 0; r < c.joint.size(); ++r) {
        const double w = c.joint[r];
        if (w == 0.0) continue;
        std::uint64_t rest = r;
        bool ok = true;
        for (std::size_t i = c.members.size(); i-- > 0;) {
            const std::uint64_t ri = rest % c.m[i];
            rest /= c.m[i];
            if (skip_members & (1u << i)) continue;
            if (!consistent[i][ri]) {
                ok = false;
                break;
            }
        }
        if (ok) total += w;
    }
    return total;
}

std::pair<std::uint32_t, std::uint32_t> encode_on_graph(const CausalDiagram& g,
                                                        const Assignment& a) {
    std::uint32_t mask = 0, bits = 0;
    for (const auto& [name, value] : a) {
        if (value != 0 && value != 1)
            throw std::invalid_argument("assignment value for \"" + name + "\" must be 0 or 1");
        const int i = g.index_of(name);
        if (mask & (1u << i))
            throw std::invalid_argument("variable \"" + name + "\" assigned twice");
        mask |= 1u << i;
        if (value) bits |= 1u << i;
    }
    return {mask, bits};
}

}  // namespace

DistributionTable valuate_l2(const CanonicalScm& scm, const Assignment& x) {
    const auto& g = scm.g;
    if (g.size() > 24) throw std::invalid_argument("valuate: more than 24 variables");
    auto [xmask, xbits] = encode_on_graph(g, x);
    std::vector<double> probs(std::size_t{1} << g.size(), 0.0);
    for (std::uint32_t idx = 0; idx < probs.size(); ++idx) {
        if ((idx & xmask) != xbits) continue;
        double p = 1.0;
        for (const auto& c : scm.comps) {
            std::uint32_t skip = 0;
            for (std::size_t i = 0; i < c.members.size(); ++i)
                if (xmask & (1u << c.members[i])) skip |= 1u << i;
            const auto consistent = consistency_masks(g, c, idx);
            p *= component_mass(c, consistent, skip);
            if (p == 0.0) break;
        }
        probs[idx] = p;
    }
    return DistributionTable(g.variables(), std::move(probs));
}

DistributionTable valuate_l1(const CanonicalScm& scm) { return valuate_l2(scm, {}); }

double valuate_l3(const CanonicalScm& scm, const std::vector<CfClause>& clauses) {
    const auto& g = scm.g;
    std::uint64_t total_states = 1;
    for (const auto& c : scm.comps) {
        total_states *= c.joint.size();
        if (total_states > kJointGuard)
            throw std::invalid_argument("valuate_l3: joint selector space exceeds the 2^24 guard");
    }
    struct PreparedClause {
        std::uint32_t do_mask = 0, do_bits = 0, ev_mask = 0, ev_bits = 0;
    };
    std::vector<PreparedClause> prepared;
    for (const auto& clause : clauses) {
        PreparedClause p;
        std::tie(p.do_mask, p.do_bits) = encode_on_graph(g, clause.intervention);
        std::tie(p.ev_mask, p.ev_bits) = encode_on_graph(g, clause.event);
        prepared.push_back(p);
    }
    const auto topo = topological_order(g);

    std::vector<std::uint64_t> state(scm.comps.size(), 0);
    std::vector<std::uint64_t> selector(g.size(), 0);
    double total = 0.0;
    while (true) {
        double mass = 1.0;
        for (std::size_t ci = 0; ci < scm.comps.size(); ++ci)
            mass *= scm.comps[ci].joint[state[ci]];
        if (mass > 0.0) {
            for (std::size_t ci = 0; ci < scm.comps.size(); ++ci) {
                const auto& c = scm.comps[ci];
                std::uint64_t rest = state[ci];
                for (std::size_t i = c.members.size(); i-- > 0;) {
                    selector[c.members[i]] = rest % c.m[i];
                    rest /= c.m[i];
                }
            }
            bool all_hold = true;
            for (const auto& p : prepared) {
                std::uint32_t world = 0;
                for (int v : topo) {
                    int value;
                    if (p.do_mask & (1u << v)) {
                        value = (p.do_bits >> v) & 1u;
                    } else {
                        value = canonical_output(selector[v], parent_bits_of(g, v, world));
                    }
                    if (value) world |= 1u << v;
                }
                if ((world & p.ev_mask) != p.ev_bits) {
                    all_hold = false;
                    break;
                }
            }
            if (all_hold) total += mass;
        }
        std::size_t ci = scm.comps.size();
        bool advanced = false;
        while (ci > 0) {
            --ci;
            if (++state[ci] < scm.comps[ci].joint.size()) {
                advanced = true;
                break;
            }
            state[ci] = 0;
        }
        if (!advanced) break;
    }
    return total;
}

double ate(const CanonicalScm& scm, const std::string& x, const std::string& y) {
    const auto do1 = valuate_l2(scm, {{x, 1}});
    const auto do0 = valuate_l2(scm, {{x, 0}});
    return do1.marginal({{y, 1}}) - do0.marginal({{y, 1}});
}

double tv(const CanonicalScm& scm, const std::string& x, const std::string& y) {
    return tv_of_table(valuate_l1(scm), x, y);
}

Dataset sample(const CanonicalScm& scm, std::size_t n, std::uint64_t seed,
               const Assignment& intervention) {
    if (n == 0) throw std::invalid_argument("sample: n must be positive");
    const auto& g = scm.g;
    auto [do_mask, do_bits] = encode_on_graph(g, intervention);
    const auto topo = topological_order(g);
    Rng rng(seed);
    Dataset data;
    data.vars = g.variables();
    data.rows.reserve(n * g.size());
    data.meta.seed = seed;
    data.meta.model_hash = model_hash(scm);
    if (!intervention.empty())
        data.meta.intervention = {intervention.front().first, intervention.front().second};

    // Per-component CDFs for inverse-transform draws.
    std::vector<std::vector<double>> cdf(scm.comps.size());
    for (std::size_t ci = 0; ci < scm.comps.size(); ++ci) {
        double acc = 0.0;
        cdf[ci].reserve(scm.comps[ci].joint.size());
        for (double w : scm.comps[ci].joint) {
            acc += w;
            cdf[ci].push_back(acc);
        }
    }

    std::vector<std::uint64_t> selector(g.size(), 0);
    for (std::size_t row = 0; row < n; ++row) {
        for (std::size_t ci = 0; ci < scm.comps.size(); ++ci) {
            const auto& c = scm.comps[ci];
            const double u = rng.uniform() * cdf[ci].back();
            const auto it = std::upper_bound(cdf[ci].begin(), cdf[ci].end(), u);
            std::uint64_t r = static_cast<std::uint64_t>(it - cdf[ci].begin());
            if (r >= c.joint.size()) r = c.joint.size() - 1;
            for (std::size_t i = c.members.size(); i-- > 0;) {
                selector[c.members[i]] = r % c.m[i];
                r /= c.m[i];
            }
        }
        std::uint32_t world = 0;
        for (int v : topo) {
            int value;
            if (do_mask & (1u << v)) {
                value = (do_bits >> v) & 1u;
            } else {
                value = canonical_output(selector[v], parent_bits_of(g, v, world));
            }
            if (value) world |= 1u << v;
        }
        for (int v = 0; v < g.size(); ++v)
            data.rows.push_back(static_cast<std::uint8_t>((world >> v) & 1u));
    }
    return data;
}

// --- gap widening -----------------------------------------------------------

namespace {

// Differentiable re-derivation of ate - tv from factored noise logits.
struct WidenGraph {
    ad::Tape tape;
    // Leaves in a fixed order: per component, edge logit vectors then cond rows.
    std::vector<ad::NodeId> leaves;
    ad::NodeId gap = -1;  // scalar ate - tv
};

ad::NodeId softmax_node(ad::Tape& t, ad::NodeId logits, int len) {
    ad::NodeId as_col = t.reshape(logits, {len, 1});
    ad::NodeId shifted = t.add(as_col, t.neg(t.log_sum_exp(logits, 0)));
    return t.reshape(t.exp(shifted), {len});
}

struct FactoredLogits {
    // [comp][edge] -> logits; [comp][member][row] -> logits
    std::vector<std::vector<ad::Tensor>> edge;
    std::vector<std::vector<std::vector<ad::Tensor>>> cond;
};

FactoredLogits logits_of(const CanonicalScm& scm) {
    FactoredLogits f;
    auto safe_log = [](double p) { return std::log(std::max(p, 1e-300)); };
    for (const auto& c : scm.comps) {
        std::vector<ad::Tensor> ev;
        for (const auto& e : c.edges) {
            ad::Tensor t = ad::Tensor::zeros({static_cast<int>(e.p.size())});
            for (std::size_t i = 0; i < e.p.size(); ++i) t.data[i] = safe_log(e.p[i]);
            ev.push_back(std::move(t));
        }
        f.edge.push_back(std::move(ev));
        std::vector<std::vector<ad::Tensor>> cv;
        for (std::size_t i = 0; i < c.members.size(); ++i) {
            const std::uint64_t rows = c.cond[i].size() / c.m[i];
            std::vector<ad::Tensor> rowsv;
            for (std::uint64_t row = 0; row < rows; ++row) {
                ad::Tensor t = ad::Tensor::zeros({static_cast<int>(c.m[i])});
                for (std::uint64_t r = 0; r < c.m[i]; ++r)
                    t.data[r] = safe_log(c.cond[i][row * c.m[i] + r]);
                rowsv.push_back(std::move(t));
            }
            cv.push_back(std::move(rowsv));
        }
        f.cond.push_back(std::move(cv));
    }
    return f;
}

void write_back(CanonicalScm& scm, const FactoredLogits& f) {
    auto softmax_numeric = [](const ad::Tensor& t) {
        double hi = t.data[0];
        for (double x : t.data) hi = std::max(hi, x);
        std::vector<double> out(t.data.size());
        double total = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = std::exp(t.data[i] - hi);
            total += out[i];
        }
        for (auto& x : out) x /= total;
        return out;
    };
    for (std::size_t ci = 0; ci < scm.comps.size(); ++ci) {
        auto& c = scm.comps[ci];
        for (std::size_t ei = 0; ei < c.edges.size(); ++ei)
            c.edges[ei].p = softmax_numeric(f.edge[ci][ei]);
        for (std::size_t i = 0; i < c.members.size(); ++i) {
            const auto& rowsv = f.cond[ci][i];
            c.cond[i].clear();
            for (const auto& row : rowsv) {
                auto p = softmax_numeric(row);
                c.cond[i].insert(c.cond[i].end(), p.begin(), p.end());
            }
        }
        materialize_joint(c);
    }
}

}  // namespace

int widen_ate_tv_gap(CanonicalScm& scm, const std::string& x, const std::string& y,
                     double threshold, double learning_rate, int max_steps) {
    if (!scm.factored())
        throw std::logic_error("widen_ate_tv_gap: model lacks factored noise parameters");
    const auto& g = scm.g;
    const int xi = g.index_of(x), yi = g.index_of(y);
    if (g.size() > 16) throw std::invalid_argument("widen_ate_tv_gap: diagram too large");

    FactoredLogits logits = logits_of(scm);

    for (int step = 0; step <= max_steps; ++step) {
        ad::Tape t;
        // Register leaves and build softmax probability nodes.
        std::vector<std::vector<ad::NodeId>> edge_leaf(scm.comps.size());
        std::vector<std::vector<std::vector<ad::NodeId>>> cond_leaf(scm.comps.size());
        std::vector<std::vector<ad::NodeId>> edge_prob(scm.comps.size());
        std::vector<std::vector<std::vector<ad::NodeId>>> cond_prob(scm.comps.size());
        for (std::size_t ci = 0; ci < scm.comps.size(); ++ci) {
            for (const auto& tensor : logits.edge[ci]) {
                ad::NodeId l = t.leaf(tensor);
                edge_leaf[ci].push_back(l);
                edge_prob[ci].push_back(softmax_node(t, l, tensor.shape[0]));
            }
            cond_leaf[ci].resize(logits.cond[ci].size());
            cond_prob[ci].resize(logits.cond[ci].size());
            for (std::size_t i = 0; i < logits.cond[ci].size(); ++i) {
                for (const auto& tensor : logits.cond[ci][i]) {
                    ad::NodeId l = t.leaf(tensor);
                    cond_leaf[ci][i].push_back(l);
                    cond_prob[ci][i].push_back(softmax_node(t, l, tensor.shape[0]));
                }
            }
        }

        // Scalar P(v) / P(v | do(x)) nodes built from the factored form.
        auto prob_node = [&](std::uint32_t idx, std::uint32_t skip_vars) -> ad::NodeId {
            ad::NodeId product = -1;
            for (std::size_t ci = 0; ci < scm.comps.size(); ++ci) {
                const auto& c = scm.comps[ci];
                const auto consistent = consistency_masks(g, c, idx);
                // Sum over latent combos of w_l * prod_i dot(cond_row, mask).
                ad::NodeId comp_sum = -1;
                std::vector<std::uint64_t> combo(c.edges.size(), 0);
                while (true) {
                    ad::NodeId term = -1;
                    for (std::size_t ei = 0; ei < c.edges.size(); ++ei) {
                        ad::Tensor onehot =
                            ad::Tensor::zeros({static_cast<int>(c.edges[ei].p.size())});
                        onehot.data[combo[ei]] = 1.0;
                        ad::NodeId w = t.reduce_sum(t.mul(edge_prob[ci][ei],
                                                          t.constant(std::move(onehot))));
                        term = term < 0 ? w : t.mul(term, w);
                    }
                    for (std::size_t i = 0; i < c.members.size(); ++i) {
                        if (skip_vars & (1u << c.members[i])) continue;
                        ad::Tensor mask = ad::Tensor::zeros({static_cast<int>(c.m[i])});
                        for (std::uint64_t r = 0; r < c.m[i]; ++r)
                            mask.data[r] = consistent[i][r] ? 1.0 : 0.0;
                        const std::uint64_t row = row_of_combo(c, i, combo);
                        ad::NodeId dot = t.reduce_sum(
                            t.mul(cond_prob[ci][i][row], t.constant(std::move(mask))));
                        term = term < 0 ? dot : t.mul(term, dot);
                    }
                    if (term < 0) term = t.constant(ad::Tensor::scalar(1.0));
                    comp_sum = comp_sum < 0 ? term : t.add(comp_sum, term);
                    std::size_t ei = c.edges.size();
                    bool advanced = false;
                    while (ei > 0) {
                        --ei;
                        if (++combo[ei] < c.edges[ei].p.size()) {
                            advanced = true;
                            break;
                        }
                        combo[ei] = 0;
                    }
                    if (!advanced) break;
                }
                product = product < 0 ? comp_sum : t.mul(product, comp_sum);
            }
            return product;
        };

        const std::uint32_t slots = 1u << g.size();
        auto sum_where = [&](std::uint32_t mask, std::uint32_t bits,
                             std::uint32_t skip_vars) -> ad::NodeId {
            ad::NodeId acc = -1;
            for (std::uint32_t idx = 0; idx < slots; ++idx) {
                if ((idx & mask) != bits) continue;
                ad::NodeId p = prob_node(idx, skip_vars);
                acc = acc < 0 ? p : t.add(acc, p);
            }
            return acc;
        };

        const std::uint32_t xbit = 1u << xi, ybit = 1u << yi;
        // ATE: sums over the mutilated model with X clamped.
        ad::NodeId p_do1 = sum_where(xbit | ybit, xbit | ybit, xbit);
        ad::NodeId p_do0 = sum_where(xbit | ybit, ybit, xbit);
        ad::NodeId ate_node = t.add(p_do1, t.neg(p_do0));
        // TV: conditionals from the observational law via exp(log num - log den).
        auto ratio = [&](ad::NodeId num, ad::NodeId den) {
            return t.exp(t.add(t.log(num), t.neg(t.log(den))));
        };
        ad::NodeId tv1 = ratio(sum_where(xbit | ybit, xbit | ybit, 0), sum_where(xbit, xbit, 0));
        ad::NodeId tv0 = ratio(sum_where(xbit | ybit, ybit, 0), sum_where(xbit, 0, 0));
        ad::NodeId tv_node = t.add(tv1, t.neg(tv0));
        ad::NodeId gap = t.add(ate_node, t.neg(tv_node));

        const double gap_value = t.value(gap).item();
        if (std::abs(gap_value) >= threshold) {
            write_back(scm, logits);
            return step;
        }
        if (step == max_steps) break;

        t.backward(gap);
        const double direction = gap_value >= 0.0 ? 1.0 : -1.0;
        auto ascend = [&](ad::Tensor& tensor, ad::NodeId leaf) {
            const auto& grad = t.grad(leaf);
            if (grad.data.empty()) return;
            for (std::size_t i = 0; i < tensor.data.size(); ++i)
                tensor.data[i] += learning_rate * direction * grad.data[i];
        };
        for (std::size_t ci = 0; ci < scm.comps.size(); ++ci) {
            for (std::size_t ei = 0; ei < logits.edge[ci].size(); ++ei)
                ascend(logits.edge[ci][ei], edge_leaf[ci][ei]);
            for (std::size_t i = 0; i < logits.cond[ci].size(); ++i)
                for (std::size_t row = 0; row < logits.cond[ci][i].size(); ++row)
                    ascend(logits.cond[ci][i][row], cond_leaf[ci][i][row]);
        }
    }
    write_back(scm, logits);
    throw WidenError("widen_ate_tv_gap: gap below " + std::to_string(threshold) + " after " +
                     std::to_string(max_steps) + " steps");
}

// --- high-dimensional expansion ---------------------------------------------

namespace {

std::string expanded_name(const std::string& base, int i) {
    return base + "__" + std::to_string(i);
}

}  // namespace

Dataset expand_high_dim(const Dataset& data, const std::string& treatment,
                        const std::string& outcome, int k, std::uint64_t seed) {
    if (k < 1) throw std::invalid_argument("expand_high_dim: k must be positive");
    if (treatment == outcome)
        throw std::invalid_argument("expand_high_dim: treatment and outcome must differ");
    auto has = [&](const std::string& name) {
        return std::find(data.vars.begin(), data.vars.end(), name) != data.vars.end();
    };
    if (!has(treatment)) throw std::invalid_argument("unknown variable \"" + treatment + "\"");
    if (!has(outcome)) throw std::invalid_argument("unknown variable \"" + outcome + "\"");

    Dataset out;
    out.meta = data.meta;
    out.meta.exact_table.reset();  // the joint changes shape; scalar facts survive
    std::vector<bool> expand(data.vars.size());
    for (std::size_t i = 0; i < data.vars.size(); ++i) {
        expand[i] = data.vars[i] != treatment && data.vars[i] != outcome;
        if (expand[i]) {
            for (int j = 0; j < k; ++j) {
                const std::string name = expanded_name(data.vars[i], j);
                if (has(name))
                    throw std::invalid_argument("expand_high_dim: name collision on \"" + name +
                                                "\"");
                out.vars.push_back(name);
            }
        } else {
            out.vars.push_back(data.vars[i]);
        }
    }

    Rng rng(seed);
    out.rows.reserve(data.n() * out.vars.size());
    std::vector<std::uint8_t> coins(k);
    for (std::size_t r = 0; r < data.n(); ++r) {
        for (std::size_t i = 0; i < data.vars.size(); ++i) {
            const std::uint8_t value = data.at(r, static_cast<int>(i));
            if (!expand[i]) {
                out.rows.push_back(value);
                continue;
            }
            std::uint8_t parity = 0;
            for (int j = 1; j < k; ++j) {
                coins[j] = static_cast<std::uint8_t>(rng.u64() & 1u);
                parity ^= coins[j];
            }
            coins[0] = static_cast<std::uint8_t>(value ^ parity);
            for (int j = 0; j < k; ++j) out.rows.push_back(coins[j]);
        }
    }
    return out;
}

Dataset decode_high_dim(const Dataset& data) {
    struct Group {
        std::string base;
        std::vector<int> columns;  // by suffix position
    };
    std::vector<Group> order;  // output columns in first-appearance order
    auto parse_expanded = [](const std::string& name, std::string& base, int& suffix) {
        const auto pos = name.rfind("__");
        if (pos == std::string::npos || pos + 2 >= name.size()) return false;
        for (std::size_t i = pos + 2; i < name.size(); ++i)
            if (!std::isdigit(static_cast<unsigned char>(name[i]))) return false;
        base = name.substr(0, pos);
        suffix = std::stoi(name.substr(pos + 2));
        return true;
    };
    for (std::size_t i = 0; i < data.vars.size(); ++i) {
        std::string base;
        int suffix = 0;
        if (!parse_expanded(data.vars[i], base, suffix)) {
            order.push_back({data.vars[i], {static_cast<int>(i)}});
            continue;
        }
        auto it = std::find_if(order.begin(), order.end(),
                               [&](const Group& g) { return g.base == base; });
        if (it == order.end()) {
            order.push_back({base, {}});
            it = std::prev(order.end());
        }
        if (suffix >= static_cast<int>(it->columns.size())) it->columns.resize(suffix + 1, -1);
        it->columns[suffix] = static_cast<int>(i);
    }
    for (const auto& group : order)
        for (int c : group.columns)
            if (c < 0)
                throw std::invalid_argument("decode_high_dim: incomplete group \"" + group.base +
                                            "\"");

    Dataset out;
    out.meta = data.meta;
    out.meta.exact_table.reset();
    for (const auto& group : order) out.vars.push_back(group.base);
    out.rows.reserve(data.n() * order.size());
    for (std::size_t r = 0; r < data.n(); ++r) {
        for (const auto& group : order) {
            std::uint8_t value = 0;
            for (int c : group.columns) value ^= data.at(r, c);
            out.rows.push_back(value);
        }
    }
    return out;
}

CausalDiagram expand_high_dim_graph(const CausalDiagram& g, const std::string& treatment,
                                    const std::string& outcome, int k) {
    if (k < 1) throw std::invalid_argument("expand_high_dim_graph: k must be positive");
    const int ti = g.index_of(treatment), oi = g.index_of(outcome);
    if (ti == oi) throw std::invalid_argument("treatment and outcome must differ");
    std::vector<std::vector<std::string>> replacements(g.size());
    std::vector<std::string> vars;
    for (int v = 0; v < g.size(); ++v) {
        if (v == ti || v == oi) {
            replacements[v] = {g.name(v)};
        } else {
            for (int j = 0; j < k; ++j) replacements[v].push_back(expanded_name(g.name(v), j));
        }
        for (const auto& name : replacements[v]) vars.push_back(name);
    }
    std::vector<int> start(g.size(), 0);
    int acc = 0;
    for (int v = 0; v < g.size(); ++v) {
        start[v] = acc;
        acc += static_cast<int>(replacements[v].size());
    }
    std::vector<std::pair<int, int>> directed, bidirected;
    for (auto [a, b] : g.directed_edges())
        for (std::size_t i = 0; i < replacements[a].size(); ++i)
            for (std::size_t j = 0; j < replacements[b].size(); ++j)
                directed.emplace_back(start[a] + static_cast<int>(i),
                                      start[b] + static_cast<int>(j));
    for (auto [a, b] : g.bidirected_edges())
        for (std::size_t i = 0; i < replacements[a].size(); ++i)
            for (std::size_t j = 0; j < replacements[b].size(); ++j)
                bidirected.emplace_back(start[a] + static_cast<int>(i),
                                        start[b] + static_cast<int>(j));
    return CausalDiagram::make(std::move(vars), std::move(directed), std::move(bidirected));
}

}  // namespace ncm
