#include "ncm/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "ncm/rng.hpp"

namespace ncm {

namespace detail {

double log_sigmoid_of(double z) {
    // Stable in both tails: log sigma(z) = min(z,0) - log1p(exp(-|z|)).
    return (z < 0.0 ? z : 0.0) - std::log1p(std::exp(-std::abs(z)));
}

std::vector<std::vector<double>> draw_block_noise(const Ncm& model, std::size_t m, Rng& rng) {
    std::vector<std::vector<double>> blocks(model.u_blocks.size());
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        blocks[b].resize(m * model.u_blocks[b].size());
        for (auto& x : blocks[b]) x = rng.uniform_open();
    }
    return blocks;
}

std::vector<double> assemble_input(const Ncm& model, int v, const std::vector<int>& parent_bits,
                                   const std::vector<std::vector<double>>& noise, std::size_t m) {
    const auto& parents = model.g.parents(v);
    const int k = static_cast<int>(parents.size());
    const int width = k + model.u_dim(v);
    std::vector<double> input(m * width);
    for (std::size_t j = 0; j < m; ++j) {
        double* row = input.data() + j * width;
        for (int c = 0; c < k; ++c) row[c] = static_cast<double>(parent_bits[c]);
        int at = k;
        for (int b : model.var_blocks[v]) {
            const std::size_t dim = model.u_blocks[b].size();
            const double* src = noise[b].data() + j * dim;
            for (std::size_t d = 0; d < dim; ++d) row[at++] = src[d];
        }
    }
    return input;
}

}  // namespace detail

namespace {

using detail::assemble_input;
using detail::draw_block_noise;
using detail::log_sigmoid_of;

std::uint64_t param_hash(const Ncm& model) {
    std::uint64_t h = fnv1a64(serialize_diagram(model.g));
    for (const auto& net : model.nets) {
        for (const auto& t : net.W) h = fnv1a64(t.data.data(), t.data.size() * sizeof(double), h);
        for (const auto& t : net.b) h = fnv1a64(t.data.data(), t.data.size() * sizeof(double), h);
    }
    return h;
}

}  // namespace

int Ncm::u_dim(int v) const {
    int total = 0;
    for (int b : var_blocks[v]) total += static_cast<int>(u_blocks[b].size());
    return total;
}

std::size_t Ncm::parameter_count() const {
    std::size_t total = 0;
    for (const auto& net : nets) total += net.parameter_count();
    return total;
}

Ncm construct_ncm(const CausalDiagram& g, const NcmArch& arch, std::uint64_t seed) {
    if (arch.hidden_width < 1 || arch.hidden_layers < 0)
        throw std::invalid_argument("construct_ncm: invalid architecture");
    Ncm model;
    model.g = g;
    model.arch = arch;
    model.seed = seed;
    model.u_blocks = c2_components(g);
    model.var_blocks.resize(g.size());
    for (std::size_t b = 0; b < model.u_blocks.size(); ++b)
        for (int v : model.u_blocks[b]) model.var_blocks[v].push_back(static_cast<int>(b));
    model.topo = topological_order(g);
    const auto hidden = arch.hidden_widths();
    Rng root(seed);
    for (int v = 0; v < g.size(); ++v) {
        const int in_dim = static_cast<int>(g.parents(v).size()) + model.u_dim(v);
        Rng stream = root.fork(static_cast<std::uint64_t>(v));
        model.nets.push_back(mlp_init(in_dim, 1, hidden, stream));
    }
    return model;
}

namespace {

// Per-sample log-Bernoulli factors for one variable under one parent
// configuration, built once and reused across the assignment enumeration.
struct QueryCache {
    const Ncm* model = nullptr;
    std::size_t m = 0;
    std::vector<std::vector<double>> noise;
    // [var][parent config] -> length-m vectors; filled lazily.
    std::vector<std::vector<char>> have;
    std::vector<std::vector<std::vector<double>>> log1;  // log sigma(z)
    std::vector<std::vector<std::vector<double>>> log0;  // log sigma(-z)

    QueryCache(const Ncm& mdl, std::size_t samples, std::uint64_t seed) : model(&mdl), m(samples) {
        Rng rng(seed);
        noise = draw_block_noise(mdl, m, rng);
        const int n = mdl.g.size();
        have.resize(n);
        log1.resize(n);
        log0.resize(n);
        for (int v = 0; v < n; ++v) {
            const std::size_t configs = std::size_t{1} << mdl.g.parents(v).size();
            have[v].assign(configs, 0);
            log1[v].resize(configs);
            log0[v].resize(configs);
        }
    }

    void ensure(int v, std::uint32_t config) {
        if (have[v][config]) return;
        const auto& parents = model->g.parents(v);
        const int k = static_cast<int>(parents.size());
        std::vector<int> bits(k);
        // Input column c carries the c-th parent; config bit c is that parent.
        for (int c = 0; c < k; ++c) bits[c] = (config >> c) & 1u;
        const auto input = assemble_input(*model, v, bits, noise, m);
        std::vector<double> z(m);
        mlp_forward_numeric(model->nets[v], input.data(), static_cast<int>(m), z.data());
        auto& l1 = log1[v][config];
        auto& l0 = log0[v][config];
        l1.resize(m);
        l0.resize(m);
        for (std::size_t j = 0; j < m; ++j) {
            l1[j] = log_sigmoid_of(z[j]);
            l0[j] = log_sigmoid_of(-z[j]);
        }
        have[v][config] = 1;
    }

    // log of the Monte-Carlo probability of complete assignment idx with the
    // mechanisms of do_mask variables removed.
    double log_prob(std::uint32_t idx, std::uint32_t do_mask) {
        std::vector<double> s(m, 0.0);
        const auto& g = model->g;
        for (int v = 0; v < g.size(); ++v) {
            if (do_mask & (1u << v)) continue;
            const auto& parents = g.parents(v);
            std::uint32_t config = 0;
            for (std::size_t c = 0; c < parents.size(); ++c)
                config |= ((idx >> parents[c]) & 1u) << c;
            ensure(v, config);
            const auto& add = ((idx >> v) & 1u) ? log1[v][config] : log0[v][config];
            for (std::size_t j = 0; j < m; ++j) s[j] += add[j];
        }
        double hi = -std::numeric_limits<double>::infinity();
        for (double x : s) hi = std::max(hi, x);
        if (!std::isfinite(hi)) return hi;
        double acc = 0.0;
        for (double x : s) acc += std::exp(x - hi);
        return hi + std::log(acc) - std::log(static_cast<double>(m));
    }
};

std::pair<std::uint32_t, std::uint32_t> encode_assignment(const CausalDiagram& g,
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

double estimate_prob(const Ncm& model, const Assignment& v, const Assignment& x,
                     std::size_t mc_samples, std::uint64_t seed) {
    if (mc_samples == 0) throw std::invalid_argument("estimate_prob: mc_samples must be positive");
    if (static_cast<int>(v.size()) != model.g.size())
        throw std::invalid_argument("estimate_prob: assignment must cover every variable");
    auto [vmask, vbits] = encode_assignment(model.g, v);
    auto [xmask, xbits] = encode_assignment(model.g, x);
    (void)vmask;
    if ((vbits & xmask) != xbits) return 0.0;
    QueryCache cache(model, mc_samples, seed);
    return std::exp(cache.log_prob(vbits, xmask));
}

double estimate_query(const Ncm& model, const Assignment& y, const Assignment& x,
                      std::size_t mc_samples, std::uint64_t seed) {
    if (mc_samples == 0) throw std::invalid_argument("estimate_query: mc_samples must be positive");
    if (model.g.size() > 24)
        throw std::invalid_argument("estimate_query: more than 24 variables");
    auto [ymask, ybits] = encode_assignment(model.g, y);
    auto [xmask, xbits] = encode_assignment(model.g, x);
    if (ymask & xmask)
        throw std::invalid_argument("estimate_query: query and intervention sets overlap");
    QueryCache cache(model, mc_samples, seed);
    const std::uint32_t slots = 1u << model.g.size();
    double total = 0.0;
    for (std::uint32_t idx = 0; idx < slots; ++idx) {
        if ((idx & ymask) != ybits) continue;
        if ((idx & xmask) != xbits) continue;  // inconsistent terms are exactly zero
        total += std::exp(cache.log_prob(idx, xmask));
    }
    return total;
}

double ate_ncm(const Ncm& model, const std::string& x, const std::string& y,
               std::size_t mc_samples, std::uint64_t seed) {
    if (mc_samples == 0) throw std::invalid_argument("ate_ncm: mc_samples must be positive");
    if (model.g.size() > 24) throw std::invalid_argument("ate_ncm: more than 24 variables");
    const int xi = model.g.index_of(x), yi = model.g.index_of(y);
    if (xi == yi) throw std::invalid_argument("ate_ncm: treatment and outcome must differ");
    // One cache serves both arms; term for term this matches two estimate_query
    // calls made with the same seed.
    QueryCache cache(model, mc_samples, seed);
    const std::uint32_t xbit = 1u << xi, ybit = 1u << yi;
    const std::uint32_t slots = 1u << model.g.size();
    double q1 = 0.0, q0 = 0.0;
    for (std::uint32_t idx = 0; idx < slots; ++idx) {
        if (!(idx & ybit)) continue;
        const double p = std::exp(cache.log_prob(idx, xbit));
        if (idx & xbit)
            q1 += p;
        else
            q0 += p;
    }
    return q1 - q0;
}

std::vector<double> estimate_all_probs(const Ncm& model, std::size_t mc_samples,
                                       std::uint64_t seed) {
    if (model.g.size() > 24)
        throw std::invalid_argument("estimate_all_probs: more than 24 variables");
    QueryCache cache(model, mc_samples, seed);
    const std::uint32_t slots = 1u << model.g.size();
    std::vector<double> probs(slots);
    for (std::uint32_t idx = 0; idx < slots; ++idx) probs[idx] = std::exp(cache.log_prob(idx, 0));
    return probs;
}

DistributionTable fitted_l1_table(const Ncm& model, std::size_t mc_samples, std::uint64_t seed) {
    auto probs = estimate_all_probs(model, mc_samples, seed);
    double total = 0.0;
    for (double p : probs) total += p;
    if (!(total > 0.0)) throw std::runtime_error("fitted_l1_table: degenerate model");
    for (auto& p : probs) p /= total;
    return DistributionTable(model.g.variables(), std::move(probs));
}

Dataset sample_ncm(const Ncm& model, std::size_t n, std::uint64_t seed,
                   const Assignment& intervention) {
    if (n == 0) throw std::invalid_argument("sample_ncm: n must be positive");
    const auto& g = model.g;
    auto [do_mask, do_bits] = encode_assignment(g, intervention);
    Rng rng(seed);
    auto noise = draw_block_noise(model, n, rng);

    std::vector<std::vector<std::uint8_t>> column(g.size(), std::vector<std::uint8_t>(n));
    std::vector<double> input, z(n);
    for (int v : model.topo) {
        if (do_mask & (1u << v)) {
            std::fill(column[v].begin(), column[v].end(),
                      static_cast<std::uint8_t>((do_bits >> v) & 1u));
            continue;
        }
        const auto& parents = g.parents(v);
        const int k = static_cast<int>(parents.size());
        const int width = k + model.u_dim(v);
        input.assign(n * width, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            double* row = input.data() + j * width;
            for (int c = 0; c < k; ++c) row[c] = static_cast<double>(column[parents[c]][j]);
            int at = k;
            for (int b : model.var_blocks[v]) {
                const std::size_t dim = model.u_blocks[b].size();
                const double* src = noise[b].data() + j * dim;
                for (std::size_t d = 0; d < dim; ++d) row[at++] = src[d];
            }
        }
        mlp_forward_numeric(model.nets[v], input.data(), static_cast<int>(n), z.data());
        for (std::size_t j = 0; j < n; ++j) {
            const double g0 = rng.gumbel();
            const double g1 = rng.gumbel();
            // argmax over {g0 + log sigma(-z), g1 + log sigma(z)}, ties to 1.
            column[v][j] = g1 + log_sigmoid_of(z[j]) >= g0 + log_sigmoid_of(-z[j]) ? 1 : 0;
        }
    }

    Dataset data;
    data.vars = g.variables();
    data.rows.resize(n * g.size());
    for (std::size_t j = 0; j < n; ++j)
        for (int v = 0; v < g.size(); ++v) data.rows[j * g.size() + v] = column[v][j];
    data.meta.seed = seed;
    data.meta.model_hash = param_hash(model);
    if (!intervention.empty())
        data.meta.intervention = {intervention.front().first, intervention.front().second};
    return data;
}

// --- checkpoints ------------------------------------------------------------

namespace {

nlohmann::json tensor_to_json(const ad::Tensor& t) {
    return nlohmann::json{{"shape", t.shape}, {"data", t.data}};
}

ad::Tensor tensor_from_json(const nlohmann::json& j) {
    ad::Tensor t;
    t.shape = j.at("shape").get<std::vector<int>>();
    t.data = j.at("data").get<std::vector<double>>();
    std::size_t expect = 1;
    for (int d : t.shape) expect *= static_cast<std::size_t>(d);
    if (t.data.size() != expect)
        throw std::runtime_error("checkpoint: tensor data does not match its shape");
    return t;
}

}  // namespace

void save_checkpoint(const Ncm& model, const std::string& path) {
    nlohmann::json j;
    j["format"] = "ncm-checkpoint";
    j["version"] = 1;
    j["graph"] = serialize_diagram(model.g);
    j["arch"] = {{"hidden_width", model.arch.hidden_width},
                 {"hidden_layers", model.arch.hidden_layers}};
    j["seed"] = model.seed;
    nlohmann::json nets = nlohmann::json::array();
    for (int v = 0; v < model.g.size(); ++v) {
        nlohmann::json entry;
        entry["variable"] = model.g.name(v);
        nlohmann::json ws = nlohmann::json::array(), bs = nlohmann::json::array();
        for (const auto& t : model.nets[v].W) ws.push_back(tensor_to_json(t));
        for (const auto& t : model.nets[v].b) bs.push_back(tensor_to_json(t));
        entry["W"] = std::move(ws);
        entry["b"] = std::move(bs);
        nets.push_back(std::move(entry));
    }
    j["nets"] = std::move(nets);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint \"" + path + "\"");
    out << j.dump();
    if (!out) throw std::runtime_error("write failed for checkpoint \"" + path + "\"");
}

Ncm load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint \"" + path + "\"");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("checkpoint \"" + path + "\" is not valid JSON: " + e.what());
    }
    if (j.value("format", "") != "ncm-checkpoint")
        throw std::runtime_error("checkpoint \"" + path + "\" has unknown format");
    NcmArch arch;
    arch.hidden_width = j.at("arch").at("hidden_width").get<int>();
    arch.hidden_layers = j.at("arch").at("hidden_layers").get<int>();
    const auto g = parse_diagram(j.at("graph").get<std::string>());
    Ncm model = construct_ncm(g, arch, j.at("seed").get<std::uint64_t>());
    const auto& nets = j.at("nets");
    if (static_cast<int>(nets.size()) != g.size())
        throw std::runtime_error("checkpoint: wrong network count");
    for (int v = 0; v < g.size(); ++v) {
        const auto& entry = nets.at(v);
        if (entry.at("variable").get<std::string>() != g.name(v))
            throw std::runtime_error("checkpoint: network order does not match the graph");
        auto& net = model.nets[v];
        const auto& ws = entry.at("W");
        const auto& bs = entry.at("b");
        if (ws.size() != net.W.size() || bs.size() != net.b.size())
            throw std::runtime_error("checkpoint: layer count does not match the architecture");
        for (std::size_t l = 0; l < net.W.size(); ++l) {
            ad::Tensor w = tensor_from_json(ws.at(l));
            ad::Tensor b = tensor_from_json(bs.at(l));
            if (w.shape != net.W[l].shape || b.shape != net.b[l].shape)
                throw std::runtime_error("checkpoint: tensor shape mismatch");
            net.W[l] = std::move(w);
            net.b[l] = std::move(b);
        }
    }
    return model;
}

}  // namespace ncm
