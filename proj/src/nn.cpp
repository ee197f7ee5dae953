#include "ncm/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace ncm {

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (const auto& w : W) n += w.size();
    for (const auto& t : b) n += t.size();
    return n;
}

Mlp mlp_init(int in_dim, int out_dim, const std::vector<int>& hidden, Rng& rng) {
    if (in_dim <= 0 || out_dim <= 0)
        throw std::invalid_argument("mlp_init: dimensions must be positive");
    for (int h : hidden)
        if (h <= 0) throw std::invalid_argument("mlp_init: hidden widths must be positive");
    Mlp net;
    net.in_dim = in_dim;
    net.out_dim = out_dim;
    net.hidden = hidden;
    std::vector<int> widths{in_dim};
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(out_dim);
    for (std::size_t layer = 0; layer + 1 < widths.size(); ++layer) {
        const int fan_in = widths[layer], fan_out = widths[layer + 1];
        ad::Tensor w = ad::Tensor::zeros({fan_in, fan_out});
        const double sd = std::sqrt(2.0 / fan_in);
        for (auto& x : w.data) x = sd * rng.normal();
        net.W.push_back(std::move(w));
        net.b.push_back(ad::Tensor::zeros({fan_out}));
    }
    return net;
}

MlpNodes mlp_register(ad::Tape& tape, const Mlp& net) {
    MlpNodes nodes;
    for (const auto& w : net.W) nodes.W.push_back(tape.leaf(w));
    for (const auto& t : net.b) nodes.b.push_back(tape.leaf(t));
    return nodes;
}

ad::NodeId mlp_forward(ad::Tape& tape, const MlpNodes& nodes, ad::NodeId x) {
    ad::NodeId h = x;
    for (std::size_t layer = 0; layer < nodes.W.size(); ++layer) {
        h = tape.add(tape.matmul(h, nodes.W[layer]), nodes.b[layer]);
        if (layer + 1 < nodes.W.size()) h = tape.relu(h);
    }
    return h;
}

void mlp_forward_numeric(const Mlp& net, const double* x, int batch, double* out) {
    std::vector<double> cur(x, x + static_cast<std::size_t>(batch) * net.in_dim);
    std::vector<double> next;
    int width = net.in_dim;
    for (std::size_t layer = 0; layer < net.W.size(); ++layer) {
        const int fan_out = net.W[layer].shape[1];
        next.assign(static_cast<std::size_t>(batch) * fan_out, 0.0);
        ad::mm_nn(cur.data(), net.W[layer].data.data(), next.data(), batch, width, fan_out);
        const auto& bias = net.b[layer].data;
        const bool last = layer + 1 == net.W.size();
        for (int i = 0; i < batch; ++i) {
            double* row = next.data() + static_cast<std::size_t>(i) * fan_out;
            for (int j = 0; j < fan_out; ++j) {
                row[j] += bias[j];
                if (!last && row[j] < 0.0) row[j] = 0.0;
            }
        }
        cur.swap(next);
        width = fan_out;
    }
    for (std::size_t i = 0; i < cur.size(); ++i) out[i] = cur[i];
}

void adamw_step(std::vector<ad::Tensor*> params, std::vector<const ad::Tensor*> grads,
                AdamWState& state, const AdamWConfig& cfg, double lr_now) {
    if (params.size() != grads.size())
        throw std::invalid_argument("adamw_step: parameter/gradient count mismatch");
    if (state.m.empty()) {
        for (const auto* p : params) {
            state.m.push_back(ad::Tensor::zeros(p->shape));
            state.v.push_back(ad::Tensor::zeros(p->shape));
        }
    }
    if (state.m.size() != params.size())
        throw std::invalid_argument("adamw_step: state does not match parameter group");
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (params[k]->shape != state.m[k].shape || grads[k]->shape != params[k]->shape)
            throw std::invalid_argument("adamw_step: shape mismatch");
        for (double gx : grads[k]->data)
            if (!std::isfinite(gx)) {
                ++state.skipped;
                return;
            }
    }
    ++state.steps;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.steps));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.steps));
    const double decay = 1.0 - lr_now * cfg.weight_decay;
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = params[k]->data;
        const auto& g = grads[k]->data;
        auto& m = state.m[k].data;
        auto& v = state.v[k].data;
        for (std::size_t i = 0; i < p.size(); ++i) {
            p[i] *= decay;
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= lr_now * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

double CosineRestarts::lr() const {
    const double frac = static_cast<double>(t) / static_cast<double>(T);
    return base / 2.0 * (1.0 + std::cos(3.14159265358979323846 * frac));
}

void CosineRestarts::advance() {
    ++t;
    if (t > T) {
        t = 0;
        T *= mult;
    }
}

}  // namespace ncm
