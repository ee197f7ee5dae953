#pragma once

#include <vector>

#include "ncm/autodiff.hpp"
#include "ncm/rng.hpp"

namespace ncm {

// Fully connected net: ReLU hidden layers, linear output.
struct Mlp {
    int in_dim = 0, out_dim = 0;
    std::vector<int> hidden;       // widths, e.g. {32, 32, 32, 32}
    std::vector<ad::Tensor> W;     // per layer [in, out]
    std::vector<ad::Tensor> b;     // per layer [out]

    std::size_t parameter_count() const;
};

// He (fan-in) normal initialization for weights, zero biases. Deterministic
// for a given generator state. in_dim must be positive.
Mlp mlp_init(int in_dim, int out_dim, const std::vector<int>& hidden, Rng& rng);

// Parameter nodes registered on a tape for one training step.
struct MlpNodes {
    std::vector<ad::NodeId> W, b;
};
MlpNodes mlp_register(ad::Tape& tape, const Mlp& net);

// x: [batch, in_dim] node. Returns [batch, out_dim] logits node.
ad::NodeId mlp_forward(ad::Tape& tape, const MlpNodes& nodes, ad::NodeId x);

// Untaped forward pass; writes [batch, out_dim] into out. Matches the taped
// forward bit for bit (same kernels, same order).
void mlp_forward_numeric(const Mlp& net, const double* x, int batch, double* out);

// --- optimizer --------------------------------------------------------------

// Decoupled weight decay: parameters are first multiplied by
// (1 - lr_now * weight_decay), then the bias-corrected Adam step is applied.
struct AdamWConfig {
    double lr = 1e-3;        // base rate; the schedule multiplies on top
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-2;
};

struct AdamWState {
    std::vector<ad::Tensor> m, v;  // one pair per parameter tensor
    long steps = 0;
    long skipped = 0;              // steps rejected because a gradient was not finite
};

// One update over a parameter group. If any gradient element is NaN/Inf the
// whole step is skipped (parameters and moments untouched) and
// state.skipped is incremented. Shapes must line up with the first call.
void adamw_step(std::vector<ad::Tensor*> params, std::vector<const ad::Tensor*> grads,
                AdamWState& state, const AdamWConfig& cfg, double lr_now);

// --- learning-rate schedule -------------------------------------------------

// Cosine annealing with warm restarts:
//   lr(t) = base/2 * (1 + cos(pi * t / T)),
// so lr(0) = base, lr(T/2) = base/2, lr(T) = 0. advance() walks t through
// 0..T; after t reaches T the next advance restarts at t = 0 with T *= mult.
struct CosineRestarts {
    double base = 1e-3;
    int t = 0;
    int T = 100;
    int mult = 2;

    double lr() const;
    void advance();
};

}  // namespace ncm
