#include "ncm/train.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "ncm/rng.hpp"

namespace ncm {

namespace {

constexpr double kLogFloor = 1e-12;

std::uint64_t derive(std::uint64_t base, const char* tag, std::uint64_t index = 0) {
    std::uint64_t h = fnv1a64(&base, sizeof(base));
    h = fnv1a64(tag, std::strlen(tag), h);
    return fnv1a64(&index, sizeof(index), h);
}

void check_data_matches(const Dataset& data, const CausalDiagram& g, const char* where) {
    if (data.n() == 0) throw std::invalid_argument(std::string(where) + ": dataset is empty");
    if (data.vars != g.variables())
        throw std::invalid_argument(std::string(where) +
                                    ": dataset variables must match the graph exactly");
}

void check_config(const TrainConfig& cfg, const char* where) {
    if (cfg.epochs < 1) throw std::invalid_argument(std::string(where) + ": epochs must be >= 1");
    if (cfg.mc_samples == 0)
        throw std::invalid_argument(std::string(where) + ": mc_samples must be >= 1");
    if (!(cfg.lambda_end > 0.0) || !(cfg.lambda_end <= cfg.lambda_start))
        throw std::invalid_argument(std::string(where) +
                                    ": need 0 < lambda_end <= lambda_start");
    if (cfg.log_every < 1)
        throw std::invalid_argument(std::string(where) + ": log_every must be >= 1");
    if (cfg.patience < 1)
        throw std::invalid_argument(std::string(where) + ": patience must be >= 1");
}

// Per-epoch computation graph: one registered parameter set, one shared noise
// draw, and per-(variable, parent-config) log-factor nodes built on demand and
// reused by every likelihood and query term.
struct EpochBuilder {
    ad::Tape& t;
    const Ncm& model;
    std::size_t m;
    std::vector<MlpNodes> nets;
    std::vector<std::vector<double>> noise;
    std::vector<std::vector<ad::NodeId>> a1, a0;  // [var][config], -1 until built

    EpochBuilder(ad::Tape& tape, const Ncm& mdl, std::size_t mc_samples,
                 std::uint64_t noise_seed)
        : t(tape), model(mdl), m(mc_samples) {
        for (int v = 0; v < model.g.size(); ++v) nets.push_back(mlp_register(t, model.nets[v]));
        Rng rng(noise_seed);
        noise = detail::draw_block_noise(model, m, rng);
        const int n = model.g.size();
        a1.resize(n);
        a0.resize(n);
        for (int v = 0; v < n; ++v) {
            const std::size_t configs = std::size_t{1} << model.g.parents(v).size();
            a1[v].assign(configs, -1);
            a0[v].assign(configs, -1);
        }
    }

    void ensure(int v, std::uint32_t config) {
        if (a1[v][config] >= 0) return;
        const auto& parents = model.g.parents(v);
        const int k = static_cast<int>(parents.size());
        std::vector<int> bits(k);
        for (int c = 0; c < k; ++c) bits[c] = (config >> c) & 1u;
        auto input = detail::assemble_input(model, v, bits, noise, m);
        ad::Tensor x;
        x.shape = {static_cast<int>(m), k + model.u_dim(v)};
        x.data = std::move(input);
        ad::NodeId z = mlp_forward(t, nets[v], t.constant(std::move(x)));  // [m, 1]
        a1[v][config] = t.reshape(t.log_sigmoid(z), {static_cast<int>(m)});
        a0[v][config] = t.reshape(t.log_sigmoid(t.neg(z)), {static_cast<int>(m)});
    }

    // log of the Monte-Carlo probability of complete assignment idx with the
    // mechanisms of do_mask variables removed.
    ad::NodeId log_prob(std::uint32_t idx, std::uint32_t do_mask) {
        ad::NodeId acc = -1;
        for (int v = 0; v < model.g.size(); ++v) {
            if (do_mask & (1u << v)) continue;
            const auto& parents = model.g.parents(v);
            std::uint32_t config = 0;
            for (std::size_t c = 0; c < parents.size(); ++c)
                config |= ((idx >> parents[c]) & 1u) << c;
            ensure(v, config);
            const ad::NodeId node = ((idx >> v) & 1u) ? a1[v][config] : a0[v][config];
            acc = acc < 0 ? node : t.add(acc, node);
        }
        if (acc < 0) return t.constant(ad::Tensor::scalar(0.0));  // empty product
        return t.add_const(t.log_sum_exp(acc, 0), -std::log(static_cast<double>(m)));
    }

    // Sum of exp(log_prob) over complete assignments matching (mask, bits),
    // with do_mask mechanisms removed; ascending assignment order.
    ad::NodeId prob_sum(std::uint32_t mask, std::uint32_t bits, std::uint32_t do_mask) {
        ad::NodeId acc = -1;
        const std::uint32_t slots = 1u << model.g.size();
        for (std::uint32_t idx = 0; idx < slots; ++idx) {
            if ((idx & mask) != bits) continue;
            ad::NodeId p = t.exp(log_prob(idx, do_mask));
            acc = acc < 0 ? p : t.add(acc, p);
        }
        if (acc < 0) throw std::logic_error("prob_sum: empty enumeration");
        return acc;
    }

    ad::NodeId nll_node(const Dataset& data) {
        const auto counts = data.counts();
        const double n = static_cast<double>(data.n());
        ad::NodeId acc = -1;
        for (std::uint32_t idx = 0; idx < counts.size(); ++idx) {
            if (counts[idx] == 0) continue;
            ad::NodeId term = t.scale(log_prob(idx, 0), -static_cast<double>(counts[idx]) / n);
            acc = acc < 0 ? term : t.add(acc, term);
        }
        return acc;  // data nonempty, so acc >= 0
    }

    // max(x, floor) built as relu(x - floor) + floor, keeping gradients exact
    // away from the floor.
    ad::NodeId floored(ad::NodeId x) {
        return t.add_const(t.relu(t.add_const(x, -kLogFloor)), kLogFloor);
    }
};

TapedLoss build_loss(ad::Tape& tape, const Ncm& model, const Dataset& data, const Query* query,
                     double lambda, Direction direction, std::size_t mc_samples,
                     std::uint64_t noise_seed) {
    check_data_matches(data, model.g, "loss");
    if (model.g.size() > 24) throw std::invalid_argument("loss: more than 24 variables");
    if (mc_samples == 0) throw std::invalid_argument("loss: mc_samples must be >= 1");
    EpochBuilder eb(tape, model, mc_samples, noise_seed);
    TapedLoss out;
    out.nll = eb.nll_node(data);
    if (query == nullptr) {
        out.loss = out.nll;
    } else {
        if (query->treatment == query->outcome)
            throw std::invalid_argument("loss: treatment and outcome must differ");
        if ((query->treatment_value | 1) != 1 || (query->outcome_value | 1) != 1)
            throw std::invalid_argument("loss: query values must be 0 or 1");
        if (!(lambda >= 0.0)) throw std::invalid_argument("loss: lambda must be >= 0");
        const int xi = model.g.index_of(query->treatment);
        const int yi = model.g.index_of(query->outcome);
        const std::uint32_t xbit = 1u << xi, ybit = 1u << yi;
        const std::uint32_t want = (query->treatment_value ? xbit : 0u) |
                                   (query->outcome_value ? ybit : 0u);
        out.query = eb.prob_sum(xbit | ybit, want, xbit);
        ad::NodeId barrier_arg =
            direction == Direction::maximize
                ? out.query
                : tape.add_const(tape.neg(out.query), 1.0);  // 1 - q-hat
        out.loss = tape.add(out.nll, tape.scale(tape.log(eb.floored(barrier_arg)), -lambda));
    }
    out.nets = std::move(eb.nets);
    return out;
}

// Parameter/gradient views in a fixed order (variable, then layer weights,
// then layer biases); zero tensors stand in for untouched gradients.
void optimizer_step(Ncm& model, ad::Tape& tape, const std::vector<MlpNodes>& nets,
                    AdamWState& state, const AdamWConfig& opt, double lr_now) {
    std::vector<ad::Tensor*> params;
    std::vector<const ad::Tensor*> grads;
    std::size_t total = 0;
    for (const auto& net : model.nets) total += net.W.size() + net.b.size();
    std::vector<ad::Tensor> zeros;
    zeros.reserve(total);
    auto push = [&](ad::Tensor& param, ad::NodeId id) {
        params.push_back(&param);
        const ad::Tensor& g = tape.grad(id);
        if (g.data.empty()) {
            zeros.push_back(ad::Tensor::zeros(param.shape));
            grads.push_back(&zeros.back());
        } else {
            grads.push_back(&g);
        }
    };
    for (int v = 0; v < model.g.size(); ++v) {
        for (std::size_t l = 0; l < model.nets[v].W.size(); ++l)
            push(model.nets[v].W[l], nets[v].W[l]);
        for (std::size_t l = 0; l < model.nets[v].b.size(); ++l)
            push(model.nets[v].b[l], nets[v].b[l]);
    }
    adamw_step(std::move(params), std::move(grads), state, opt, lr_now);
}

}  // namespace

std::uint64_t epoch_noise_seed(std::uint64_t base_seed, int epoch) {
    return derive(base_seed, "epoch-noise", static_cast<std::uint64_t>(epoch));
}

std::uint64_t epoch_eval_seed(std::uint64_t base_seed, int epoch) {
    return derive(base_seed, "trace-eval", static_cast<std::uint64_t>(epoch));
}

double lambda_schedule(int epoch, int total, double lambda_start, double lambda_end) {
    if (total < 1) throw std::invalid_argument("lambda_schedule: total must be >= 1");
    if (epoch < 0 || epoch >= total)
        throw std::invalid_argument("lambda_schedule: epoch out of range");
    if (!(lambda_end > 0.0) || !(lambda_end <= lambda_start))
        throw std::invalid_argument("lambda_schedule: need 0 < lambda_end <= lambda_start");
    if (total == 1) return lambda_start;
    const double frac = static_cast<double>(epoch) / static_cast<double>(total - 1);
    return lambda_start * std::pow(lambda_end / lambda_start, frac);
}

TapedLoss nll_loss(ad::Tape& tape, const Ncm& model, const Dataset& data,
                   std::size_t mc_samples, std::uint64_t noise_seed) {
    return build_loss(tape, model, data, nullptr, 0.0, Direction::minimize, mc_samples,
                      noise_seed);
}

TapedLoss id_loss(ad::Tape& tape, const Ncm& model, const Dataset& data, const Query& query,
                  double lambda, Direction direction, std::size_t mc_samples,
                  std::uint64_t noise_seed) {
    return build_loss(tape, model, data, &query, lambda, direction, mc_samples, noise_seed);
}

void write_trace_csv(const GapTrace& trace, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write trace \"" + path + "\"");
    out << "epoch,ate_min,ate_max,gap,nll_min,nll_max\n";
    out << std::setprecision(17);
    for (const auto& r : trace)
        out << r.epoch << ',' << r.ate_min << ',' << r.ate_max << ',' << r.gap << ','
            << r.nll_min << ',' << r.nll_max << '\n';
    if (!out) throw std::runtime_error("write failed for trace \"" + path + "\"");
}

MinMaxResult train_minmax(const Dataset& data, const CausalDiagram& g, const Query& query,
                          const TrainConfig& cfg) {
    check_config(cfg, "train_minmax");
    check_data_matches(data, g, "train_minmax");
    g.index_of(query.treatment);
    g.index_of(query.outcome);
    if (query.treatment == query.outcome)
        throw std::invalid_argument("train_minmax: treatment and outcome must differ");

    MinMaxResult result;
    result.min_model = construct_ncm(g, cfg.arch, derive(cfg.seed, "minmax-min"));
    result.max_model = construct_ncm(g, cfg.arch, derive(cfg.seed, "minmax-max"));
    Ncm* models[2] = {&result.min_model, &result.max_model};
    const Direction dirs[2] = {Direction::minimize, Direction::maximize};
    AdamWState states[2];
    CosineRestarts scheds[2];
    for (auto& s : scheds) {
        s.base = cfg.optimizer.lr;
        s.T = cfg.restart_period;
        s.mult = cfg.restart_mult;
    }

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double lambda =
            lambda_schedule(epoch - 1, cfg.epochs, cfg.lambda_start, cfg.lambda_end);
        const std::uint64_t noise_seed = epoch_noise_seed(cfg.seed, epoch);
        double nll_value[2] = {0.0, 0.0};
        for (int side = 0; side < 2; ++side) {
            ad::Tape tape;
            TapedLoss loss = id_loss(tape, *models[side], data, query, lambda, dirs[side],
                                     cfg.mc_samples, noise_seed);
            const double value = tape.value(loss.loss).item();
            if (!std::isfinite(value))
                throw std::runtime_error(
                    "train_minmax: non-finite loss at epoch " + std::to_string(epoch) +
                    " (" + (side == 0 ? "min" : "max") + " side, lambda " +
                    std::to_string(lambda) + ")");
            nll_value[side] = tape.value(loss.nll).item();
            tape.backward(loss.loss);
            optimizer_step(*models[side], tape, loss.nets, states[side], cfg.optimizer,
                           scheds[side].lr());
            scheds[side].advance();
        }
        if (epoch % cfg.log_every == 0 || epoch == cfg.epochs) {
            const std::uint64_t eval_seed = epoch_eval_seed(cfg.seed, epoch);
            GapRecord rec;
            rec.epoch = epoch;
            rec.ate_min =
                ate_ncm(result.min_model, query.treatment, query.outcome, cfg.mc_samples,
                        eval_seed);
            rec.ate_max =
                ate_ncm(result.max_model, query.treatment, query.outcome, cfg.mc_samples,
                        eval_seed);
            rec.gap = rec.ate_max - rec.ate_min;
            rec.nll_min = nll_value[0];
            rec.nll_max = nll_value[1];
            result.trace.push_back(rec);
        }
    }
    result.final_gap = result.trace.back().gap;
    return result;
}

Ncm train_nll(const Dataset& data, const CausalDiagram& g, const TrainConfig& cfg,
              NllTrainInfo* info) {
    check_config(cfg, "train_nll");
    check_data_matches(data, g, "train_nll");
    Ncm model = construct_ncm(g, cfg.arch, derive(cfg.seed, "nll-init"));
    AdamWState state;
    CosineRestarts sched;
    sched.base = cfg.optimizer.lr;
    sched.T = cfg.restart_period;
    sched.mult = cfg.restart_mult;

    std::vector<Mlp> best_nets = model.nets;
    double best = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    int wait = 0;
    if (info != nullptr) *info = NllTrainInfo{};

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        ad::Tape tape;
        TapedLoss loss =
            nll_loss(tape, model, data, cfg.mc_samples, epoch_noise_seed(cfg.seed, epoch));
        const double value = tape.value(loss.loss).item();
        if (!std::isfinite(value))
            throw std::runtime_error("train_nll: non-finite loss at epoch " +
                                     std::to_string(epoch));
        if (info != nullptr) info->losses.push_back(value);
        if (value < best - cfg.min_delta) {
            best = value;
            best_epoch = epoch;
            best_nets = model.nets;  // pre-update parameters achieved this loss
            wait = 0;
        } else if (++wait >= cfg.patience) {
            break;
        }
        tape.backward(loss.loss);
        optimizer_step(model, tape, loss.nets, state, cfg.optimizer, sched.lr());
        sched.advance();
    }
    model.nets = std::move(best_nets);
    if (info != nullptr) {
        info->best_epoch = best_epoch;
        info->best_loss = best;
    }
    return model;
}

Ncm train_naive(const Dataset& data, const TrainConfig& cfg) {
    if (data.n() == 0) throw std::invalid_argument("train_naive: dataset is empty");
    const int n = data.arity();
    std::vector<std::pair<int, int>> directed;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) directed.emplace_back(i, j);
    const auto g = CausalDiagram::make(data.vars, std::move(directed), {});
    return train_nll(data, g, cfg);
}

}  // namespace ncm
