#include "ncm/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ncm/canonical.hpp"
#include "ncm/dataset.hpp"
#include "ncm/identify.hpp"
#include "ncm/metrics.hpp"
#include "ncm/model.hpp"
#include "ncm/rng.hpp"

namespace ncm {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t derive(std::uint64_t base, const std::string& tag, std::uint64_t index = 0) {
    std::uint64_t h = fnv1a64(&base, sizeof(base));
    h = fnv1a64(tag, h);
    return fnv1a64(&index, sizeof(index), h);
}

std::string hex64(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// Fills treatment/outcome from the fixture when the caller left them empty.
void resolve_query_vars(const ResolvedGraph& rg, std::string& treatment, std::string& outcome,
                        const char* who) {
    if (treatment.empty() && rg.fixture) treatment = rg.fixture->treatment;
    if (outcome.empty() && rg.fixture) outcome = rg.fixture->outcome;
    if (treatment.empty() || outcome.empty())
        throw std::invalid_argument(std::string(who) +
                                    ": treatment and outcome are required for a non-fixture graph");
    rg.graph.index_of(treatment);  // throws on unknown names
    rg.graph.index_of(outcome);
    if (treatment == outcome)
        throw std::invalid_argument(std::string(who) + ": treatment and outcome must differ");
}

std::string query_string(const std::string& treatment, const std::string& outcome) {
    return "P(" + outcome + "=1 | do(" + treatment + "=1))";
}

void ensure_dir(const std::string& dir) {
    if (!dir.empty()) fs::create_directories(dir);
}

}  // namespace

TrainConfig desk_train_config() {
    TrainConfig cfg;
    cfg.epochs = 500;
    cfg.mc_samples = 5000;
    return cfg;
}

ResolvedGraph resolve_graph(const std::string& name_or_path) {
    if (name_or_path.empty()) throw std::invalid_argument("resolve_graph: empty graph argument");
    for (const auto& f : benchmark_fixtures()) {
        if (f.name == name_or_path) {
            return {f.graph, f, serialize_diagram(f.graph)};
        }
    }
    std::ifstream in(name_or_path);
    if (!in)
        throw std::invalid_argument("resolve_graph: '" + name_or_path +
                                    "' is neither a fixture name nor a readable file");
    std::ostringstream buf;
    buf << in.rdbuf();
    CausalDiagram g = parse_diagram(buf.str());
    return {g, std::nullopt, serialize_diagram(g)};
}

GenDataResult cmd_gen_data(const GenDataArgs& args) {
    if (args.n == 0) throw std::invalid_argument("cmd_gen_data: n must be positive");
    ResolvedGraph rg = resolve_graph(args.graph);
    std::string treatment = args.treatment, outcome = args.outcome;
    const bool needs_query = args.widen.has_value() || args.high_dim.has_value() || rg.fixture ||
                             !treatment.empty() || !outcome.empty();
    if (needs_query) resolve_query_vars(rg, treatment, outcome, "cmd_gen_data");

    GeneratedScm gen = make_benchmark_scm(rg.graph, treatment, outcome, args.widen,
                                          derive(args.seed, "scm-base"));
    Dataset data = sample(gen.scm, args.n, derive(args.seed, "data"));
    data.meta.widened = gen.widened;
    if (!treatment.empty()) {
        data.meta.exact_ate = ate(gen.scm, treatment, outcome);
        data.meta.exact_tv = tv(gen.scm, treatment, outcome);
    }
    data.meta.exact_table = valuate_l1(gen.scm);

    if (args.high_dim) {
        // Expansion invalidates the joint table over the new columns; ATE and
        // TV still refer to the untouched treatment/outcome columns.
        data = expand_high_dim(data, treatment, outcome, *args.high_dim,
                               derive(args.seed, "high-dim"));
    }

    const fs::path out_path(args.out);
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    write_csv(data, args.out);
    write_sidecar(data, args.out);

    GenDataResult result;
    result.csv_path = args.out;
    result.meta_path = sidecar_path(args.out);
    result.rows = data.n();
    result.columns = data.vars.size();
    result.exact_ate = data.meta.exact_ate;
    result.exact_tv = data.meta.exact_tv;
    result.widened = gen.widened;
    result.model_hash = data.meta.model_hash;
    return result;
}

IdentifyResult cmd_identify(const IdentifyArgs& args) {
    ResolvedGraph rg = resolve_graph(args.graph);
    std::string treatment = args.treatment, outcome = args.outcome;
    resolve_query_vars(rg, treatment, outcome, "cmd_identify");
    Dataset data = read_csv(args.data);
    const Query query{treatment, outcome};

    ensure_dir(args.out);
    json report = {{"query", query_string(treatment, outcome)},
                   {"graph_hash", hex64(diagram_hash(rg.graph))}};
    IdentifyResult result;

    if (args.symbolic) {
        HybridResult hybrid = hybrid_id_estimate(data, rg.graph, query, args.train);
        report["mode"] = "hybrid";
        report["verdict"] = hybrid.identifiable ? "identifiable" : "not-identifiable";
        report["estimand"] = to_string(hybrid.estimand);
        if (hybrid.estimate) report["estimate"] = *hybrid.estimate;
        result.identifiable = hybrid.identifiable;
        result.estimate = hybrid.estimate;
    } else {
        NeuralIdResult nid = neural_id(data, rg.graph, query, args.train, args.tau, args.repeats,
                                       args.conventional_se);
        report["mode"] = "neural";
        report["tau"] = args.tau;
        report["repeats"] = args.repeats;
        report["gaps"] = nid.test.gaps;
        report["gap_mean"] = nid.test.mean;
        report["gap_se"] = nid.test.se;
        report["run_estimates"] = nid.run_estimates;
        report["verdict"] = nid.identifiable ? "identifiable" : "not-identifiable";
        if (nid.estimate) report["estimate"] = *nid.estimate;
        json trace_files = json::array();
        for (std::size_t r = 0; r < nid.traces.size(); ++r) {
            const std::string name = "trace_run" + std::to_string(r) + ".csv";
            write_trace_csv(nid.traces[r], (fs::path(args.out) / name).string());
            trace_files.push_back(name);
        }
        report["traces"] = std::move(trace_files);
        result.identifiable = nid.identifiable;
        result.estimate = nid.estimate;
    }

    result.report_path = (fs::path(args.out) / "report.json").string();
    write_json(report, result.report_path);
    result.report = std::move(report);
    return result;
}

EstimateResult cmd_estimate(const EstimateArgs& args) {
    ResolvedGraph rg = resolve_graph(args.graph);
    std::string treatment = args.treatment, outcome = args.outcome;
    resolve_query_vars(rg, treatment, outcome, "cmd_estimate");
    Dataset data = read_csv(args.data);

    Ncm model = train_nll(data, rg.graph, args.train);
    TrainConfig naive_cfg = args.train;
    naive_cfg.seed = derive(args.train.seed, "naive");
    Ncm naive = train_naive(data, naive_cfg);

    const std::uint64_t eval_seed = derive(args.train.seed, "estimate");
    EstimateResult result;
    result.query_estimate = estimate_query(model, {{outcome, 1}}, {{treatment, 1}},
                                           args.train.mc_samples, eval_seed);
    result.ate = ate_ncm(model, treatment, outcome, args.train.mc_samples, eval_seed);

    const std::uint64_t naive_eval_seed = derive(args.train.seed, "naive-estimate");
    auto naive_probs = estimate_all_probs(naive, args.train.mc_samples, naive_eval_seed);
    if (data.meta.exact_table)
        result.naive_kl = kl_divergence(*data.meta.exact_table, naive_probs);
    double total = 0.0;
    for (double p : naive_probs) total += p;
    if (!(total > 0.0)) throw std::runtime_error("cmd_estimate: degenerate naive model");
    for (auto& p : naive_probs) p /= total;
    const DistributionTable naive_table(rg.graph.variables(), std::move(naive_probs));
    result.naive_ate = tv_of_table(naive_table, treatment, outcome);

    if (data.meta.exact_table) {
        const auto model_probs = estimate_all_probs(model, args.train.mc_samples, eval_seed);
        result.kl = kl_divergence(*data.meta.exact_table, model_probs);
    }
    if (data.meta.exact_ate) {
        result.ate_error = std::abs(result.ate - *data.meta.exact_ate);
        result.naive_ate_error = std::abs(result.naive_ate - *data.meta.exact_ate);
    }

    json report = {{"query", query_string(treatment, outcome)},
                   {"graph_hash", hex64(diagram_hash(rg.graph))},
                   {"estimate", result.query_estimate},
                   {"ate", result.ate},
                   {"naive_ate", result.naive_ate}};
    if (data.meta.exact_ate) report["exact_ate"] = *data.meta.exact_ate;
    if (result.ate_error) report["ate_error"] = *result.ate_error;
    if (result.naive_ate_error) report["naive_ate_error"] = *result.naive_ate_error;
    if (result.kl) report["kl"] = *result.kl;
    if (result.naive_kl) report["naive_kl"] = *result.naive_kl;

    ensure_dir(args.out);
    result.report_path = (fs::path(args.out) / "report.json").string();
    write_json(report, result.report_path);
    result.report = std::move(report);
    return result;
}

namespace {

BenchmarkResult finish_benchmark(BenchmarkOutput&& output, const std::string& out_dir) {
    ensure_dir(out_dir);
    BenchmarkResult result;
    result.report_path = (fs::path(out_dir) / "report.json").string();
    result.timing_path = (fs::path(out_dir) / "timing.json").string();
    write_json(output.report, result.report_path);
    write_json(output.timing, result.timing_path);
    write_report_csvs(output.report, out_dir);
    result.report = std::move(output.report);
    return result;
}

}  // namespace

BenchmarkResult cmd_benchmark_id(const IdBenchmarkConfig& cfg, const std::string& out_dir) {
    return finish_benchmark(run_id_benchmark(cfg), out_dir);
}

BenchmarkResult cmd_benchmark_est(const EstBenchmarkConfig& cfg, const std::string& out_dir) {
    return finish_benchmark(run_est_benchmark(cfg), out_dir);
}

std::string cmd_report(const std::string& report_path) {
    const json report = read_json(report_path);
    std::string err;
    if (!validate_report(report, &err))
        throw std::runtime_error("cmd_report: invalid report: " + err);
    return summarize_report(report);
}

}  // namespace ncm
