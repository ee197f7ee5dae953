#include <cstddef>
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ncm/commands.hpp"
#include "ncm/experiment.hpp"

namespace {

using ncm::TrainConfig;

// Training flags shared by the subcommands that fit models. Precedence:
// desk defaults < --config file < explicit flags.
struct TrainCli {
    int epochs = 0;
    std::size_t mc_samples = 0;
    double lambda_start = 0.0, lambda_end = 0.0, lr = 0.0;
    std::uint64_t seed = 0;
    std::string config_path;

    CLI::Option* o_epochs = nullptr;
    CLI::Option* o_mc = nullptr;
    CLI::Option* o_lambda_start = nullptr;
    CLI::Option* o_lambda_end = nullptr;
    CLI::Option* o_lr = nullptr;
    CLI::Option* o_seed = nullptr;

    void attach(CLI::App* cmd) {
        o_epochs = cmd->add_option("--epochs", epochs, "training epochs (default 500)");
        o_mc = cmd->add_option("--mc-samples", mc_samples,
                               "Monte-Carlo samples per likelihood estimate (default 5000)");
        o_lambda_start =
            cmd->add_option("--lambda-start", lambda_start, "initial query-penalty weight");
        o_lambda_end = cmd->add_option("--lambda-end", lambda_end, "final query-penalty weight");
        o_lr = cmd->add_option("--lr", lr, "AdamW base learning rate");
        o_seed = cmd->add_option("--seed", seed, "master seed (default 1)");
        cmd->add_option("--config", config_path,
                        "JSON file of defaults (same keys as the report's train block)");
    }

    static void apply_json(const nlohmann::json& j, TrainConfig& cfg) {
        cfg.epochs = j.value("epochs", cfg.epochs);
        cfg.mc_samples = j.value("mc_samples", cfg.mc_samples);
        cfg.lambda_start = j.value("lambda_start", cfg.lambda_start);
        cfg.lambda_end = j.value("lambda_end", cfg.lambda_end);
        cfg.optimizer.lr = j.value("lr", cfg.optimizer.lr);
        cfg.optimizer.beta1 = j.value("beta1", cfg.optimizer.beta1);
        cfg.optimizer.beta2 = j.value("beta2", cfg.optimizer.beta2);
        cfg.optimizer.eps = j.value("eps", cfg.optimizer.eps);
        cfg.optimizer.weight_decay = j.value("weight_decay", cfg.optimizer.weight_decay);
        cfg.restart_period = j.value("restart_period", cfg.restart_period);
        cfg.restart_mult = j.value("restart_mult", cfg.restart_mult);
        cfg.log_every = j.value("log_every", cfg.log_every);
        cfg.patience = j.value("patience", cfg.patience);
        cfg.min_delta = j.value("min_delta", cfg.min_delta);
        cfg.seed = j.value("seed", cfg.seed);
        cfg.arch.hidden_width = j.value("hidden_width", cfg.arch.hidden_width);
        cfg.arch.hidden_layers = j.value("hidden_layers", cfg.arch.hidden_layers);
    }

    TrainConfig resolve() const {
        TrainConfig cfg = ncm::desk_train_config();
        cfg.seed = 1;
        if (!config_path.empty()) apply_json(ncm::read_json(config_path), cfg);
        if (o_epochs->count()) cfg.epochs = epochs;
        if (o_mc->count()) cfg.mc_samples = mc_samples;
        if (o_lambda_start->count()) cfg.lambda_start = lambda_start;
        if (o_lambda_end->count()) cfg.lambda_end = lambda_end;
        if (o_lr->count()) cfg.optimizer.lr = lr;
        if (o_seed->count()) cfg.seed = seed;
        return cfg;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neural causal models constrained by a causal diagram: generate ground-truth "
                 "data, decide identifiability, estimate effects, run benchmarks"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "ncm 1.0.0");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Sample a dataset from a random exact model");
    ncm::GenDataArgs gen_args;
    double gen_widen = 0.05;
    int gen_high_dim = 20;
    gen->add_option("--graph", gen_args.graph, "fixture name or diagram file")->required();
    gen->add_option("--out", gen_args.out, "output CSV path (default data.csv)");
    gen->add_option("-n,--n", gen_args.n, "rows to sample (default 10000)");
    gen->add_option("--seed", gen_args.seed, "master seed (default 1)");
    gen->add_option("--treatment", gen_args.treatment, "treatment variable");
    gen->add_option("--outcome", gen_args.outcome, "outcome variable");
    auto* gen_widen_opt =
        gen->add_option("--widen", gen_widen, "enforce |ATE - TV| of at least this gap");
    auto* gen_hd_opt =
        gen->add_option("--high-dim", gen_high_dim, "expand each covariate to this many bits");

    // identify
    auto* ident = app.add_subcommand("identify", "Decide identifiability of P(y|do(x)) from data");
    ncm::IdentifyArgs id_args;
    TrainCli id_train;
    ident->add_option("--data", id_args.data, "dataset CSV")->required();
    ident->add_option("--graph", id_args.graph, "fixture name or diagram file")->required();
    ident->add_option("--out", id_args.out, "output directory (default identify-out)");
    ident->add_option("--treatment", id_args.treatment, "treatment variable");
    ident->add_option("--outcome", id_args.outcome, "outcome variable");
    ident->add_option("--tau", id_args.tau, "decision threshold on the min-max gap (default 0.03)");
    ident->add_option("--repeats", id_args.repeats, "independent repetitions (default 4)");
    ident->add_flag("--symbolic", id_args.symbolic, "decide symbolically, train only when needed");
    ident->add_flag("--conventional-se", id_args.conventional_se,
                    "use s/sqrt(r) for the standard error");
    id_train.attach(ident);

    // estimate
    auto* est = app.add_subcommand("estimate", "Fit the diagram-constrained model and estimate "
                                               "P(y|do(x)), with a no-diagram baseline");
    ncm::EstimateArgs est_args;
    TrainCli est_train;
    est->add_option("--data", est_args.data, "dataset CSV")->required();
    est->add_option("--graph", est_args.graph, "fixture name or diagram file")->required();
    est->add_option("--out", est_args.out, "output directory (default estimate-out)");
    est->add_option("--treatment", est_args.treatment, "treatment variable");
    est->add_option("--outcome", est_args.outcome, "outcome variable");
    est_train.attach(est);

    // benchmark-id
    auto* bid = app.add_subcommand("benchmark-id",
                                   "Min-max identifiability sweep over the bundled graphs");
    ncm::IdBenchmarkConfig bid_cfg;
    TrainCli bid_train;
    std::string bid_out = "benchmark-id-out";
    bid->add_option("--out", bid_out, "output directory");
    bid->add_option("--graphs", bid_cfg.graphs, "fixture subset (default: all eight)");
    bid->add_option("--trials", bid_cfg.trials, "trials per graph (default 5)");
    bid->add_option("-n,--n", bid_cfg.n, "rows per dataset (default 10000)");
    bid->add_option("--repeats", bid_cfg.repeats, "runs per trial (default 4)");
    bid->add_option("--tau", bid_cfg.taus, "decision thresholds (default 0.01 0.03 0.05)");
    bid->add_option("--widen", bid_cfg.widen_threshold,
                    "minimum |ATE - TV| for generated models (default 0.05)");
    bid->add_flag("--conventional-se", bid_cfg.conventional_se,
                  "use s/sqrt(r) for the standard error");
    bid->add_option("--threads", bid_cfg.threads, "worker pool width (default 1)");
    bid_train.attach(bid);

    // benchmark-est
    auto* best = app.add_subcommand("benchmark-est",
                                    "Estimation-quality sweep on the identifiable graphs");
    ncm::EstBenchmarkConfig best_cfg;
    TrainCli best_train;
    std::string best_out = "benchmark-est-out";
    best->add_option("--out", best_out, "output directory");
    best->add_option("--graphs", best_cfg.graphs, "fixture subset (default: the identifiable four)");
    best->add_option("--grid", best_cfg.grid, "sample sizes (default 1000 10000 100000)");
    best->add_option("--trials", best_cfg.trials, "trials per cell (default 5)");
    best->add_option("--widen", best_cfg.widen_threshold,
                     "minimum |ATE - TV| for generated models (default 0.05)");
    best->add_option("--threads", best_cfg.threads, "worker pool width (default 1)");
    best_train.attach(best);

    // report
    auto* rep = app.add_subcommand("report", "Validate and summarize a benchmark report");
    std::string rep_path;
    rep->add_option("path", rep_path, "report.json to read")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;  // usage error
    }

    try {
        if (gen->parsed()) {
            if (gen_widen_opt->count()) gen_args.widen = gen_widen;
            if (gen_hd_opt->count()) gen_args.high_dim = gen_high_dim;
            const auto result = ncm::cmd_gen_data(gen_args);
            std::cout << "wrote " << result.csv_path << " (" << result.rows << " rows, "
                      << result.columns << " columns) and " << result.meta_path << "\n";
            if (result.exact_ate)
                std::cout << "exact ATE " << *result.exact_ate << ", exact TV " << *result.exact_tv
                          << (result.widened ? " (widened)" : "") << "\n";
        } else if (ident->parsed()) {
            id_args.train = id_train.resolve();
            const auto result = ncm::cmd_identify(id_args);
            std::cout << result.report.at("query").get<std::string>() << ": "
                      << result.report.at("verdict").get<std::string>();
            if (result.estimate) std::cout << ", estimate " << *result.estimate;
            std::cout << "\nreport: " << result.report_path << "\n";
            if (!result.identifiable) return 3;  // verdict FAIL, for scripting
        } else if (est->parsed()) {
            est_args.train = est_train.resolve();
            const auto result = ncm::cmd_estimate(est_args);
            std::cout << result.report.at("query").get<std::string>() << " = "
                      << result.query_estimate << "\nATE " << result.ate << " (baseline "
                      << result.naive_ate << ")\n";
            if (result.ate_error)
                std::cout << "ATE error " << *result.ate_error << " (baseline "
                          << *result.naive_ate_error << ")\n";
            if (result.kl)
                std::cout << "KL to exact law " << *result.kl << " (baseline " << *result.naive_kl
                          << ")\n";
            std::cout << "report: " << result.report_path << "\n";
        } else if (bid->parsed()) {
            bid_cfg.train = bid_train.resolve();
            bid_cfg.seed = bid_cfg.train.seed;
            const auto result = ncm::cmd_benchmark_id(bid_cfg, bid_out);
            std::cout << ncm::summarize_report(result.report) << "report: " << result.report_path
                      << "\n";
        } else if (best->parsed()) {
            best_cfg.train = best_train.resolve();
            best_cfg.seed = best_cfg.train.seed;
            const auto result = ncm::cmd_benchmark_est(best_cfg, best_out);
            std::cout << ncm::summarize_report(result.report) << "report: " << result.report_path
                      << "\n";
        } else if (rep->parsed()) {
            std::cout << ncm::cmd_report(rep_path);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;  // runtime failure
    }
    return 0;
}
