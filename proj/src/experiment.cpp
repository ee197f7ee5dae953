#include "ncm/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "ncm/dataset.hpp"
#include "ncm/identify.hpp"
#include "ncm/metrics.hpp"
#include "ncm/model.hpp"
#include "ncm/rng.hpp"
#include "ncm/table.hpp"

namespace ncm {
namespace {

using nlohmann::json;

std::uint64_t derive(std::uint64_t base, const std::string& tag, std::uint64_t index) {
    std::uint64_t h = fnv1a64(&base, sizeof(base));
    h = fnv1a64(tag, h);
    return fnv1a64(&index, sizeof(index), h);
}

std::string num_key(double v) {
    std::ostringstream out;
    out << std::setprecision(15) << v;
    return out.str();
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sample_sd(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double ci95_half_width(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    return 1.96 * sample_sd(v) / std::sqrt(static_cast<double>(v.size()));
}

json train_config_json(const TrainConfig& t) {
    return json{{"epochs", t.epochs},
                {"mc_samples", t.mc_samples},
                {"lambda_start", t.lambda_start},
                {"lambda_end", t.lambda_end},
                {"lr", t.optimizer.lr},
                {"beta1", t.optimizer.beta1},
                {"beta2", t.optimizer.beta2},
                {"eps", t.optimizer.eps},
                {"weight_decay", t.optimizer.weight_decay},
                {"restart_period", t.restart_period},
                {"restart_mult", t.restart_mult},
                {"log_every", t.log_every},
                {"patience", t.patience},
                {"min_delta", t.min_delta},
                {"hidden_width", t.arch.hidden_width},
                {"hidden_layers", t.arch.hidden_layers}};
}

const std::vector<int> kPercentileLevels = {1, 5, 10, 25, 50, 75, 90, 95, 99};

struct StopwatchSeconds {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double elapsed() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

// Worker pool over index range [0, count). Each item must be independent; the
// caller assembles results in index order afterwards, so thread count never
// changes the output. The first exception wins and is rethrown after join.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::mutex err_mu;
    std::exception_ptr first_error;
    auto worker = [&] {
        while (!failed.load(std::memory_order_relaxed)) {
            const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= count) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!first_error) first_error = std::current_exception();
                failed.store(true, std::memory_order_relaxed);
            }
        }
    };
    std::vector<std::thread> pool;
    const std::size_t n_workers = std::min<std::size_t>(static_cast<std::size_t>(threads), count);
    pool.reserve(n_workers);
    for (std::size_t t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

// The M fixture's effect equals its conditional by construction, so the gap
// objective is identically zero there and widening can never make progress.
bool widenable(const std::string& fixture_name) { return fixture_name != "m"; }

std::vector<std::string> resolve_graphs(const std::vector<std::string>& requested,
                                        bool identifiable_only) {
    std::vector<std::string> names;
    if (requested.empty()) {
        for (const auto& f : benchmark_fixtures())
            if (!identifiable_only || f.identifiable) names.push_back(f.name);
    } else {
        for (const auto& name : requested) {
            const Fixture& f = fixture(name);  // throws on unknown name
            if (identifiable_only && !f.identifiable)
                throw std::invalid_argument("estimation benchmark requires identifiable graphs; '" +
                                            name + "' is not");
            names.push_back(f.name);
        }
    }
    return names;
}

}  // namespace

std::uint64_t experiment_seed(const std::string& graph_text, std::size_t n, int trial, int run,
                              std::uint64_t master) {
    std::uint64_t h = fnv1a64(&master, sizeof(master));
    h = fnv1a64(graph_text, h);
    const std::uint64_t n64 = n;
    h = fnv1a64(&n64, sizeof(n64), h);
    const std::int64_t t64 = trial;
    h = fnv1a64(&t64, sizeof(t64), h);
    const std::int64_t r64 = run;
    return fnv1a64(&r64, sizeof(r64), h);
}

std::string config_hash_hex(const json& config) {
    const std::uint64_t h = fnv1a64(config.dump());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

GeneratedScm make_benchmark_scm(const CausalDiagram& g, const std::string& treatment,
                                const std::string& outcome,
                                std::optional<double> widen_threshold, std::uint64_t base_seed) {
    constexpr int kMaxAttempts = 20;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        CanonicalScm scm = build_canonical(g, derive(base_seed, "scm", attempt));
        if (!widen_threshold) return {std::move(scm), false, 0, attempt + 1};
        try {
            const int steps = widen_ate_tv_gap(scm, treatment, outcome, *widen_threshold);
            return {std::move(scm), true, steps, attempt + 1};
        } catch (const WidenError&) {
            // redraw from the next derived seed
        }
    }
    throw std::runtime_error("make_benchmark_scm: widening failed for " +
                             std::to_string(kMaxAttempts) + " seeds");
}

namespace {

struct IdTrialOutcome {
    json record;
    std::vector<int> epochs;         // logged epochs
    std::vector<double> series;      // run-averaged gap per logged epoch
    std::vector<char> correct;       // per tau: verdict matches ground truth
    double seconds = 0.0;
};

IdTrialOutcome run_id_trial(const IdBenchmarkConfig& cfg, const Fixture& f,
                            const std::string& graph_text, int trial) {
    StopwatchSeconds clock;
    const std::uint64_t scm_seed = experiment_seed(graph_text, cfg.n, trial, -2, cfg.seed);
    const std::optional<double> widen =
        widenable(f.name) ? std::optional<double>(cfg.widen_threshold) : std::nullopt;
    GeneratedScm gen = make_benchmark_scm(f.graph, f.treatment, f.outcome, widen, scm_seed);

    const std::uint64_t data_seed = experiment_seed(graph_text, cfg.n, trial, -1, cfg.seed);
    Dataset data = sample(gen.scm, cfg.n, data_seed);

    TrainConfig tcfg = cfg.train;
    tcfg.seed = experiment_seed(graph_text, cfg.n, trial, 0, cfg.seed);
    const Query query{f.treatment, f.outcome};
    NeuralIdResult nid =
        neural_id(data, f.graph, query, tcfg, cfg.taus.front(), cfg.repeats, cfg.conventional_se);

    IdTrialOutcome out;
    out.series.assign(nid.traces.front().size(), 0.0);
    for (const auto& rec : nid.traces.front()) out.epochs.push_back(rec.epoch);
    for (const auto& trace : nid.traces) {
        if (trace.size() != out.series.size())
            throw std::runtime_error("run_id_benchmark: uneven traces across runs");
        for (std::size_t i = 0; i < trace.size(); ++i) out.series[i] += trace[i].gap;
    }
    for (auto& v : out.series) v /= static_cast<double>(nid.traces.size());

    json runs = json::array();
    for (std::size_t r = 0; r < nid.test.gaps.size(); ++r)
        runs.push_back(
            {{"run", r}, {"final_gap", nid.test.gaps[r]}, {"estimate", nid.run_estimates[r]}});

    json verdicts = json::object();
    for (double tau : cfg.taus) {
        const bool id = gap_test(nid.test.gaps, tau, cfg.conventional_se).identifiable;
        verdicts[num_key(tau)] = id;
        out.correct.push_back(id == f.identifiable ? 1 : 0);
    }

    out.record = {{"trial", trial},
                  {"scm_seed", scm_seed},
                  {"scm_attempts", gen.attempts},
                  {"widened", gen.widened},
                  {"widen_steps", gen.widen_steps},
                  {"data_seed", data_seed},
                  {"train_seed", tcfg.seed},
                  {"n", cfg.n},
                  {"exact_ate", ate(gen.scm, f.treatment, f.outcome)},
                  {"exact_tv", tv(gen.scm, f.treatment, f.outcome)},
                  {"gaps", nid.test.gaps},
                  {"gap_mean", nid.test.mean},
                  {"gap_se", nid.test.se},
                  {"runs", std::move(runs)},
                  {"epochs", out.epochs},
                  {"gap_series", out.series},
                  {"verdicts", std::move(verdicts)}};
    out.seconds = clock.elapsed();
    return out;
}

}  // namespace

BenchmarkOutput run_id_benchmark(const IdBenchmarkConfig& cfg) {
    if (cfg.trials < 1) throw std::invalid_argument("run_id_benchmark: trials must be positive");
    if (cfg.n == 0) throw std::invalid_argument("run_id_benchmark: n must be positive");
    if (cfg.taus.empty()) throw std::invalid_argument("run_id_benchmark: no taus given");
    for (double tau : cfg.taus)
        if (!(tau >= 0.0)) throw std::invalid_argument("run_id_benchmark: tau must be >= 0");
    const auto names = resolve_graphs(cfg.graphs, /*identifiable_only=*/false);

    json config = {{"graphs", names},
                   {"trials", cfg.trials},
                   {"n", cfg.n},
                   {"repeats", cfg.repeats},
                   {"taus", cfg.taus},
                   {"seed", cfg.seed},
                   {"widen_threshold", cfg.widen_threshold},
                   {"conventional_se", cfg.conventional_se},
                   {"train", train_config_json(cfg.train)}};
    json report = {{"report", "benchmark-id"},
                   {"version", 1},
                   {"config", config},
                   {"config_hash", config_hash_hex(config)}};
    json timing = {{"report", "timing"}, {"for", "benchmark-id"}};
    StopwatchSeconds total_clock;

    // Trials fan out across the pool; assembly below walks them in index
    // order, so the report is identical for any thread count.
    const std::size_t trials = static_cast<std::size_t>(cfg.trials);
    std::vector<IdTrialOutcome> outcomes(names.size() * trials);
    std::vector<std::string> texts;
    texts.reserve(names.size());
    for (const auto& name : names) texts.push_back(serialize_diagram(fixture(name).graph));
    parallel_for(outcomes.size(), cfg.threads, [&](std::size_t w) {
        const std::size_t gi = w / trials;
        outcomes[w] = run_id_trial(cfg, fixture(names[gi]), texts[gi], static_cast<int>(w % trials));
    });

    json jgraphs = json::array();
    json gap_percentiles = json::object();
    json accuracy = json::object();
    json graph_timing = json::object();

    for (std::size_t gi = 0; gi < names.size(); ++gi) {
        const Fixture& f = fixture(names[gi]);
        json jtrials = json::array();
        std::vector<double> trial_seconds;
        std::vector<int> correct(cfg.taus.size(), 0);
        const IdTrialOutcome* first = &outcomes[gi * trials];

        for (std::size_t t = 0; t < trials; ++t) {
            IdTrialOutcome& o = outcomes[gi * trials + t];
            if (o.epochs != first->epochs)
                throw std::runtime_error("run_id_benchmark: uneven traces across trials");
            for (std::size_t k = 0; k < cfg.taus.size(); ++k) correct[k] += o.correct[k];
            trial_seconds.push_back(o.seconds);
            jtrials.push_back(std::move(o.record));
        }
        jgraphs.push_back(
            {{"name", f.name}, {"identifiable", f.identifiable}, {"trials", std::move(jtrials)}});

        // Percentiles across trials of the run-averaged gap, per logged epoch.
        json series_obj = json::object();
        for (int level : kPercentileLevels) {
            std::vector<double> curve(first->epochs.size());
            for (std::size_t e = 0; e < first->epochs.size(); ++e) {
                std::vector<double> at_epoch;
                at_epoch.reserve(trials);
                for (std::size_t t = 0; t < trials; ++t)
                    at_epoch.push_back(outcomes[gi * trials + t].series[e]);
                curve[e] = percentile(at_epoch, static_cast<double>(level));
            }
            series_obj[std::to_string(level)] = curve;
        }
        gap_percentiles[f.name] = {{"epochs", first->epochs}, {"series", std::move(series_obj)}};

        json acc = json::object();
        for (std::size_t k = 0; k < cfg.taus.size(); ++k)
            acc[num_key(cfg.taus[k])] =
                static_cast<double>(correct[k]) / static_cast<double>(cfg.trials);
        accuracy[f.name] = std::move(acc);
        graph_timing[f.name] = {{"trial_seconds", trial_seconds}};
    }

    report["graphs"] = std::move(jgraphs);
    report["aggregates"] = {{"percentile_levels", kPercentileLevels},
                            {"gap_percentiles", std::move(gap_percentiles)},
                            {"accuracy", std::move(accuracy)}};
    timing["graphs"] = std::move(graph_timing);
    timing["total_seconds"] = total_clock.elapsed();
    return {std::move(report), std::move(timing)};
}

namespace {

struct EstTrialOutcome {
    json record;
    double ncm_err = 0.0, naive_err = 0.0, ncm_kl = 0.0, naive_kl = 0.0;
    double seconds = 0.0;
};

EstTrialOutcome run_est_trial(const EstBenchmarkConfig& cfg, const Fixture& f,
                              const std::string& graph_text, std::size_t n, int trial) {
    StopwatchSeconds clock;
    const std::uint64_t scm_seed = experiment_seed(graph_text, n, trial, -2, cfg.seed);
    const std::optional<double> widen =
        widenable(f.name) ? std::optional<double>(cfg.widen_threshold) : std::nullopt;
    GeneratedScm gen = make_benchmark_scm(f.graph, f.treatment, f.outcome, widen, scm_seed);
    const double exact_ate = ate(gen.scm, f.treatment, f.outcome);
    const double exact_tv = tv(gen.scm, f.treatment, f.outcome);
    const DistributionTable exact = valuate_l1(gen.scm);

    const std::uint64_t data_seed = experiment_seed(graph_text, n, trial, -1, cfg.seed);
    Dataset data = sample(gen.scm, n, data_seed);

    TrainConfig tcfg = cfg.train;
    tcfg.seed = experiment_seed(graph_text, n, trial, 0, cfg.seed);
    Ncm model = train_nll(data, f.graph, tcfg);

    TrainConfig naive_cfg = cfg.train;
    naive_cfg.seed = experiment_seed(graph_text, n, trial, 1, cfg.seed);
    Ncm naive = train_naive(data, naive_cfg);

    const std::uint64_t eval_seed = experiment_seed(graph_text, n, trial, 2, cfg.seed);
    const double model_ate = ate_ncm(model, f.treatment, f.outcome, tcfg.mc_samples, eval_seed);
    const auto model_probs = estimate_all_probs(model, tcfg.mc_samples, eval_seed);
    const double model_kl = kl_divergence(exact, model_probs);

    const std::uint64_t naive_eval_seed = experiment_seed(graph_text, n, trial, 3, cfg.seed);
    auto naive_probs = estimate_all_probs(naive, tcfg.mc_samples, naive_eval_seed);
    const double naive_kl = kl_divergence(exact, naive_probs);
    // The naive baseline has no interventional semantics worth trusting; its
    // effect estimate is the conditional contrast read off its fitted
    // observational law.
    double total = 0.0;
    for (double p : naive_probs) total += p;
    if (!(total > 0.0)) throw std::runtime_error("run_est_benchmark: degenerate naive model");
    for (auto& p : naive_probs) p /= total;
    const DistributionTable naive_table(f.graph.variables(), std::move(naive_probs));
    const double naive_ate = tv_of_table(naive_table, f.treatment, f.outcome);

    EstTrialOutcome out;
    out.ncm_err = std::abs(model_ate - exact_ate);
    out.naive_err = std::abs(naive_ate - exact_ate);
    out.ncm_kl = model_kl;
    out.naive_kl = naive_kl;
    out.record = {{"trial", trial},
                  {"scm_seed", scm_seed},
                  {"scm_attempts", gen.attempts},
                  {"widened", gen.widened},
                  {"widen_steps", gen.widen_steps},
                  {"data_seed", data_seed},
                  {"train_seed", tcfg.seed},
                  {"naive_seed", naive_cfg.seed},
                  {"exact_ate", exact_ate},
                  {"exact_tv", exact_tv},
                  {"ncm_ate", model_ate},
                  {"naive_ate", naive_ate},
                  {"ncm_err", out.ncm_err},
                  {"naive_err", out.naive_err},
                  {"ncm_kl", model_kl},
                  {"naive_kl", naive_kl}};
    out.seconds = clock.elapsed();
    return out;
}

}  // namespace

BenchmarkOutput run_est_benchmark(const EstBenchmarkConfig& cfg) {
    if (cfg.trials < 1) throw std::invalid_argument("run_est_benchmark: trials must be positive");
    if (cfg.grid.empty()) throw std::invalid_argument("run_est_benchmark: empty sample-size grid");
    for (std::size_t n : cfg.grid)
        if (n == 0) throw std::invalid_argument("run_est_benchmark: n must be positive");
    const auto names = resolve_graphs(cfg.graphs, /*identifiable_only=*/true);

    json config = {{"graphs", names},
                   {"grid", cfg.grid},
                   {"trials", cfg.trials},
                   {"seed", cfg.seed},
                   {"widen_threshold", cfg.widen_threshold},
                   {"train", train_config_json(cfg.train)}};
    json report = {{"report", "benchmark-est"},
                   {"version", 1},
                   {"config", config},
                   {"config_hash", config_hash_hex(config)}};
    json timing = {{"report", "timing"}, {"for", "benchmark-est"}};
    StopwatchSeconds total_clock;

    const std::size_t trials = static_cast<std::size_t>(cfg.trials);
    const std::size_t grid_size = cfg.grid.size();
    std::vector<EstTrialOutcome> outcomes(names.size() * grid_size * trials);
    std::vector<std::string> texts;
    texts.reserve(names.size());
    for (const auto& name : names) texts.push_back(serialize_diagram(fixture(name).graph));
    parallel_for(outcomes.size(), cfg.threads, [&](std::size_t w) {
        const std::size_t gi = w / (grid_size * trials);
        const std::size_t ni = (w / trials) % grid_size;
        outcomes[w] = run_est_trial(cfg, fixture(names[gi]), texts[gi], cfg.grid[ni],
                                    static_cast<int>(w % trials));
    });

    json jgraphs = json::array();
    json graph_timing = json::object();

    for (std::size_t gi = 0; gi < names.size(); ++gi) {
        const Fixture& f = fixture(names[gi]);
        json cells = json::array();
        json cell_timing = json::object();
        for (std::size_t ni = 0; ni < grid_size; ++ni) {
            json jtrials = json::array();
            std::vector<double> ncm_errs, naive_errs, ncm_kls, naive_kls, seconds;
            for (std::size_t t = 0; t < trials; ++t) {
                EstTrialOutcome& o = outcomes[(gi * grid_size + ni) * trials + t];
                ncm_errs.push_back(o.ncm_err);
                naive_errs.push_back(o.naive_err);
                ncm_kls.push_back(o.ncm_kl);
                naive_kls.push_back(o.naive_kl);
                seconds.push_back(o.seconds);
                jtrials.push_back(std::move(o.record));
            }
            json summary = {{"ncm_err_mean", mean_of(ncm_errs)},
                            {"ncm_err_ci95", ci95_half_width(ncm_errs)},
                            {"ncm_err_median", median(ncm_errs)},
                            {"naive_err_mean", mean_of(naive_errs)},
                            {"naive_err_ci95", ci95_half_width(naive_errs)},
                            {"naive_err_median", median(naive_errs)},
                            {"ncm_kl_mean", mean_of(ncm_kls)},
                            {"ncm_kl_ci95", ci95_half_width(ncm_kls)},
                            {"ncm_kl_median", median(ncm_kls)},
                            {"naive_kl_mean", mean_of(naive_kls)},
                            {"naive_kl_ci95", ci95_half_width(naive_kls)},
                            {"naive_kl_median", median(naive_kls)}};
            cells.push_back({{"n", cfg.grid[ni]}, {"trials", std::move(jtrials)},
                             {"summary", std::move(summary)}});
            cell_timing[std::to_string(cfg.grid[ni])] = {{"trial_seconds", seconds}};
        }
        jgraphs.push_back(
            {{"name", f.name}, {"identifiable", f.identifiable}, {"cells", std::move(cells)}});
        graph_timing[f.name] = std::move(cell_timing);
    }

    report["graphs"] = std::move(jgraphs);
    timing["graphs"] = std::move(graph_timing);
    timing["total_seconds"] = total_clock.elapsed();
    return {std::move(report), std::move(timing)};
}

void write_json(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_json: cannot open " + path);
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("write_json: write failed for " + path);
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_json: cannot open " + path);
    return json::parse(in);
}

void write_report_csvs(const json& report, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const std::string kind = report.at("report").get<std::string>();

    auto open_csv = [&](const std::string& file) {
        std::ofstream out(fs::path(out_dir) / file);
        if (!out) throw std::runtime_error("write_report_csvs: cannot open " + file);
        out << std::setprecision(17);
        return out;
    };

    if (kind == "benchmark-id") {
        const auto& agg = report.at("aggregates");
        {
            auto out = open_csv("accuracy.csv");
            out << "graph,identifiable,tau,accuracy\n";
            for (const auto& jgraph : report.at("graphs")) {
                const auto name = jgraph.at("name").get<std::string>();
                for (const auto& [tau, acc] : agg.at("accuracy").at(name).items())
                    out << name << ',' << (jgraph.at("identifiable").get<bool>() ? 1 : 0) << ','
                        << tau << ',' << acc.get<double>() << '\n';
            }
        }
        for (const auto& jgraph : report.at("graphs")) {
            const auto name = jgraph.at("name").get<std::string>();
            const auto& per = agg.at("gap_percentiles").at(name);
            auto out = open_csv("gaps_" + name + ".csv");
            out << "epoch";
            for (int level : kPercentileLevels) out << ",p" << level;
            out << '\n';
            const auto& epochs = per.at("epochs");
            for (std::size_t e = 0; e < epochs.size(); ++e) {
                out << epochs[e].get<int>();
                for (int level : kPercentileLevels)
                    out << ',' << per.at("series").at(std::to_string(level))[e].get<double>();
                out << '\n';
            }
        }
    } else if (kind == "benchmark-est") {
        auto out = open_csv("estimation.csv");
        out << "graph,n,method,ate_err_mean,ate_err_ci95,ate_err_median,kl_mean,kl_ci95,"
               "kl_median\n";
        for (const auto& jgraph : report.at("graphs")) {
            const auto name = jgraph.at("name").get<std::string>();
            for (const auto& cell : jgraph.at("cells")) {
                const auto& s = cell.at("summary");
                for (const std::string method : {"ncm", "naive"}) {
                    out << name << ',' << cell.at("n").get<std::size_t>() << ',' << method;
                    for (const std::string metric : {"err_mean", "err_ci95", "err_median",
                                                     "kl_mean", "kl_ci95", "kl_median"})
                        out << ',' << s.at(method + "_" + metric).get<double>();
                    out << '\n';
                }
            }
        }
    } else {
        throw std::invalid_argument("write_report_csvs: unknown report kind " + kind);
    }
}

namespace {

bool fail(std::string* error, const std::string& msg) {
    if (error) *error = msg;
    return false;
}

bool require_keys(const json& j, const std::vector<std::string>& keys, const std::string& where,
                  std::string* error) {
    if (!j.is_object()) return fail(error, where + ": not an object");
    for (const auto& k : keys)
        if (!j.contains(k)) return fail(error, where + ": missing key '" + k + "'");
    return true;
}

bool check_numbers(const json& j, const std::vector<std::string>& keys, const std::string& where,
                   std::string* error) {
    for (const auto& k : keys) {
        if (!j.contains(k) || !j.at(k).is_number())
            return fail(error, where + ": '" + k + "' missing or not a number");
    }
    return true;
}

}  // namespace

bool validate_report(const json& report, std::string* error) {
    if (!require_keys(report, {"report", "version", "config", "config_hash", "graphs"}, "report",
                      error))
        return false;
    const auto kind = report.at("report");
    if (!kind.is_string() || (kind != "benchmark-id" && kind != "benchmark-est"))
        return fail(error, "report: unknown kind");
    if (report.at("version") != 1) return fail(error, "report: unsupported version");
    if (!report.at("config_hash").is_string() ||
        report.at("config_hash").get<std::string>().size() != 16)
        return fail(error, "report: config_hash must be a 16-hex-digit string");
    const auto& config = report.at("config");
    const auto& graphs = report.at("graphs");
    if (!graphs.is_array() || graphs.empty()) return fail(error, "report: graphs must be nonempty");

    if (kind == "benchmark-id") {
        if (!require_keys(config, {"graphs", "trials", "n", "repeats", "taus", "seed", "train"},
                          "config", error))
            return false;
        const int trials = config.at("trials").get<int>();
        const std::size_t n_taus = config.at("taus").size();
        for (const auto& jgraph : graphs) {
            if (!require_keys(jgraph, {"name", "identifiable", "trials"}, "graph", error))
                return false;
            const auto where = "graph " + jgraph.at("name").get<std::string>();
            const auto& jtrials = jgraph.at("trials");
            if (!jtrials.is_array() || static_cast<int>(jtrials.size()) != trials)
                return fail(error, where + ": expected " + std::to_string(trials) + " trials");
            for (const auto& t : jtrials) {
                if (!require_keys(t, {"trial", "gaps", "runs", "epochs", "gap_series", "verdicts"},
                                  where, error))
                    return false;
                if (!check_numbers(t, {"exact_ate", "exact_tv", "gap_mean", "gap_se"}, where,
                                   error))
                    return false;
                if (t.at("gaps").size() != t.at("runs").size())
                    return fail(error, where + ": gaps/runs length mismatch");
                if (t.at("epochs").size() != t.at("gap_series").size())
                    return fail(error, where + ": epochs/gap_series length mismatch");
                if (t.at("verdicts").size() != n_taus)
                    return fail(error, where + ": one verdict per tau required");
            }
        }
        if (!report.contains("aggregates")) return fail(error, "report: missing aggregates");
        const auto& agg = report.at("aggregates");
        if (!require_keys(agg, {"percentile_levels", "gap_percentiles", "accuracy"}, "aggregates",
                          error))
            return false;
        for (const auto& jgraph : graphs) {
            const auto name = jgraph.at("name").get<std::string>();
            if (!agg.at("gap_percentiles").contains(name) || !agg.at("accuracy").contains(name))
                return fail(error, "aggregates: missing graph " + name);
            const auto& per = agg.at("gap_percentiles").at(name);
            if (!require_keys(per, {"epochs", "series"}, "gap_percentiles", error)) return false;
            for (const auto& level : agg.at("percentile_levels")) {
                const auto key = std::to_string(level.get<int>());
                if (!per.at("series").contains(key) ||
                    per.at("series").at(key).size() != per.at("epochs").size())
                    return fail(error, "gap_percentiles " + name + ": bad series p" + key);
            }
            if (agg.at("accuracy").at(name).size() != n_taus)
                return fail(error, "accuracy " + name + ": one entry per tau required");
        }
    } else {
        if (!require_keys(config, {"graphs", "grid", "trials", "seed", "train"}, "config", error))
            return false;
        const int trials = config.at("trials").get<int>();
        const std::size_t grid_size = config.at("grid").size();
        for (const auto& jgraph : graphs) {
            if (!require_keys(jgraph, {"name", "identifiable", "cells"}, "graph", error))
                return false;
            const auto where = "graph " + jgraph.at("name").get<std::string>();
            const auto& cells = jgraph.at("cells");
            if (!cells.is_array() || cells.size() != grid_size)
                return fail(error, where + ": one cell per grid size required");
            for (const auto& cell : cells) {
                if (!require_keys(cell, {"n", "trials", "summary"}, where, error)) return false;
                if (static_cast<int>(cell.at("trials").size()) != trials)
                    return fail(error, where + ": expected " + std::to_string(trials) + " trials");
                for (const auto& t : cell.at("trials"))
                    if (!check_numbers(t,
                                       {"exact_ate", "exact_tv", "ncm_ate", "naive_ate", "ncm_err",
                                        "naive_err", "ncm_kl", "naive_kl"},
                                       where, error))
                        return false;
                if (!check_numbers(cell.at("summary"),
                                   {"ncm_err_mean", "ncm_err_ci95", "ncm_err_median",
                                    "naive_err_mean", "naive_err_ci95", "naive_err_median",
                                    "ncm_kl_mean", "ncm_kl_ci95", "ncm_kl_median", "naive_kl_mean",
                                    "naive_kl_ci95", "naive_kl_median"},
                                   where + " summary", error))
                    return false;
            }
        }
    }
    return true;
}

std::string summarize_report(const json& report) {
    std::string err;
    if (!validate_report(report, &err)) throw std::invalid_argument("summarize_report: " + err);
    std::ostringstream out;
    out << std::setprecision(4);
    const auto kind = report.at("report").get<std::string>();
    const auto& config = report.at("config");

    if (kind == "benchmark-id") {
        out << "identifiability benchmark: " << report.at("graphs").size() << " graphs, "
            << config.at("trials").get<int>() << " trials, n=" << config.at("n").get<std::size_t>()
            << ", repeats=" << config.at("repeats").get<int>() << "\n";
        const auto& agg = report.at("aggregates");
        for (const auto& jgraph : report.at("graphs")) {
            const auto name = jgraph.at("name").get<std::string>();
            const auto& p50 = agg.at("gap_percentiles").at(name).at("series").at("50");
            out << "  " << name << (jgraph.at("identifiable").get<bool>() ? " (id)" : " (non-id)")
                << ": median final gap " << p50.back().get<double>() << "; accuracy";
            for (const auto& [tau, acc] : agg.at("accuracy").at(name).items())
                out << " tau=" << tau << ": " << acc.get<double>();
            out << "\n";
        }
    } else {
        out << "estimation benchmark: " << report.at("graphs").size() << " graphs, "
            << config.at("trials").get<int>() << " trials, grid=";
        for (std::size_t i = 0; i < config.at("grid").size(); ++i)
            out << (i ? "," : "") << config.at("grid")[i].get<std::size_t>();
        out << "\n";
        for (const auto& jgraph : report.at("graphs")) {
            const auto name = jgraph.at("name").get<std::string>();
            for (const auto& cell : jgraph.at("cells")) {
                const auto& s = cell.at("summary");
                out << "  " << name << " n=" << cell.at("n").get<std::size_t>()
                    << ": ate err median ncm " << s.at("ncm_err_median").get<double>()
                    << " vs naive " << s.at("naive_err_median").get<double>()
                    << "; kl median ncm " << s.at("ncm_kl_median").get<double>() << " vs naive "
                    << s.at("naive_kl_median").get<double>() << "\n";
            }
        }
    }
    return out.str();
}

}  // namespace ncm
