// reshuffle: command-line front end for the resampling experiments.
//
// Exit codes: 0 success, 2 configuration or usage error, 3 numerical failure.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "reshuffle/io.hpp"
#include "reshuffle/reshuffle.hpp"

namespace fs = std::filesystem;
using namespace reshuffle;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_config = 2;
constexpr int exit_numerical = 3;

unsigned default_threads() {
    if (const char* env = std::getenv("RESHUFFLE_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) return static_cast<unsigned>(v);
        } catch (...) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Options shared by every subcommand.
struct Common {
    std::optional<std::uint64_t> seed;
    unsigned threads = default_threads();
    std::string out;

    std::uint64_t resolved_seed = 0;
    std::string seed_source;

    void add_to(CLI::App* cmd, bool with_out, const std::string& default_out = "") {
        cmd->add_option("--seed", seed, "64-bit seed; drawn from entropy and recorded in the manifest when absent");
        cmd->add_option("--threads", threads, "worker threads (default: $RESHUFFLE_THREADS or hardware concurrency)")
            ->check(CLI::PositiveNumber);
        if (with_out) {
            out = default_out;
            cmd->add_option("--out", out, "output file")->capture_default_str();
        }
    }

    void resolve() {
        if (seed) {
            resolved_seed = *seed;
            seed_source = "flag";
        } else {
            resolved_seed = entropy_seed();
            seed_source = "entropy";
        }
    }
};

class Manifest {
public:
    Manifest(std::string subcommand, const Common& common)
        : start_(std::chrono::steady_clock::now()) {
        doc_["subcommand"] = std::move(subcommand);
        doc_["version"] = version;
        doc_["seed"] = common.resolved_seed;
        doc_["seed_source"] = common.seed_source;
        doc_["threads"] = common.threads;
        doc_["outputs"] = Json::array();
        doc_["flags"] = Json::array();
    }

    Json& operator[](const char* key) { return doc_[key]; }
    void output(const std::string& path) { doc_["outputs"].push_back(path); }
    void flag(const std::string& f) { doc_["flags"].push_back(f); }

    /// Written beside `primary` as <primary>.manifest.json.
    void write(const std::string& primary) {
        const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        doc_["wall_clock_seconds"] = elapsed;
        std::ofstream f(primary + ".manifest.json");
        f << doc_.dump(2) << '\n';
    }

private:
    Json doc_;
    std::chrono::steady_clock::time_point start_;
};

std::ofstream open_output(const std::string& path) {
    if (path.empty()) throw ConfigError("--out must not be empty");
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open output file '" + path + "'");
    return f;
}

Json read_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file '" + path + "'");
    try {
        return Json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file '" + path + "' does not parse: " + e.what());
    }
}

std::string with_suffix(const std::string& path, const std::string& suffix) {
    fs::path p(path);
    const std::string stem = p.stem().string();
    return (p.parent_path() / (stem + suffix)).string();
}

// ---------------------------------------------------------------------------

struct SplitsCmd {
    Common common;
    std::string scheme;
    std::size_t n = 0;
    double alpha = 0.0;
    std::size_t folds = 1;
    std::size_t configurations = 1;

    void add(CLI::App& app) {
        auto* cmd = app.add_subcommand("splits", "export validation index sets as (j, m, s) triples");
        cmd->add_option("--scheme", scheme, "validation scheme: " + variant_names())->required();
        cmd->add_option("--n", n, "dataset size")->required();
        cmd->add_option("--alpha", alpha, "validation fraction (ignored for CV variants)");
        cmd->add_option("--M", folds, "fold count")->capture_default_str();
        cmd->add_option("--J", configurations, "number of configurations")->capture_default_str();
        common.add_to(cmd, true, "splits.csv");
        cmd->callback([this] { run(); });
    }

    void run() {
        common.resolve();
        const SchemeSpec spec = SchemeSpec::make(variant_from_string(scheme), n, alpha, folds);
        Stream rng = substream(common.resolved_seed, {tag(StreamTag::splits)});
        const IndexAssignment a = generate(spec, configurations, rng);
        Manifest manifest("splits", common);
        manifest["config"] = Json{{"scheme", scheme_to_json(spec)}, {"J", configurations}};
        {
            auto f = open_output(common.out);
            write_membership_csv(f, a);
        }
        manifest.output(common.out);
        manifest.write(common.out);
    }
};

struct TauCmd {
    Common common;
    std::string scheme;
    std::size_t n = 0;
    double alpha = 0.0;
    std::size_t folds = 1;
    std::size_t draws = 100000;

    void add(CLI::App& app) {
        auto* cmd = app.add_subcommand("tau", "closed-form and Monte-Carlo (sigma^2, tau^2) for a scheme");
        cmd->add_option("--scheme", scheme, "validation scheme: " + variant_names())->required();
        cmd->add_option("--n", n, "dataset size")->required();
        cmd->add_option("--alpha", alpha, "validation fraction (ignored for CV variants)");
        cmd->add_option("--M", folds, "fold count")->capture_default_str();
        cmd->add_option("--draws", draws, "Monte-Carlo draws")->capture_default_str()->check(CLI::PositiveNumber);
        common.add_to(cmd, true, "");
        cmd->callback([this] { run(); });
    }

    void run() {
        common.resolve();
        const SchemeSpec spec = SchemeSpec::make(variant_from_string(scheme), n, alpha, folds);
        const Parallel parallel(common.threads);
        const auto closed = closed_form(spec);
        const auto mc = estimate_tau(spec, draws, common.resolved_seed, parallel);
        const auto conv = sigma_tau_from_estimates(mc);
        const Json result = tau_result_json(spec, closed, mc, conv);
        std::cout << result.dump(2) << '\n';
        if (!common.out.empty()) {
            Manifest manifest("tau", common);
            manifest["config"] = Json{{"scheme", scheme_to_json(spec)}, {"draws", draws}};
            {
                auto f = open_output(common.out);
                f << result.dump(2) << '\n';
            }
            manifest.output(common.out);
            manifest.write(common.out);
        }
    }
};

struct SimulateCmd {
    Common common;
    std::string config_path;
    std::vector<double> m, kappa, tau;
    std::optional<std::size_t> grid_points;
    std::optional<double> sigma_k2;
    std::optional<std::size_t> replications;

    void add(CLI::App& app) {
        auto* cmd = app.add_subcommand("simulate", "Gaussian-process loss-surface sweep over (m, kappa, tau)");
        cmd->add_option("--config", config_path, "JSON simulation config");
        cmd->add_option("--m", m, "curvature values")->delimiter(',');
        cmd->add_option("--kappa", kappa, "kernel inverse-length values")->delimiter(',');
        cmd->add_option("--tau", tau, "reshuffling factors")->delimiter(',');
        cmd->add_option("--J", grid_points, "uniform grid size on [0, 1]");
        cmd->add_option("--sigmaK2", sigma_k2, "kernel amplitude");
        cmd->add_option("--replications", replications, "replications per cell")->check(CLI::PositiveNumber);
        common.add_to(cmd, true, "simulate.csv");
        cmd->callback([this] { run(); });
    }

    void run() {
        common.resolve();
        SimulationRequest req;
        if (!config_path.empty()) {
            req = simulation_from_json(read_json_file(config_path));
        } else {
            req.base = default_simulation_config();
        }
        if (!m.empty()) req.grid.m = m;
        if (!kappa.empty()) req.grid.kappa = kappa;
        if (!tau.empty()) req.grid.tau = tau;
        if (grid_points) req.base.surface.grid = gp::uniform_grid(*grid_points);
        if (sigma_k2) req.base.noise.sigma_k2 = *sigma_k2;
        if (replications) req.base.replications = *replications;
        // An explicit --seed wins over the config file's seed.
        if (common.seed || config_path.empty()) {
            req.base.seed = common.resolved_seed;
        } else {
            common.resolved_seed = req.base.seed;
            common.seed_source = "config";
        }
        req.base.validate();

        const Parallel parallel(common.threads);
        std::vector<gp::SweepRow> rows;
        std::size_t cell = 0;
        for (double mv : req.grid.m)
            for (double kv : req.grid.kappa)
                for (double tv : req.grid.tau) {
                    gp::SweepGrid one{{mv}, {kv}, {tv}};
                    gp::SimulationConfig cfg = req.base;
                    cfg.surface.m = mv;
                    cfg.noise.kappa = kv;
                    cfg.noise.tau = tv;
                    try {
                        rows.push_back({mv, kv, tv, gp::run_study(cfg, cell, parallel)});
                    } catch (const ConfigError&) {
                        throw;
                    } catch (const NumericalError& e) {
                        throw gp::CellError(cell, mv, kv, tv, e.what());
                    }
                    const auto& s = rows.back().summary;
                    std::cerr << "cell " << cell << " m=" << format_double(mv) << " kappa=" << format_double(kv)
                              << " tau=" << format_double(tv) << " mean_true_risk=" << format_double(s.mean_true_risk)
                              << " stderr=" << format_double(s.standard_error) << (s.degenerate ? " [degenerate]" : "") << '\n';
                    ++cell;
                }

        Manifest manifest("simulate", common);
        manifest["config"] = simulation_to_json(req);
        Json degenerate = Json::array();
        for (std::size_t i = 0; i < rows.size(); ++i)
            if (rows[i].summary.degenerate) degenerate.push_back(i);
        if (!degenerate.empty()) manifest.flag("degenerate_stderr");
        manifest["degenerate_cells"] = degenerate;
        {
            auto f = open_output(common.out);
            gp::write_sweep_csv(f, rows, req.base);
        }
        manifest.output(common.out);
        manifest.write(common.out);
    }
};

struct BoundCmd {
    Common common;
    regret::RegretInputs in;
    std::size_t tau_sweep = 0;

    void add(CLI::App& app) {
        auto* cmd = app.add_subcommand("bound", "expected-regret bound and its A, B terms");
        cmd->add_option("--tau", in.tau, "reshuffling factor in [0, 1]")->required();
        cmd->add_option("--sigma", in.sigma, "noise standard-deviation upper bound")->required();
        cmd->add_option("--sigma-lower", in.sigma_lower, "noise standard-deviation lower bound")->required();
        cmd->add_option("--kappa", in.kappa, "correlation constant")->required();
        cmd->add_option("--m", in.m, "curvature at the minimum")->required();
        cmd->add_option("--eta", in.eta, "grid density")->required();
        cmd->add_option("--d", in.d, "dimension")->required();
        cmd->add_option("--J", in.J, "number of configurations")->required();
        cmd->add_option("--tau-sweep", tau_sweep, "also write a CSV over this many equally spaced tau in [0, 1]");
        common.add_to(cmd, true, "bound_tau_sweep.csv");
        cmd->callback([this] { run(); });
    }

    void run() {
        common.resolve();
        const auto b = regret::bound(in);
        std::cout << breakdown_to_json(b).dump(2) << '\n';
        if (tau_sweep > 0) {
            Manifest manifest("bound", common);
            manifest["config"] = Json{{"sigma", in.sigma}, {"sigma_lower", in.sigma_lower}, {"kappa", in.kappa}, {"m", in.m},
                                      {"eta", in.eta}, {"d", in.d}, {"J", in.J}, {"tau_sweep", tau_sweep}};
            {
                auto f = open_output(common.out);
                regret::write_tau_sweep_csv(f, in, tau_sweep);
            }
            manifest.output(common.out);
            manifest.write(common.out);
        }
    }
};

struct EtaCmd {
    Common common;
    std::vector<std::size_t> sizes{100, 1000, 10000};
    std::size_t dim = 1;
    std::size_t reps = 20;
    std::size_t probes = 100000;
    std::string points_path;

    void add(CLI::App& app) {
        auto* cmd = app.add_subcommand("eta", "Monte-Carlo grid-density estimates and their log-log scaling in J");
        cmd->add_option("--J", sizes, "random-grid sizes")->delimiter(',')->capture_default_str();
        cmd->add_option("--d", dim, "dimension")->capture_default_str()->check(CLI::PositiveNumber);
        cmd->add_option("--reps", reps, "random grids per size")->capture_default_str()->check(CLI::PositiveNumber);
        cmd->add_option("--probes", probes, "probe balls per estimate")->capture_default_str()->check(CLI::PositiveNumber);
        cmd->add_option("--points", points_path, "CSV of points (one per line, d columns) to estimate eta for instead");
        common.add_to(cmd, true, "eta.csv");
        cmd->callback([this] { run(); });
    }

    static regret::PointSet read_points(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw ConfigError("cannot read points file '" + path + "'");
        std::vector<double> coords;
        std::size_t d = 0;
        std::string line;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            std::stringstream ss(line);
            std::string cell;
            std::size_t cols = 0;
            while (std::getline(ss, cell, ',')) {
                try {
                    coords.push_back(std::stod(cell));
                } catch (...) {
                    throw ConfigError("points file: cannot parse '" + cell + "'");
                }
                ++cols;
            }
            if (d == 0) d = cols;
            if (cols != d) throw ConfigError("points file: inconsistent column count");
        }
        if (d == 0) throw DomainError("estimate_eta: empty point set");
        return regret::PointSet(d, std::move(coords));
    }

    void run() {
        common.resolve();
        const Parallel parallel(common.threads);
        Manifest manifest("eta", common);
        if (!points_path.empty()) {
            const auto pts = read_points(points_path);
            const double eta = regret::estimate_eta(pts, probes, common.resolved_seed, parallel);
            const Json result{{"points", pts.size()}, {"d", pts.dim()}, {"probes", probes}, {"eta", eta}};
            std::cout << result.dump(2) << '\n';
            manifest["config"] = Json{{"points", points_path}, {"probes", probes}};
            {
                auto f = open_output(common.out);
                f << result.dump(2) << '\n';
            }
            manifest.output(common.out);
            manifest.write(common.out);
            return;
        }

        if (sizes.size() < 2) throw ConfigError("eta: need at least two grid sizes for a slope");
        std::vector<double> log_j, mean_log_eta;
        auto f = open_output(common.out);
        f << "J,rep,eta\n";
        for (std::size_t si = 0; si < sizes.size(); ++si) {
            const std::size_t J = sizes[si];
            if (J < 1) throw ConfigError("eta: grid sizes must be positive");
            double sum_log = 0.0;
            for (std::size_t r = 0; r < reps; ++r) {
                Stream rng = substream(common.resolved_seed, {tag(StreamTag::points), J, r});
                const auto pts = regret::random_points_in_ball(J, dim, rng);
                const double eta = regret::estimate_eta(pts, probes, derive_seed(common.resolved_seed, {J, r}), parallel);
                f << J << ',' << (r + 1) << ',' << format_double(eta) << '\n';
                sum_log += std::log(eta);
            }
            log_j.push_back(std::log(static_cast<double>(J)));
            mean_log_eta.push_back(sum_log / static_cast<double>(reps));
            std::cerr << "J=" << J << " mean log eta=" << format_double(mean_log_eta.back()) << '\n';
        }
        f.close();
        const auto fit = stats::least_squares(log_j, mean_log_eta);
        const Json result{{"sizes", sizes},
                          {"d", dim},
                          {"reps", reps},
                          {"probes", probes},
                          {"mean_log_eta", mean_log_eta},
                          {"slope", fit.slope},
                          {"reference_exponent", -1.0 / (2.0 * static_cast<double>(dim))}};
        std::cout << result.dump(2) << '\n';
        manifest["config"] = Json{{"sizes", sizes}, {"d", dim}, {"reps", reps}, {"probes", probes}};
        manifest["result"] = result;
        manifest.output(common.out);
        manifest.write(common.out);
    }
};

struct CovcheckCmd {
    Common common;
    std::string pair = "holdout";
    empirics::CovCheckConfig cfg;
    std::optional<std::size_t> n;
    std::string task_path;

    void add(CLI::App& app) {
        auto* cmd = app.add_subcommand("covcheck", "Monte-Carlo check of the validation-loss covariance ratios");
        cmd->add_option("--pair", pair, "scheme family: holdout, mfold-cv or mfold-holdout")->capture_default_str();
        cmd->add_option("--n", n, "dataset size (default: task's n)");
        cmd->add_option("--alpha", cfg.alpha, "validation fraction")->capture_default_str();
        cmd->add_option("--M", cfg.folds, "fold count of the M-fold variants")->capture_default_str();
        cmd->add_option("--reference-M", cfg.reference_folds, "fold count of the CV reference")->capture_default_str();
        cmd->add_option("--replications", cfg.replications, "dataset replications (>= 1000)")->capture_default_str();
        cmd->add_option("--task", task_path, "JSON task config");
        common.add_to(cmd, true, "covcheck.csv");
        cmd->callback([this] { run(); });
    }

    void run() {
        common.resolve();
        cfg.pair = fixed_counterpart(variant_from_string(pair));
        cfg.seed = common.resolved_seed;
        auto task = empirics::TractableTask::covariance_default();
        if (!task_path.empty()) task = task_from_json(read_json_file(task_path), task);
        if (n) task.n = *n;
        const auto result = empirics::covariance_check(task, cfg, Parallel(common.threads));
        const Json summary = covcheck_to_json(result);
        std::cout << summary.dump(2) << '\n';
        Manifest manifest("covcheck", common);
        manifest["config"] = Json{{"pair", std::string(to_string(cfg.pair))}, {"alpha", cfg.alpha}, {"M", cfg.folds},
                                  {"reference_M", cfg.reference_folds}, {"replications", cfg.replications},
                                  {"task", task_to_json(task)}};
        manifest["result"] = summary;
        {
            auto f = open_output(common.out);
            empirics::write_covariance_csv(f, result);
        }
        manifest.output(common.out);
        manifest.write(common.out);
    }
};

struct HpoCmd {
    Common common;
    std::string scheme = "holdout";
    bool reshuffle = false;
    double alpha = 0.2;
    std::size_t folds = 5;
    std::optional<std::size_t> n;
    empirics::HpoConfig cfg;
    std::string task_path;

    void add(CLI::App& app) {
        auto* cmd = app.add_subcommand("hpo", "random search under fixed or reshuffled splits");
        cmd->add_option("--scheme", scheme, "scheme family: holdout, mfold-cv or mfold-holdout")->capture_default_str();
        cmd->add_flag("--reshuffle,!--no-reshuffle", reshuffle, "redraw splits for every configuration");
        cmd->add_option("--alpha", alpha, "validation fraction")->capture_default_str();
        cmd->add_option("--M", folds, "fold count of the M-fold variants")->capture_default_str();
        cmd->add_option("--n", n, "dataset size (default: task's n)");
        cmd->add_option("--iterations", cfg.iterations, "configurations evaluated per run")->capture_default_str()->check(CLI::PositiveNumber);
        cmd->add_option("--replications", cfg.replications, "independent runs")->capture_default_str()->check(CLI::PositiveNumber);
        cmd->add_option("--task", task_path, "JSON task config");
        common.add_to(cmd, true, "hpo.csv");
        cmd->callback([this] { run(); });
    }

    void run() {
        common.resolve();
        Variant v = fixed_counterpart(variant_from_string(scheme));
        if (reshuffle) v = reshuffled_counterpart(v);
        auto task = empirics::TractableTask::low_signal();
        if (!task_path.empty()) task = task_from_json(read_json_file(task_path), task);
        if (n) task.n = *n;
        const SchemeSpec spec = SchemeSpec::make(v, task.n, alpha, is_single_holdout(v) ? 1 : folds);
        cfg.seed = common.resolved_seed;
        const auto result = empirics::run_random_search(task, spec, cfg, Parallel(common.threads));

        const auto& fin = result.final_true_risk();
        const Json summary{{"scheme", scheme_to_json(spec)},
                           {"iterations", cfg.iterations},
                           {"replications", cfg.replications},
                           {"final_mean_true_risk", fin.mean},
                           {"final_stderr", fin.standard_error}};
        std::cout << summary.dump(2) << '\n';

        const std::string summary_path = with_suffix(common.out, ".summary.csv");
        Manifest manifest("hpo", common);
        manifest["config"] = Json{{"scheme", scheme_to_json(spec)}, {"iterations", cfg.iterations},
                                  {"replications", cfg.replications}, {"task", task_to_json(task)}};
        manifest["paired_streams"] = "dataset, visit order and split streams depend only on (seed, replication)";
        manifest["result"] = summary;
        {
            auto f = open_output(common.out);
            empirics::write_trajectory_csv(f, task, result);
        }
        {
            auto f = open_output(summary_path);
            empirics::write_hpo_summary_csv(f, result);
        }
        manifest.output(common.out);
        manifest.output(summary_path);
        manifest.write(common.out);
    }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Resampling and reshuffling experiments for hyperparameter optimization"};
    app.set_version_flag("--version", std::string(version));
    app.require_subcommand(1);

    SplitsCmd splits;
    TauCmd tau;
    SimulateCmd simulate;
    BoundCmd bound;
    EtaCmd eta;
    CovcheckCmd covcheck;
    HpoCmd hpo;
    splits.add(app);
    tau.add(app);
    simulate.add(app);
    bound.add(app);
    eta.add(app);
    covcheck.add(app);
    hpo.add(app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n";
        const auto chosen = app.get_subcommands();
        std::cerr << (chosen.empty() ? app.help() : chosen.front()->help());
        return exit_config;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const DomainError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return exit_numerical;
    } catch (const EstimationError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return exit_numerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return exit_ok;
}
