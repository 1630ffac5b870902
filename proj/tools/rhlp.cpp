// rhlp: fit, simulate, benchmark and select from the command line.
//
// Exit codes: 0 ok, 2 input parse error, 3 fit failure (all starts failed),
// 4 precondition violation or bad arguments.

#include "rhlp/confidence.hpp"
#include "rhlp/errors.hpp"
#include "rhlp/io.hpp"
#include "rhlp/selection.hpp"
#include "rhlp/simulation.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace {

using namespace rhlp;

constexpr int kExitParse = 2;
constexpr int kExitFit = 3;
constexpr int kExitPrecondition = 4;

std::uint64_t env_seed() {
    const char* s = std::getenv("RHLP_SEED");
    if (!s || !*s) return 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s, &end, 10);
    if (*end != '\0') throw InvalidArgument(std::string("RHLP_SEED is not an unsigned integer: '") + s + "'");
    return v;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InvalidArgument("cannot write '" + path + "'");
    return out;
}

struct CommonOptions {
    std::optional<std::uint64_t> seed;
    int threads = 1;
    int n_starts = 10;
    int em_max_iter = 1000;
    double em_tol = 1e-6;

    FitConfig config() const {
        FitConfig c;
        c.seed = seed ? *seed : env_seed();
        c.threads = threads;
        c.n_starts = n_starts;
        c.em_max_iter = em_max_iter;
        c.em_tol = em_tol;
        return c;
    }
};

void add_common(CLI::App* app, CommonOptions& o) {
    app->add_option("--seed", o.seed, "Random seed (default: $RHLP_SEED or 0)");
    app->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
    app->add_option("--n-starts", o.n_starts, "EM starts per fit")->check(CLI::PositiveNumber);
    app->add_option("--em-max-iter", o.em_max_iter, "EM iteration cap")->check(CLI::PositiveNumber);
    app->add_option("--em-tol", o.em_tol, "Relative log-likelihood tolerance")->check(CLI::PositiveNumber);
}

// t -> (t - offset) / scale maps the sample range onto [0, 1].
struct TimeScale {
    double offset = 0.0;
    double scale = 1.0;
};

TimeScale time_scale_of(const Dataset& data) {
    const double lo = data.t().front();
    const double hi = data.t().back();
    return {lo, hi > lo ? hi - lo : 1.0};
}

Dataset rescaled(const Dataset& data, const TimeScale& ts) {
    std::vector<double> t(data.t().begin(), data.t().end());
    for (double& v : t) v = (v - ts.offset) / ts.scale;
    return {std::move(t), std::vector<double>(data.x().begin(), data.x().end())};
}

Eigen::MatrixXd beta_in_original_scale(const Eigen::MatrixXd& beta, const TimeScale& ts) {
    Eigen::MatrixXd out(beta.rows(), beta.cols());
    for (Eigen::Index k = 0; k < beta.rows(); ++k)
        out.row(k) = polynomial_in_original_scale(beta.row(k).transpose(), ts.offset, ts.scale).transpose();
    return out;
}

// ---------------------------------------------------------------------------

struct FitOptions {
    std::string input;
    std::string method = "rhlp";
    int K = 2;
    int p = 1;
    bool normalize_time = false;
    std::optional<double> band_alpha;
    int band_points = 0;
    std::string fisher = "opg";
    std::string model_out = "model.json";
    std::string curves_out = "curves.csv";
    std::string band_out = "band.csv";
    bool left_to_right = false;
    CommonOptions common;
};

int cmd_fit(const FitOptions& o) {
    const Method method = parse_method(o.method);
    if (o.band_alpha && method != Method::Rhlp) throw InvalidArgument("--band is only available for --method rhlp");
    if (o.K < 1 || o.p < 0) throw InvalidArgument("need --k >= 1 and --p >= 0");
    const FisherEstimator estimator =
        o.fisher == "observed" ? FisherEstimator::Observed : FisherEstimator::OuterProduct;
    const Dataset data = read_dataset_csv(o.input);
    const FitConfig config = o.common.config();
    const TimeScale ts = o.normalize_time ? time_scale_of(data) : TimeScale{};
    const Dataset work = o.normalize_time ? rescaled(data, ts) : data;

    ModelDocument doc;
    doc.method = std::string(method_name(method));
    doc.K = o.K;
    doc.p = o.p;
    doc.seed = config.seed;
    doc.n = data.size();
    std::vector<double> fitted;
    std::vector<int> labels;
    Eigen::MatrixXd proportions(static_cast<Eigen::Index>(data.size()), 0);

    switch (method) {
    case Method::Rhlp: {
        const FitResult res = fit(work, o.K, o.p, config);
        const RhlpParams params = o.normalize_time ? params_in_original_scale(res.params, ts.offset, ts.scale)
                                                   : res.params;
        doc.beta = params.beta;
        doc.w = params.w.matrix();
        doc.sigma2 = params.sigma2;
        doc.loglik = res.loglik();
        doc.n_iter = res.n_iter;
        doc.converged = res.converged;
        fitted = res.fitted;
        labels = res.map_labels;
        proportions.resize(static_cast<Eigen::Index>(data.size()), o.K);
        for (std::size_t i = 0; i < data.size(); ++i)
            proportions.row(static_cast<Eigen::Index>(i)) = gate_proportions(work.t(i), res.params.w).transpose();

        if (o.band_alpha) {
            std::vector<double> grid;
            if (o.band_points > 1) {
                const double lo = data.t().front(), hi = data.t().back();
                for (int g = 0; g < o.band_points; ++g)
                    grid.push_back(lo + (hi - lo) * g / (o.band_points - 1));
            } else {
                grid.assign(data.t().begin(), data.t().end());
            }
            // The delta-method band is invariant under the affine time reparametrization,
            // so it is computed directly in the original scale.
            const ConfidenceBand band = confidence_band(grid, data, params, *o.band_alpha, estimator);
            auto out = open_out(o.band_out);
            write_band_csv(out, band);
        }
        break;
    }
    case Method::Piecewise: {
        const PiecewiseFit res = fit_piecewise_dp(work, o.K, o.p);
        doc.beta = o.normalize_time ? beta_in_original_scale(res.beta, ts) : res.beta;
        doc.boundaries = res.boundaries;
        doc.sigma2 = std::max(res.sse / static_cast<double>(data.size()), kSigma2Floor);
        const double n = static_cast<double>(data.size());
        doc.loglik = -0.5 * n * (std::log(2.0 * std::numbers::pi * doc.sigma2) + 1.0);
        doc.converged = true;
        fitted = res.fitted;
        labels = res.labels();
        break;
    }
    case Method::Hmm: {
        HmmOptions hopt;
        hopt.left_to_right = o.left_to_right;
        const HmmFit res = fit_hmm_regression(work, o.K, o.p, config, hopt);
        doc.beta = o.normalize_time ? beta_in_original_scale(res.params.beta, ts) : res.params.beta;
        doc.initial = res.params.initial;
        doc.trans = res.params.trans;
        doc.sigma2 = res.params.sigma2;
        doc.loglik = res.loglik();
        doc.n_iter = res.n_iter;
        doc.converged = res.converged;
        fitted = hmm_filter_predict(work, res.params);
        const Eigen::MatrixXd omega = hmm_filter(work, res.params);
        labels.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) omega.row(static_cast<Eigen::Index>(i)).maxCoeff(&labels[i]);
        proportions = omega;
        break;
    }
    }

    {
        auto out = open_out(o.model_out);
        out << render_model(doc);
    }
    {
        auto out = open_out(o.curves_out);
        write_curves_csv(out, data, fitted, labels, proportions);
    }
    std::printf("method=%s K=%d p=%d n=%zu loglik=%.10g n_iter=%d converged=%s\n", doc.method.c_str(), doc.K,
                doc.p, doc.n, doc.loglik, doc.n_iter, doc.converged ? "true" : "false");
    return 0;
}

// ---------------------------------------------------------------------------

struct SimulateOptions {
    int scenario = 1;
    std::size_t n = 500;
    double sigma = 1.5;
    std::optional<std::uint64_t> seed;
    std::string out = "simulated.csv";
};

int cmd_simulate(const SimulateOptions& o) {
    const SimulatedData sim = generate(o.scenario, o.n, o.sigma, o.seed ? *o.seed : env_seed());
    auto out = open_out(o.out);
    write_simulation_csv(out, sim);
    return 0;
}

// ---------------------------------------------------------------------------

struct BenchmarkOptions {
    std::vector<int> scenarios{1, 2, 3};
    std::vector<std::size_t> sizes{100, 300, 500, 1000};
    std::vector<double> sigmas{0.5, 1.0, 1.5, 2.0, 2.5};
    std::vector<std::string> methods{"rhlp", "piecewise", "hmm"};
    int replicates = 10;
    std::string out = "benchmark.csv";
    CommonOptions common;
};

int cmd_benchmark(const BenchmarkOptions& o) {
    SweepAxes axes;
    axes.scenarios = o.scenarios;
    axes.sizes = o.sizes;
    axes.sigmas = o.sigmas;
    axes.methods.clear();
    for (const auto& m : o.methods) axes.methods.push_back(parse_method(m));
    axes.replicates = o.replicates;
    FitConfig config = o.common.config();
    axes.seed = config.seed;
    config.threads = 1;
    for (int s : axes.scenarios) (void)scenario(s);
    if (axes.replicates < 1) throw InvalidArgument("--replicates must be >= 1");

    const auto records = sweep(axes, config, o.common.threads);
    {
        auto out = open_out(o.out);
        write_benchmark_csv(out, records);
    }

    // Mean EQM per cell over the successful replicates.
    using Cell = std::tuple<int, int, std::size_t, double>;
    struct Acc {
        double sum = 0.0, wall = 0.0;
        int ok = 0, total = 0;
    };
    std::map<Cell, Acc> cells;
    for (const auto& r : records) {
        Acc& a = cells[{r.scenario, static_cast<int>(r.method), r.n, r.sigma}];
        ++a.total;
        if (r.ok) {
            ++a.ok;
            a.sum += r.eqm;
            a.wall += r.wall_seconds;
        }
    }
    std::printf("%-8s %-10s %6s %6s %14s %12s %6s\n", "scenario", "method", "n", "sigma", "mean_eqm", "mean_wall_s",
                "ok");
    for (const auto& [key, a] : cells) {
        const auto& [s, m, n, sigma] = key;
        const double mean = a.ok ? a.sum / a.ok : std::nan("");
        const double wall = a.ok ? a.wall / a.ok : std::nan("");
        std::printf("%-8d %-10s %6zu %6.3g %14.6g %12.4g %3d/%d\n", s,
                    std::string(method_name(static_cast<Method>(m))).c_str(), n, sigma, mean, wall, a.ok, a.total);
    }
    std::printf("wall times are machine-dependent\n");
    return 0;
}

// ---------------------------------------------------------------------------

struct SelectOptions {
    std::string input;
    int k_min = 1, k_max = 5;
    int p_min = 0, p_max = 3;
    std::string out = "selection.csv";
    bool normalize_time = false;
    CommonOptions common;
};

int cmd_select(const SelectOptions& o) {
    if (o.k_min < 1 || o.k_max < o.k_min || o.p_min < 0 || o.p_max < o.p_min)
        throw InvalidArgument("invalid K or p range");
    const Dataset data = read_dataset_csv(o.input);
    const Dataset work = o.normalize_time ? rescaled(data, time_scale_of(data)) : data;
    const BicGridResult grid = grid_select(work, int_range(o.k_min, o.k_max), int_range(o.p_min, o.p_max),
                                           o.common.config());

    auto out = open_out(o.out);
    out << "K,p,nu,loglik,bic,selected\n";
    std::printf("%4s %4s %5s %16s %16s\n", "K", "p", "nu", "loglik", "bic");
    for (const auto& [key, cell] : grid.table) {
        const bool best = key == grid.best;
        out << key.first << ',' << key.second << ',' << free_param_count(key.first, key.second) << ','
            << format_number(cell.loglik) << ',' << format_number(cell.bic) << ',' << (best ? 1 : 0) << '\n';
        std::printf("%4d %4d %5d %16.8g %16.8g%s\n", key.first, key.second, free_param_count(key.first, key.second),
                    cell.loglik, cell.bic, best ? "  *" : "");
    }
    for (const auto& key : grid.skipped) std::printf("%4d %4d skipped\n", key.first, key.second);
    std::printf("selected K=%d p=%d\n", grid.best.first, grid.best.second);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Regression with a hidden logistic process"};
    app.require_subcommand(1);

    FitOptions fit_o;
    auto* fit_cmd = app.add_subcommand("fit", "Fit a model to a t,x CSV");
    fit_cmd->add_option("--input", fit_o.input, "Input CSV")->required();
    fit_cmd->add_option("--method", fit_o.method, "rhlp | piecewise | hmm");
    fit_cmd->add_option("--k", fit_o.K, "Number of components");
    fit_cmd->add_option("--p", fit_o.p, "Polynomial degree");
    fit_cmd->add_flag("--normalize-time", fit_o.normalize_time,
                      "Fit on t rescaled to [0, 1]; parameters are reported in the original scale");
    fit_cmd->add_option("--band", fit_o.band_alpha, "Write a 1-ALPHA confidence band (rhlp only)");
    fit_cmd->add_option("--band-points", fit_o.band_points, "Band grid size (default: the data times)");
    fit_cmd->add_option("--fisher", fit_o.fisher, "Information estimator for --band: opg | observed")
        ->check(CLI::IsMember({"opg", "observed"}));
    fit_cmd->add_option("--model-out", fit_o.model_out, "Model document path");
    fit_cmd->add_option("--curves-out", fit_o.curves_out, "Fitted-curve CSV path");
    fit_cmd->add_option("--band-out", fit_o.band_out, "Band CSV path");
    fit_cmd->add_flag("--left-to-right", fit_o.left_to_right, "Left-to-right chain for --method hmm");
    add_common(fit_cmd, fit_o.common);

    SimulateOptions sim_o;
    auto* sim_cmd = app.add_subcommand("simulate", "Generate a synthetic scenario");
    sim_cmd->add_option("--scenario", sim_o.scenario, "1, 2 or 3");
    sim_cmd->add_option("--n", sim_o.n, "Number of points");
    sim_cmd->add_option("--sigma", sim_o.sigma, "Noise standard deviation");
    sim_cmd->add_option("--seed", sim_o.seed, "Random seed (default: $RHLP_SEED or 0)");
    sim_cmd->add_option("--out", sim_o.out, "Output CSV");

    BenchmarkOptions bench_o;
    auto* bench_cmd = app.add_subcommand("benchmark", "Sweep scenarios, sizes, noise levels and methods");
    bench_cmd->add_option("--scenarios", bench_o.scenarios);
    bench_cmd->add_option("--sizes", bench_o.sizes);
    bench_cmd->add_option("--sigmas", bench_o.sigmas);
    bench_cmd->add_option("--methods", bench_o.methods);
    bench_cmd->add_option("--replicates", bench_o.replicates);
    bench_cmd->add_option("--out", bench_o.out, "Benchmark CSV");
    add_common(bench_cmd, bench_o.common);

    SelectOptions sel_o;
    auto* sel_cmd = app.add_subcommand("select", "BIC selection of (K, p)");
    sel_cmd->add_option("--input", sel_o.input, "Input CSV")->required();
    sel_cmd->add_option("--k-min", sel_o.k_min);
    sel_cmd->add_option("--k-max", sel_o.k_max);
    sel_cmd->add_option("--p-min", sel_o.p_min);
    sel_cmd->add_option("--p-max", sel_o.p_max);
    sel_cmd->add_option("--out", sel_o.out, "Selection CSV");
    sel_cmd->add_flag("--normalize-time", sel_o.normalize_time, "Fit on t rescaled to [0, 1]");
    add_common(sel_cmd, sel_o.common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitPrecondition;
    }

    try {
        if (*fit_cmd) return cmd_fit(fit_o);
        if (*sim_cmd) return cmd_simulate(sim_o);
        if (*bench_cmd) return cmd_benchmark(bench_o);
        if (*sel_cmd) return cmd_select(sel_o);
    } catch (const ParseError& e) {
        std::fprintf(stderr, "rhlp: parse error: %s\n", e.what());
        return kExitParse;
    } catch (const AllStartsFailed& e) {
        std::fprintf(stderr, "rhlp: fit failed: %s\n", e.what());
        return kExitFit;
    } catch (const Error& e) {
        std::fprintf(stderr, "rhlp: %s\n", e.what());
        return kExitPrecondition;
    }
    return kExitPrecondition;
}
