#include "rhlp/simulation.hpp"

#include "rhlp/errors.hpp"
#include "rhlp/hmm.hpp"
#include "rhlp/parallel.hpp"
#include "rhlp/piecewise.hpp"

#include <chrono>
#include <limits>
#include <cmath>
#include <numbers>

namespace rhlp {

std::string_view method_name(Method m) noexcept {
    switch (m) {
        case Method::Rhlp: return "rhlp";
        case Method::Piecewise: return "piecewise";
        case Method::Hmm: return "hmm";
    }
    return "?";
}

Method parse_method(std::string_view name) {
    if (name == "rhlp") return Method::Rhlp;
    if (name == "piecewise") return Method::Piecewise;
    if (name == "hmm") return Method::Hmm;
    throw InvalidArgument("unknown method '" + std::string(name) + "' (expected rhlp, piecewise or hmm)");
}

Scenario scenario(int id) {
    switch (id) {
        case 1: return {1, 4, 2};
        case 2: return {2, 2, 2};
        case 3: return {3, 5, 3};
    }
    throw InvalidArgument("unknown scenario " + std::to_string(id) + " (expected 1, 2 or 3)");
}

RhlpParams scenario1_params() {
    RhlpParams params;
    params.beta.resize(4, 3);
    params.beta << 34, -60, 30,
                   -17, 29, -7,
                   185, -104, 15,
                   -804, 343, -35;
    Eigen::MatrixXd w(4, 2);
    w << 547, -154,
         526, -135,
         464, -115,
         0, 0;
    params.w = GateWeights(std::move(w));
    params.sigma2 = 1.0;
    return params;
}

double true_curve(int scenario_id, double t) {
    switch (scenario_id) {
        case 1: {
            static const RhlpParams params = scenario1_params();
            return regression_mean(t, params);
        }
        case 2:
            return t <= 2.5 ? 33.0 - 20.0 * t + 4.0 * t * t : -78.0 + 47.0 * t - 5.0 * t * t;
        case 3:
            return 20.0 * std::sin(1.6 * std::numbers::pi * t) * std::exp(-0.7 * t);
    }
    throw InvalidArgument("unknown scenario " + std::to_string(scenario_id) + " (expected 1, 2 or 3)");
}

SimulatedData generate(int scenario_id, std::size_t n, double sigma, std::uint64_t seed) {
    scenario(scenario_id);
    if (n < 2) throw InvalidArgument("generate: n must be >= 2");
    if (!(sigma >= 0.0)) throw InvalidArgument("generate: sigma must be >= 0");
    Rng rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> t(n), x(n), truth(n);
    for (std::size_t i = 0; i < n; ++i) {
        t[i] = 5.0 * static_cast<double>(i) / static_cast<double>(n - 1);
        truth[i] = true_curve(scenario_id, t[i]);
        x[i] = truth[i] + sigma * noise(rng);
    }
    return {Dataset(std::move(t), std::move(x)), std::move(truth)};
}

double eqm(std::span<const double> truth, std::span<const double> estimate) {
    if (truth.size() != estimate.size())
        throw LengthMismatch("eqm: " + std::to_string(truth.size()) + " vs " + std::to_string(estimate.size()));
    if (truth.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double d = truth[i] - estimate[i];
        s += d * d;
    }
    return s / static_cast<double>(truth.size());
}

std::vector<double> estimate_curve(Method method, const Dataset& data, int components, int degree,
                                   const FitConfig& config) {
    switch (method) {
        case Method::Rhlp:
            return fit(data, components, degree, config).fitted;
        case Method::Piecewise:
            return fit_piecewise_dp(data, components, degree).fitted;
        case Method::Hmm:
            return hmm_filter_predict(data, fit_hmm_regression(data, components, degree, config).params);
    }
    return {};
}

std::uint64_t data_seed(std::uint64_t seed, int scenario_id, std::size_t n, double sigma, int replicate) {
    return derive_seed(seed, {static_cast<std::uint64_t>(scenario_id), static_cast<std::uint64_t>(n),
                              seed_key(sigma), static_cast<std::uint64_t>(replicate)});
}

std::uint64_t fit_seed(std::uint64_t seed, int scenario_id, Method method, std::size_t n, double sigma,
                       int replicate) {
    return derive_seed(seed, {static_cast<std::uint64_t>(scenario_id), 100 + static_cast<std::uint64_t>(method),
                              static_cast<std::uint64_t>(n), seed_key(sigma),
                              static_cast<std::uint64_t>(replicate)});
}

std::vector<BenchmarkRecord> sweep(const SweepAxes& axes, const FitConfig& fit_config, int threads) {
    if (axes.scenarios.empty() || axes.sizes.empty() || axes.sigmas.empty() || axes.methods.empty() ||
        axes.replicates < 1)
        throw InvalidArgument("sweep: every axis must be nonempty");
    for (int s : axes.scenarios) scenario(s);

    std::vector<BenchmarkRecord> records;
    for (int s : axes.scenarios)
        for (Method m : axes.methods)
            for (std::size_t n : axes.sizes)
                for (double sigma : axes.sigmas)
                    for (int r = 0; r < axes.replicates; ++r) {
                        BenchmarkRecord rec;
                        rec.scenario = s;
                        rec.method = m;
                        rec.n = n;
                        rec.sigma = sigma;
                        rec.replicate = r;
                        rec.seed = fit_seed(axes.seed, s, m, n, sigma, r);
                        records.push_back(rec);
                    }

    parallel_for(records.size(), threads, [&](std::size_t idx) {
        BenchmarkRecord& rec = records[idx];
        try {
            const Scenario sc = scenario(rec.scenario);
            const SimulatedData sim =
                generate(rec.scenario, rec.n, rec.sigma, data_seed(axes.seed, rec.scenario, rec.n, rec.sigma, rec.replicate));
            FitConfig cfg = fit_config;
            cfg.seed = rec.seed;
            cfg.threads = 1;
            const auto start = std::chrono::steady_clock::now();
            const std::vector<double> est = estimate_curve(rec.method, sim.data, sc.components, sc.degree, cfg);
            rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            rec.eqm = eqm(sim.truth, est);
        } catch (const Error& e) {
            rec.ok = false;
            rec.error = e.what();
            rec.eqm = std::numeric_limits<double>::quiet_NaN();
        }
    });
    return records;
}

ModelKey BicStudyResult::modal() const {
    ModelKey best{0, 0};
    double best_pct = -1.0;
    for (const auto& [key, pct] : percent)
        if (pct > best_pct) {
            best = key;
            best_pct = pct;
        }
    return best;
}

BicStudyResult bic_study(std::size_t n, double sigma, int replicates, const std::vector<int>& k_range,
                         const std::vector<int>& p_range, std::uint64_t seed, const FitConfig& fit_config) {
    if (replicates < 1) throw InvalidArgument("bic_study: replicates must be >= 1");
    BicStudyResult out;
    for (int r = 0; r < replicates; ++r) {
        const SimulatedData sim = generate(1, n, sigma, data_seed(seed, 1, n, sigma, r));
        FitConfig cfg = fit_config;
        cfg.seed = derive_seed(seed, {0xB1C, static_cast<std::uint64_t>(r)});
        out.selections.push_back(grid_select(sim.data, k_range, p_range, cfg).best);
    }
    for (const auto& key : out.selections) out.percent[key] += 100.0 / replicates;
    return out;
}

}  // namespace rhlp
