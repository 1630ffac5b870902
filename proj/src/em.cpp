#include "rhlp/em.hpp"

#include "rhlp/errors.hpp"
#include "rhlp/parallel.hpp"
#include "rhlp/wls.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <limits>
#include <numbers>

namespace rhlp {

void FitConfig::validate() const {
    if (n_starts < 1) throw InvalidArgument("fit config: n_starts must be >= 1");
    if (!(em_tol > 0.0) || !(irls_tol > 0.0)) throw InvalidArgument("fit config: tolerances must be > 0");
    if (em_max_iter < 1 || irls_max_iter < 1) throw InvalidArgument("fit config: iteration caps must be >= 1");
    if (gem_irls_cap && *gem_irls_cap < 1) throw InvalidArgument("fit config: gem_irls_cap must be >= 1");
    if (max_restarts < 0) throw InvalidArgument("fit config: max_restarts must be >= 0");
}

namespace {

// Cached per-dataset quantities shared by every EM iteration.
struct Problem {
    const Dataset& data;
    int degree;
    Eigen::MatrixXd T;
    Eigen::VectorXd x;

    Problem(const Dataset& d, int p) : data(d), degree(p), T(design_matrix(d.t(), p)), x(d.x_vector()) {}
    Eigen::Index n() const { return T.rows(); }
};

// n x K matrix of log pi_k(t_i).
Eigen::MatrixXd log_gates(std::span<const double> t, const GateWeights& w) {
    const auto n = static_cast<Eigen::Index>(t.size());
    const auto& m = w.matrix();
    const Eigen::Index K = m.rows();
    Eigen::MatrixXd out(n, K);
    for (Eigen::Index i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (Eigen::Index k = 0; k < K; ++k) {
            out(i, k) = m(k, 0) + m(k, 1) * t[i];
            mx = std::max(mx, out(i, k));
        }
        double s = 0.0;
        for (Eigen::Index k = 0; k < K; ++k) s += std::exp(out(i, k) - mx);
        const double lse = mx + std::log(s);
        for (Eigen::Index k = 0; k < K; ++k) out(i, k) -= lse;
    }
    return out;
}

EStepResult e_step_impl(const Problem& pb, const RhlpParams& params) {
    const Eigen::Index n = pb.n();
    const Eigen::Index K = params.components();
    Eigen::MatrixXd logp = log_gates(pb.data.t(), params.w);
    const Eigen::MatrixXd means = pb.T * params.beta.transpose();
    const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi * params.sigma2);
    const double inv_two_var = 0.5 / params.sigma2;

    EStepResult out;
    out.tau.tau.resize(n, K);
    double loglik = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (Eigen::Index k = 0; k < K; ++k) {
            const double r = pb.x(i) - means(i, k);
            logp(i, k) += log_norm - r * r * inv_two_var;
            mx = std::max(mx, logp(i, k));
        }
        double s = 0.0;
        for (Eigen::Index k = 0; k < K; ++k) s += std::exp(logp(i, k) - mx);
        const double lse = mx + std::log(s);
        loglik += lse;
        for (Eigen::Index k = 0; k < K; ++k) out.tau.tau(i, k) = std::exp(logp(i, k) - lse);
    }
    out.loglik = loglik;
    return out;
}

Eigen::MatrixXd m_step_beta_impl(const Problem& pb, const Responsibilities& tau) {
    const Eigen::Index K = tau.components();
    Eigen::MatrixXd beta(K, pb.degree + 1);
    for (Eigen::Index k = 0; k < K; ++k) {
        const double mass = tau.tau.col(k).sum();
        if (!(mass >= kDegenerateMass)) throw DegenerateComponent(static_cast<int>(k), mass);
        beta.row(k) = weighted_least_squares(pb.T, tau.tau.col(k), pb.x).transpose();
    }
    return beta;
}

double m_step_sigma_impl(const Problem& pb, const Responsibilities& tau, const Eigen::MatrixXd& beta) {
    const Eigen::MatrixXd means = pb.T * beta.transpose();
    const Eigen::MatrixXd resid2 = (means.colwise() - pb.x).array().square();
    const double s2 = (resid2.array() * tau.tau.array()).sum() / static_cast<double>(pb.n());
    return std::max(s2, kSigma2Floor);
}

struct GateDerivatives {
    double objective = 0.0;
    Eigen::VectorXd gradient;
    Eigen::MatrixXd hessian;
};

// Q1 together with its gradient and Hessian over the free rows. Row sums of
// tau enter explicitly, so unnormalized weights are handled too.
GateDerivatives gate_derivatives(std::span<const double> t, const Responsibilities& tau, const GateWeights& w,
                                 bool want_hessian) {
    const Eigen::Index n = tau.rows();
    const Eigen::Index K = tau.components();
    const Eigen::Index F = K - 1;
    const Eigen::MatrixXd logp = log_gates(t, w);

    GateDerivatives d;
    d.gradient = Eigen::VectorXd::Zero(2 * F);
    if (want_hessian) d.hessian = Eigen::MatrixXd::Zero(2 * F, 2 * F);
    // Per (k, l) block: sums of c, c t, c t^2 with c = s_i pi_k (delta_kl - pi_l).
    Eigen::MatrixXd h0, h1, h2;
    if (want_hessian) {
        h0 = Eigen::MatrixXd::Zero(F, F);
        h1 = Eigen::MatrixXd::Zero(F, F);
        h2 = Eigen::MatrixXd::Zero(F, F);
    }
    Eigen::VectorXd pi(K);
    for (Eigen::Index i = 0; i < n; ++i) {
        double s = 0.0;
        for (Eigen::Index k = 0; k < K; ++k) {
            const double tk = tau.tau(i, k);
            s += tk;
            if (tk != 0.0) d.objective += tk * logp(i, k);
            pi(k) = std::exp(logp(i, k));
        }
        const double ti = t[i];
        for (Eigen::Index k = 0; k < F; ++k) {
            const double r = tau.tau(i, k) - s * pi(k);
            d.gradient(2 * k) += r;
            d.gradient(2 * k + 1) += r * ti;
        }
        if (!want_hessian) continue;
        for (Eigen::Index k = 0; k < F; ++k) {
            for (Eigen::Index l = k; l < F; ++l) {
                const double c = s * pi(k) * ((k == l ? 1.0 : 0.0) - pi(l));
                h0(k, l) += c;
                h1(k, l) += c * ti;
                h2(k, l) += c * ti * ti;
            }
        }
    }
    if (want_hessian) {
        for (Eigen::Index k = 0; k < F; ++k) {
            for (Eigen::Index l = k; l < F; ++l) {
                d.hessian(2 * k, 2 * l) = -h0(k, l);
                d.hessian(2 * k, 2 * l + 1) = -h1(k, l);
                d.hessian(2 * k + 1, 2 * l) = -h1(k, l);
                d.hessian(2 * k + 1, 2 * l + 1) = -h2(k, l);
            }
        }
        d.hessian.triangularView<Eigen::StrictlyLower>() = d.hessian.transpose();
    }
    return d;
}

constexpr int kMaxHalvings = 20;
constexpr double kDampings[] = {0.0, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2};

}  // namespace

EStepResult e_step(const Dataset& data, const RhlpParams& params) {
    params.validate();
    return e_step_impl(Problem(data, params.degree()), params);
}

Eigen::MatrixXd m_step_beta(const Dataset& data, const Responsibilities& tau, int degree) {
    if (static_cast<std::size_t>(tau.rows()) != data.size())
        throw LengthMismatch("m_step_beta: responsibilities rows != n");
    return m_step_beta_impl(Problem(data, degree), tau);
}

double m_step_sigma(const Dataset& data, const Responsibilities& tau, const Eigen::MatrixXd& beta) {
    if (static_cast<std::size_t>(tau.rows()) != data.size() || tau.components() != beta.rows())
        throw LengthMismatch("m_step_sigma: shape mismatch");
    return m_step_sigma_impl(Problem(data, static_cast<int>(beta.cols()) - 1), tau, beta);
}

double gating_objective(std::span<const double> t, const Responsibilities& tau, const GateWeights& w) {
    return gate_derivatives(t, tau, w, false).objective;
}

Eigen::VectorXd gating_gradient(std::span<const double> t, const Responsibilities& tau, const GateWeights& w) {
    return gate_derivatives(t, tau, w, false).gradient;
}

Eigen::MatrixXd gating_hessian(std::span<const double> t, const Responsibilities& tau, const GateWeights& w) {
    return gate_derivatives(t, tau, w, true).hessian;
}

IrlsResult irls_fit_gates(const Dataset& data, const Responsibilities& tau, const GateWeights& w_init,
                          double tol, int max_iter) {
    if (tau.components() != w_init.components() || static_cast<std::size_t>(tau.rows()) != data.size())
        throw LengthMismatch("irls: responsibilities do not match data / gate shape");
    const auto t = data.t();
    IrlsResult out{w_init, 0.0, 0, false, false};
    if (w_init.components() == 1) {
        out.objective = gating_objective(t, tau, w_init);
        out.converged = true;
        return out;
    }

    Eigen::VectorXd v = w_init.free_vector();
    GateDerivatives cur = gate_derivatives(t, tau, w_init, true);
    for (int it = 0; it < max_iter; ++it) {
        out.iterations = it + 1;
        bool factored = false;
        bool improved = false;
        Eigen::VectorXd v_next;
        double q_next = cur.objective;
        // Newton direction on -H (positive semidefinite), damped when singular.
        for (double lambda : kDampings) {
            Eigen::MatrixXd neg_h = -cur.hessian;
            neg_h.diagonal().array() += lambda;
            Eigen::LLT<Eigen::MatrixXd> llt(neg_h);
            if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-14)) continue;
            factored = true;
            const Eigen::VectorXd direction = llt.solve(cur.gradient);
            if (!direction.allFinite()) continue;
            double step = 1.0;
            for (int h = 0; h <= kMaxHalvings; ++h, step *= 0.5) {
                Eigen::VectorXd cand = v + step * direction;
                const double q = gating_objective(t, tau, GateWeights::from_free_vector(cand));
                if (std::isfinite(q) && q >= cur.objective) {
                    v_next = std::move(cand);
                    q_next = q;
                    improved = true;
                    break;
                }
            }
            if (improved) break;
        }
        if (!factored) {
            out.singular = true;
            break;
        }
        if (!improved) {
            // No ascent direction left at working precision.
            out.converged = true;
            break;
        }
        const double q_prev = cur.objective;
        v = std::move(v_next);
        const GateWeights w_next = GateWeights::from_free_vector(v);
        const double rel = q_prev != 0.0 ? std::abs((q_next - q_prev) / q_prev) : std::abs(q_next - q_prev);
        if (rel < tol || it + 1 == max_iter) {
            cur.objective = q_next;
            out.converged = rel < tol;
            break;
        }
        cur = gate_derivatives(t, tau, w_next, true);
    }
    out.w = GateWeights::from_free_vector(v);
    out.objective = cur.objective;
    return out;
}

namespace {
constexpr double kBlockShape = 4.0;
}  // namespace

RhlpParams initialize(const Dataset& data, int components, int degree, Rng& rng) {
    if (components < 1 || degree < 0) throw InvalidArgument("initialize: need K >= 1 and p >= 0");
    const std::size_t n = data.size();
    const std::size_t min_block = static_cast<std::size_t>(degree) + 2;
    const std::size_t need = static_cast<std::size_t>(components) * min_block;
    if (n < need) throw TooFewPoints(n, need);

    // Block sizes min_block + slack * g_k / sum(g), g_k ~ Gamma(kBlockShape):
    // random partitions that stay near-balanced.
    const std::size_t slack = n - need;
    std::gamma_distribution<double> gamma(kBlockShape, 1.0);
    std::vector<double> g(static_cast<std::size_t>(components));
    for (double& v : g) v = gamma(rng);
    const double total = std::accumulate(g.begin(), g.end(), 0.0);
    std::vector<std::size_t> starts(static_cast<std::size_t>(components) + 1, 0);
    double cum = 0.0;
    for (int k = 0; k < components; ++k) {
        cum += g[k];
        const auto extra = k + 1 < components ? static_cast<std::size_t>(std::llround(slack * cum / total)) : slack;
        starts[k + 1] = (k + 1) * min_block + std::min(extra, slack);
    }

    const Eigen::MatrixXd T = design_matrix(data.t(), degree);
    const Eigen::VectorXd x = data.x_vector();
    RhlpParams params;
    params.beta.resize(components, degree + 1);
    double sse = 0.0;
    for (int k = 0; k < components; ++k) {
        const auto first = static_cast<Eigen::Index>(starts[k]);
        const auto len = static_cast<Eigen::Index>(starts[k + 1] - starts[k]);
        const Eigen::VectorXd b = ordinary_least_squares(T.middleRows(first, len), x.segment(first, len));
        params.beta.row(k) = b.transpose();
        sse += (x.segment(first, len) - T.middleRows(first, len) * b).squaredNorm();
    }
    params.sigma2 = std::max(sse / static_cast<double>(n), kSigma2Floor);

    // Logit k = a_k + s k t, with neighbouring logits crossing midway between blocks.
    const double range = data.t(n - 1) - data.t(0);
    const double s = 30.0 / (range > 0.0 ? range : 1.0);
    Eigen::MatrixXd w(components, 2);
    double a = 0.0;
    for (int k = 0; k < components; ++k) {
        w(k, 0) = a;
        w(k, 1) = s * k;
        if (k + 1 < components) {
            const double cut = 0.5 * (data.t(starts[k + 1] - 1) + data.t(starts[k + 1]));
            a -= s * cut;
        }
    }
    const Eigen::RowVector2d last = w.row(components - 1);
    w.rowwise() -= last;
    params.w = GateWeights(std::move(w));
    return params;
}

namespace {

GateWeights random_gate_weights(int components, Rng& rng) {
    std::normal_distribution<double> noise(0.0, 0.5);
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(components, 2);
    for (int k = 0; k + 1 < components; ++k) {
        w(k, 0) = noise(rng);
        w(k, 1) = noise(rng);
    }
    return GateWeights(std::move(w));
}

RunResult run_em(const Problem& pb, int components, int degree, const FitConfig& config, Rng& rng) {
    RunResult run;
    run.params = initialize(pb.data, components, degree, rng);
    EStepResult es = e_step_impl(pb, run.params);
    run.loglik_trace.push_back(es.loglik);
    const int irls_cap = config.gem_irls_cap.value_or(config.irls_max_iter);

    for (int iter = 1; iter <= config.em_max_iter; ++iter) {
        RhlpParams next;
        next.beta = m_step_beta_impl(pb, es.tau);
        next.sigma2 = m_step_sigma_impl(pb, es.tau, next.beta);

        const GateWeights& previous = run.params.w;
        const GateWeights start = iter == 1 ? random_gate_weights(components, rng) : previous;
        IrlsResult gates = irls_fit_gates(pb.data, es.tau, start, config.irls_tol, irls_cap);
        if (gates.singular) ++run.irls_warnings;
        // M-step must not lower Q1 below the previous gates (keeps EM ascent).
        if (iter == 1 && gates.objective < gating_objective(pb.data.t(), es.tau, previous)) {
            IrlsResult warm = irls_fit_gates(pb.data, es.tau, previous, config.irls_tol, irls_cap);
            if (warm.objective > gates.objective) gates = std::move(warm);
        }
        next.w = gates.objective >= gating_objective(pb.data.t(), es.tau, previous) ? gates.w : previous;

        run.params = std::move(next);
        const double prev_ll = es.loglik;
        es = e_step_impl(pb, run.params);
        run.loglik_trace.push_back(es.loglik);
        run.n_iter = iter;
        const double rel = prev_ll != 0.0 ? std::abs((es.loglik - prev_ll) / prev_ll) : std::abs(es.loglik - prev_ll);
        if (rel < config.em_tol) {
            run.converged = true;
            break;
        }
    }
    return run;
}

RunResult run_start(const Problem& pb, int components, int degree, const FitConfig& config, int start_index) {
    Rng rng = make_stream(config.seed, {static_cast<std::uint64_t>(start_index)});
    for (int attempt = 0;; ++attempt) {
        try {
            RunResult run = run_em(pb, components, degree, config, rng);
            run.restarts = attempt;
            return run;
        } catch (const DegenerateComponent&) {
            if (attempt >= config.max_restarts) throw;
        }
    }
}

}  // namespace

RunResult fit_single_start(const Dataset& data, int components, int degree, const FitConfig& config,
                           int start_index) {
    config.validate();
    const Problem pb(data, degree);
    return run_start(pb, components, degree, config, start_index);
}

FitResult fit(const Dataset& data, int components, int degree, const FitConfig& config) {
    config.validate();
    if (components < 1 || degree < 0) throw InvalidArgument("fit: need K >= 1 and p >= 0");
    const std::size_t need = static_cast<std::size_t>(components) * (static_cast<std::size_t>(degree) + 2);
    if (data.size() < need) throw TooFewPoints(data.size(), need);

    const Problem pb(data, degree);
    std::vector<std::optional<RunResult>> runs(static_cast<std::size_t>(config.n_starts));
    parallel_for(runs.size(), config.threads, [&](std::size_t s) {
        try {
            runs[s] = run_start(pb, components, degree, config, static_cast<int>(s));
        } catch (const DegenerateComponent&) {
            runs[s].reset();
        }
    });

    FitResult out;
    out.start_logliks.assign(runs.size(), std::numeric_limits<double>::quiet_NaN());
    int best = -1;
    for (std::size_t s = 0; s < runs.size(); ++s) {
        if (!runs[s]) continue;
        const double ll = runs[s]->loglik_trace.back();
        out.start_logliks[s] = ll;
        if (!std::isfinite(ll)) continue;
        if (best < 0 || ll > runs[best]->loglik_trace.back()) best = static_cast<int>(s);
    }
    if (best < 0)
        throw AllStartsFailed("all " + std::to_string(config.n_starts) +
                              " starts failed with degenerate components");

    RunResult& run = *runs[best];
    out.params = std::move(run.params);
    out.loglik_trace = std::move(run.loglik_trace);
    out.n_iter = run.n_iter;
    out.converged = run.converged;
    out.best_start_index = best;

    EStepResult es = e_step_impl(pb, out.params);
    out.responsibilities = std::move(es.tau);
    const Eigen::Index n = pb.n();
    out.fitted.resize(n);
    out.map_labels.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        out.fitted[i] = regression_mean(data.t(i), out.params);
        Eigen::Index k;
        out.responsibilities.tau.row(i).maxCoeff(&k);
        out.map_labels[i] = static_cast<int>(k);
    }
    return out;
}

}  // namespace rhlp
