#include "rhlp/hmm.hpp"

#include "rhlp/errors.hpp"
#include "rhlp/parallel.hpp"
#include "rhlp/wls.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

namespace rhlp {

void HmmRegParams::validate() const {
    const Eigen::Index K = beta.rows();
    if (K < 1 || initial.size() != K || trans.rows() != K || trans.cols() != K)
        throw InvalidArgument("hmm params: inconsistent shapes");
    if (!initial.allFinite() || !trans.allFinite() || !beta.allFinite())
        throw InvalidArgument("hmm params: non-finite entry");
    if (!(sigma2 > 0.0)) throw InvalidArgument("hmm params: sigma2 must be positive");
}

namespace {

// n x K log emission densities.
Eigen::MatrixXd log_emissions(const Eigen::MatrixXd& T, const Eigen::VectorXd& x, const HmmRegParams& params) {
    const Eigen::MatrixXd means = T * params.beta.transpose();
    const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi * params.sigma2);
    return (log_norm - ((means.colwise() - x).array().square() / (2.0 * params.sigma2))).matrix();
}

// Emissions shifted by their row maximum; shift returned per row.
struct ScaledEmissions {
    Eigen::MatrixXd value;
    Eigen::VectorXd shift;
};

ScaledEmissions scaled_emissions(const Eigen::MatrixXd& T, const Eigen::VectorXd& x, const HmmRegParams& params) {
    ScaledEmissions e;
    const Eigen::MatrixXd le = log_emissions(T, x, params);
    e.shift = le.rowwise().maxCoeff();
    e.value = (le.colwise() - e.shift).array().exp();
    return e;
}

struct Forward {
    Eigen::MatrixXd alpha;  // normalized, rows sum to 1
    Eigen::VectorXd scale;  // per-step normalizers (of shifted emissions)
    double loglik = 0.0;
};

Forward forward_pass(const ScaledEmissions& e, const HmmRegParams& params) {
    const Eigen::Index n = e.value.rows();
    const Eigen::Index K = e.value.cols();
    Forward f;
    f.alpha.resize(n, K);
    f.scale.resize(n);
    Eigen::RowVectorXd a = params.initial.transpose().cwiseProduct(e.value.row(0));
    for (Eigen::Index i = 0;; ++i) {
        const double c = a.sum();
        if (!(c > 0.0) || !std::isfinite(c)) throw DegenerateComponent(0, 0.0);
        f.alpha.row(i) = a / c;
        f.scale(i) = c;
        f.loglik += std::log(c) + e.shift(i);
        if (i + 1 == n) break;
        a = (f.alpha.row(i) * params.trans).cwiseProduct(e.value.row(i + 1));
    }
    return f;
}

struct Problem {
    const Dataset& data;
    Eigen::MatrixXd T;
    Eigen::VectorXd x;
    Problem(const Dataset& d, int p) : data(d), T(design_matrix(d.t(), p)), x(d.x_vector()) {}
};

ForwardBackward forward_backward_impl(const Problem& pb, const HmmRegParams& params) {
    const ScaledEmissions e = scaled_emissions(pb.T, pb.x, params);
    Forward f = forward_pass(e, params);
    const Eigen::Index n = e.value.rows();
    const Eigen::Index K = e.value.cols();

    ForwardBackward fb;
    fb.loglik = f.loglik;
    fb.smoothed.resize(n, K);
    fb.expected_transitions = Eigen::MatrixXd::Zero(K, K);
    Eigen::RowVectorXd b = Eigen::RowVectorXd::Ones(K);
    fb.smoothed.row(n - 1) = f.alpha.row(n - 1);
    for (Eigen::Index i = n - 2; i >= 0; --i) {
        const Eigen::RowVectorXd eb = e.value.row(i + 1).cwiseProduct(b);
        // xi_i(k, l) = alpha_i(k) A(k, l) e_{i+1}(l) b_{i+1}(l) / c_{i+1}
        fb.expected_transitions.array() +=
            (f.alpha.row(i).transpose() * eb).array() * params.trans.array() / f.scale(i + 1);
        b = (params.trans * eb.transpose()).transpose() / f.scale(i + 1);
        Eigen::RowVectorXd g = f.alpha.row(i).cwiseProduct(b);
        fb.smoothed.row(i) = g / g.sum();
    }
    fb.filtered = std::move(f.alpha);
    return fb;
}

HmmRegParams initial_params(const Dataset& data, int K, int p, const HmmOptions& options, Rng& rng) {
    const RhlpParams seed = initialize(data, K, p, rng);
    HmmRegParams params;
    params.beta = seed.beta;
    params.sigma2 = seed.sigma2;
    params.trans = Eigen::MatrixXd::Zero(K, K);
    if (K == 1) {
        params.trans(0, 0) = 1.0;
        params.initial = Eigen::VectorXd::Ones(1);
        return params;
    }
    if (options.left_to_right) {
        params.initial = Eigen::VectorXd::Zero(K);
        params.initial(0) = 1.0;
        for (int k = 0; k < K; ++k) {
            if (k + 1 < K) {
                params.trans(k, k) = options.self_transition;
                params.trans(k, k + 1) = 1.0 - options.self_transition;
            } else {
                params.trans(k, k) = 1.0;
            }
        }
    } else {
        params.initial = Eigen::VectorXd::Constant(K, 1.0 / K);
        const double off = (1.0 - options.self_transition) / (K - 1);
        params.trans.setConstant(off);
        params.trans.diagonal().setConstant(options.self_transition);
    }
    return params;
}

HmmRegParams m_step(const Problem& pb, const ForwardBackward& fb, const HmmRegParams& prev) {
    const Eigen::Index K = prev.components();
    const Eigen::Index n = pb.T.rows();
    HmmRegParams next;
    next.initial = fb.smoothed.row(0).transpose();
    next.initial /= next.initial.sum();
    next.trans = prev.trans;
    for (Eigen::Index k = 0; k < K; ++k) {
        const double row = fb.expected_transitions.row(k).sum();
        if (row > 0.0) next.trans.row(k) = fb.expected_transitions.row(k) / row;
    }
    next.beta.resize(K, pb.T.cols());
    double sse = 0.0;
    for (Eigen::Index k = 0; k < K; ++k) {
        const double mass = fb.smoothed.col(k).sum();
        if (!(mass >= kDegenerateMass)) throw DegenerateComponent(static_cast<int>(k), mass);
        const Eigen::VectorXd b = weighted_least_squares(pb.T, fb.smoothed.col(k), pb.x);
        next.beta.row(k) = b.transpose();
        sse += (fb.smoothed.col(k).array() * (pb.x - pb.T * b).array().square()).sum();
    }
    next.sigma2 = std::max(sse / static_cast<double>(n), kSigma2Floor);
    return next;
}

HmmFit run_baum_welch(const Problem& pb, int K, int p, const FitConfig& config, const HmmOptions& options,
                      Rng& rng) {
    HmmFit run;
    run.params = initial_params(pb.data, K, p, options, rng);
    ForwardBackward fb = forward_backward_impl(pb, run.params);
    run.loglik_trace.push_back(fb.loglik);
    for (int iter = 1; iter <= config.em_max_iter; ++iter) {
        run.params = m_step(pb, fb, run.params);
        const double prev = fb.loglik;
        fb = forward_backward_impl(pb, run.params);
        run.loglik_trace.push_back(fb.loglik);
        run.n_iter = iter;
        const double rel = prev != 0.0 ? std::abs((fb.loglik - prev) / prev) : std::abs(fb.loglik - prev);
        if (rel < config.em_tol) {
            run.converged = true;
            break;
        }
    }
    return run;
}

}  // namespace

ForwardBackward hmm_forward_backward(const Dataset& data, const HmmRegParams& params) {
    params.validate();
    return forward_backward_impl(Problem(data, params.degree()), params);
}

double hmm_log_likelihood(const Dataset& data, const HmmRegParams& params) {
    params.validate();
    const Problem pb(data, params.degree());
    return forward_pass(scaled_emissions(pb.T, pb.x, params), params).loglik;
}

Eigen::MatrixXd hmm_filter(const Dataset& data, const HmmRegParams& params) {
    params.validate();
    const Problem pb(data, params.degree());
    return forward_pass(scaled_emissions(pb.T, pb.x, params), params).alpha;
}

std::vector<double> hmm_filter_predict(const Dataset& data, const HmmRegParams& params) {
    const Eigen::MatrixXd omega = hmm_filter(data, params);
    const Eigen::MatrixXd T = design_matrix(data.t(), params.degree());
    const Eigen::VectorXd pred = (omega.array() * (T * params.beta.transpose()).array()).rowwise().sum();
    return {pred.data(), pred.data() + pred.size()};
}

HmmFit fit_hmm_regression(const Dataset& data, int components, int degree, const FitConfig& config,
                          const HmmOptions& options) {
    config.validate();
    if (components < 1 || degree < 0) throw InvalidArgument("fit_hmm_regression: need K >= 1 and p >= 0");
    const std::size_t need = static_cast<std::size_t>(components) * (static_cast<std::size_t>(degree) + 2);
    if (data.size() < need) throw TooFewPoints(data.size(), need);

    const Problem pb(data, degree);
    std::vector<std::optional<HmmFit>> runs(static_cast<std::size_t>(config.n_starts));
    parallel_for(runs.size(), config.threads, [&](std::size_t s) {
        Rng rng = make_stream(config.seed, {static_cast<std::uint64_t>(s)});
        for (int attempt = 0; attempt <= config.max_restarts; ++attempt) {
            try {
                runs[s] = run_baum_welch(pb, components, degree, config, options, rng);
                return;
            } catch (const DegenerateComponent&) {
            }
        }
    });

    int best = -1;
    for (std::size_t s = 0; s < runs.size(); ++s) {
        if (!runs[s] || !std::isfinite(runs[s]->loglik())) continue;
        if (best < 0 || runs[s]->loglik() > runs[best]->loglik()) best = static_cast<int>(s);
    }
    if (best < 0) throw AllStartsFailed("hmm: all starts failed with degenerate states");
    HmmFit out = std::move(*runs[best]);
    out.best_start_index = best;
    return out;
}

}  // namespace rhlp
