#include "rhlp/confidence.hpp"

#include "rhlp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace rhlp {

int parameter_dimension(int components, int degree) noexcept {
    return curve_parameter_dimension(components, degree) + 1;
}

Eigen::VectorXd parameter_vector(const RhlpParams& params) {
    const int K = params.components();
    const int q = params.degree() + 1;
    Eigen::VectorXd v(parameter_dimension(K, params.degree()));
    int j = 0;
    for (int k = 0; k < K; ++k)
        for (int c = 0; c < q; ++c) v(j++) = params.beta(k, c);
    for (int k = 0; k + 1 < K; ++k) {
        v(j++) = params.w(k, 0);
        v(j++) = params.w(k, 1);
    }
    v(j) = params.sigma2;
    return v;
}

RhlpParams params_from_vector(const Eigen::VectorXd& v, int components, int degree) {
    if (v.size() != parameter_dimension(components, degree))
        throw LengthMismatch("params_from_vector: wrong coordinate count");
    const int q = degree + 1;
    RhlpParams out;
    out.beta.resize(components, q);
    int j = 0;
    for (int k = 0; k < components; ++k)
        for (int c = 0; c < q; ++c) out.beta(k, c) = v(j++);
    out.w = GateWeights::from_free_vector(v.segment(j, 2 * (components - 1)));
    j += 2 * (components - 1);
    out.sigma2 = v(j);
    return out;
}

Eigen::VectorXd f_gradient(double t, const RhlpParams& params) {
    const int K = params.components();
    const int p = params.degree();
    const Eigen::VectorXd basis = polynomial_basis(t, p);
    const Eigen::VectorXd pi = gate_proportions(t, params.w);
    const Eigen::VectorXd mu = params.beta * basis;
    const double f = pi.dot(mu);

    Eigen::VectorXd g = Eigen::VectorXd::Zero(parameter_dimension(K, p));
    int j = 0;
    for (int k = 0; k < K; ++k, j += p + 1) g.segment(j, p + 1) = pi(k) * basis;
    // sum_l pi_k (delta_kl - pi_l) mu_l = pi_k (mu_k - f)
    for (int k = 0; k + 1 < K; ++k) {
        const double c = pi(k) * (mu(k) - f);
        g(j++) = c;
        g(j++) = c * t;
    }
    return g;
}

Eigen::VectorXd observation_score(double x, double t, const RhlpParams& params) {
    const int K = params.components();
    const int p = params.degree();
    const double var = params.sigma2;
    const Eigen::VectorXd basis = polynomial_basis(t, p);
    const Eigen::VectorXd log_pi = log_gate_proportions(t, params.w);
    const Eigen::VectorXd r = x - (params.beta * basis).array();

    Eigen::VectorXd terms = log_pi.array() - 0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * r.array().square() / var;
    const Eigen::VectorXd tau = (terms.array() - log_sum_exp(terms)).exp();

    Eigen::VectorXd s(parameter_dimension(K, p));
    int j = 0;
    for (int k = 0; k < K; ++k, j += p + 1) s.segment(j, p + 1) = (tau(k) * r(k) / var) * basis;
    for (int k = 0; k + 1 < K; ++k) {
        const double c = tau(k) - std::exp(log_pi(k));
        s(j++) = c;
        s(j++) = c * t;
    }
    s(j) = (tau.array() * (r.array().square() / (2.0 * var * var) - 1.0 / (2.0 * var))).sum();
    return s;
}

namespace {

Eigen::VectorXd total_score(const Dataset& data, const RhlpParams& params) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(parameter_dimension(params.components(), params.degree()));
    for (std::size_t i = 0; i < data.size(); ++i) g += observation_score(data.x(i), data.t(i), params);
    return g;
}

}  // namespace

Eigen::MatrixXd fisher_information(const Dataset& data, const RhlpParams& params, FisherEstimator estimator) {
    params.validate();
    const int K = params.components();
    const int p = params.degree();
    const int dim = parameter_dimension(K, p);
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(dim, dim);

    if (estimator == FisherEstimator::OuterProduct) {
        for (std::size_t i = 0; i < data.size(); ++i) {
            const Eigen::VectorXd s = observation_score(data.x(i), data.t(i), params);
            info.selfadjointView<Eigen::Lower>().rankUpdate(s);
        }
        info.triangularView<Eigen::StrictlyUpper>() = info.transpose();
        return info;
    }

    const Eigen::VectorXd phi = parameter_vector(params);
    for (int j = 0; j < dim; ++j) {
        double h = 1e-5 * (1.0 + std::abs(phi(j)));
        if (j == dim - 1) h = std::min(h, 0.5 * phi(j));
        Eigen::VectorXd up = phi, down = phi;
        up(j) += h;
        down(j) -= h;
        const Eigen::VectorXd g_up = total_score(data, params_from_vector(up, K, p));
        const Eigen::VectorXd g_down = total_score(data, params_from_vector(down, K, p));
        info.col(j) = -(g_up - g_down) / (2.0 * h);
    }
    return 0.5 * (info + info.transpose());
}

CurveVariance::CurveVariance(const Dataset& data, const RhlpParams& params, FisherEstimator estimator)
    : params_(params), n_(data.size()), information_(fisher_information(data, params, estimator)) {
    // The sigma2 coordinate never enters D, but stays in the inversion so the
    // beta/sigma2 cross terms are accounted for.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(information_);
    const Eigen::VectorXd& lambda = eig.eigenvalues();
    const double max_l = lambda.maxCoeff();
    const double min_l = lambda.minCoeff();
    pseudo_inverse_ = !(min_l > 0.0) || max_l / min_l > 1e12;
    const double cutoff = pseudo_inverse_ ? std::max(max_l, 0.0) * 1e-12 : 0.0;
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(lambda.size());
    for (Eigen::Index i = 0; i < lambda.size(); ++i)
        if (lambda(i) > cutoff) inv(i) = 1.0 / lambda(i);
    covariance_ = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

double CurveVariance::operator()(double t) const {
    // (1/n) D' Ibar^-1 D with Ibar = I / n reduces to D' I^-1 D.
    const Eigen::VectorXd d = f_gradient(t, params_);
    return std::max(0.0, d.dot(covariance_ * d));
}

double pointwise_variance(double t, const Dataset& data, const RhlpParams& params) {
    return CurveVariance(data, params)(t);
}

double regularized_gamma_p(double a, double x) {
    if (!(a > 0.0) || x < 0.0) throw InvalidArgument("regularized_gamma_p: need a > 0, x >= 0");
    if (x == 0.0) return 0.0;
    const double log_prefix = -x + a * std::log(x) - std::lgamma(a);
    constexpr double eps = 1e-16;
    if (x < a + 1.0) {
        // Series: P = e^-x x^a / Gamma(a+1) * sum x^n / ((a+1)...(a+n))
        double term = 1.0 / a, sum = term, ap = a;
        for (int n = 0; n < 10000; ++n) {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if (std::abs(term) < std::abs(sum) * eps) break;
        }
        return std::min(1.0, sum * std::exp(log_prefix));
    }
    // Continued fraction for Q (modified Lentz).
    constexpr double tiny = 1e-300;
    double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
    for (int i = 1; i < 10000; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) break;
    }
    return std::max(0.0, 1.0 - std::exp(log_prefix) * h);
}

double chi_square_quantile(int dof, double prob) {
    if (dof < 1) throw InvalidArgument("chi_square_quantile: dof must be >= 1");
    if (!(prob > 0.0 && prob < 1.0)) throw InvalidArgument("chi_square_quantile: prob must be in (0, 1)");
    const double a = 0.5 * dof;
    auto cdf = [a](double x) { return regularized_gamma_p(a, 0.5 * x); };
    double lo = 0.0, hi = std::max(1.0, static_cast<double>(dof));
    while (cdf(hi) < prob) {
        lo = hi;
        hi *= 2.0;
    }
    while (hi - lo > 1e-10) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        (cdf(mid) < prob ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

ConfidenceBand confidence_band(std::span<const double> grid, const Dataset& data, const RhlpParams& params,
                               double alpha, FisherEstimator estimator) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("confidence_band: alpha must be in (0, 1)");
    const CurveVariance variance(data, params, estimator);
    ConfidenceBand band;
    band.alpha = alpha;
    band.dof = curve_parameter_dimension(params.components(), params.degree());
    const double radius = std::sqrt(chi_square_quantile(band.dof, 1.0 - alpha));
    band.ts.assign(grid.begin(), grid.end());
    band.center.reserve(grid.size());
    band.half_width.reserve(grid.size());
    for (double t : grid) {
        band.center.push_back(regression_mean(t, params));
        band.half_width.push_back(radius * std::sqrt(variance(t)));
    }
    return band;
}

}  // namespace rhlp
