#include "rhlp/core.hpp"

#include "rhlp/errors.hpp"
#include "rhlp/random.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <numeric>

namespace rhlp {

std::uint64_t seed_key(double v) noexcept { return std::bit_cast<std::uint64_t>(v); }

Dataset::Dataset(std::vector<double> t, std::vector<double> x) {
    if (t.size() != x.size())
        throw LengthMismatch("dataset: t has " + std::to_string(t.size()) + " values, x has " +
                             std::to_string(x.size()));
    if (t.empty()) throw InvalidArgument("dataset: no observations");
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!std::isfinite(t[i]) || !std::isfinite(x[i]))
            throw InvalidArgument("dataset: non-finite value at index " + std::to_string(i));
    }
    if (std::is_sorted(t.begin(), t.end())) {
        t_ = std::move(t);
        x_ = std::move(x);
        return;
    }
    std::vector<std::size_t> order(t.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return t[a] < t[b]; });
    t_.reserve(t.size());
    x_.reserve(x.size());
    for (auto i : order) {
        t_.push_back(t[i]);
        x_.push_back(x[i]);
    }
}

Dataset Dataset::replicated(int copies) const {
    std::vector<double> t, x;
    t.reserve(size() * copies);
    x.reserve(size() * copies);
    for (std::size_t i = 0; i < size(); ++i)
        for (int c = 0; c < copies; ++c) {
            t.push_back(t_[i]);
            x.push_back(x_[i]);
        }
    return {std::move(t), std::move(x)};
}

GateWeights::GateWeights(int components) : w_(Eigen::MatrixXd::Zero(components, 2)) {
    if (components < 1) throw InvalidArgument("gate weights: need at least one component");
}

GateWeights::GateWeights(Eigen::MatrixXd w) : w_(std::move(w)) {
    if (w_.rows() < 1 || w_.cols() != 2) throw InvalidArgument("gate weights: expected K x 2 matrix");
    if (!w_.allFinite()) throw InvalidArgument("gate weights: non-finite entry");
    if (w_(w_.rows() - 1, 0) != 0.0 || w_(w_.rows() - 1, 1) != 0.0)
        throw InvalidArgument("gate weights: last row must be zero");
}

Eigen::VectorXd GateWeights::free_vector() const {
    const int free_rows = components() - 1;
    Eigen::VectorXd v(2 * free_rows);
    for (int k = 0; k < free_rows; ++k) {
        v(2 * k) = w_(k, 0);
        v(2 * k + 1) = w_(k, 1);
    }
    return v;
}

GateWeights GateWeights::from_free_vector(const Eigen::VectorXd& v) {
    if (v.size() % 2 != 0) throw InvalidArgument("gate weights: free vector must have even length");
    const int free_rows = static_cast<int>(v.size() / 2);
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(free_rows + 1, 2);
    for (int k = 0; k < free_rows; ++k) {
        w(k, 0) = v(2 * k);
        w(k, 1) = v(2 * k + 1);
    }
    return GateWeights(std::move(w));
}

void RhlpParams::validate() const {
    if (beta.rows() < 1 || beta.cols() < 1) throw InvalidArgument("params: empty beta");
    if (w.components() != beta.rows())
        throw InvalidArgument("params: gate rows (" + std::to_string(w.components()) +
                              ") != beta rows (" + std::to_string(beta.rows()) + ")");
    if (!beta.allFinite()) throw InvalidArgument("params: non-finite beta");
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw InvalidArgument("params: sigma2 must be positive");
}

Eigen::VectorXd polynomial_basis(double t, int degree) {
    Eigen::VectorXd b(degree + 1);
    double v = 1.0;
    for (int j = 0; j <= degree; ++j) {
        b(j) = v;
        v *= t;
    }
    return b;
}

Eigen::MatrixXd design_matrix(std::span<const double> t, int degree) {
    Eigen::MatrixXd T(static_cast<Eigen::Index>(t.size()), degree + 1);
    for (std::size_t i = 0; i < t.size(); ++i) {
        double v = 1.0;
        for (int j = 0; j <= degree; ++j) {
            T(static_cast<Eigen::Index>(i), j) = v;
            v *= t[i];
        }
    }
    return T;
}

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((v.array() - m).exp().sum());
}

Eigen::VectorXd log_gate_proportions(double t, const GateWeights& w) {
    const auto& m = w.matrix();
    Eigen::VectorXd logits = m.col(0) + t * m.col(1);
    return logits.array() - log_sum_exp(logits);
}

Eigen::VectorXd gate_proportions(double t, const GateWeights& w) {
    const auto& m = w.matrix();
    Eigen::VectorXd logits = m.col(0) + t * m.col(1);
    Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp();
    return e / e.sum();
}

double regression_mean(double t, const RhlpParams& params) {
    const Eigen::VectorXd pi = gate_proportions(t, params.w);
    const Eigen::VectorXd means = params.beta * polynomial_basis(t, params.degree());
    return pi.dot(means);
}

namespace {

double normal_logpdf(double x, double mean, double var) {
    const double r = x - mean;
    return -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * r * r / var;
}

}  // namespace

double component_logpdf(double x, double t, int k, const RhlpParams& params) {
    const double mean = params.beta.row(k).dot(polynomial_basis(t, params.degree()));
    return normal_logpdf(x, mean, params.sigma2);
}

double mixture_logpdf(double x, double t, const RhlpParams& params) {
    const Eigen::VectorXd basis = polynomial_basis(t, params.degree());
    const Eigen::VectorXd means = params.beta * basis;
    Eigen::VectorXd terms = log_gate_proportions(t, params.w);
    for (Eigen::Index k = 0; k < terms.size(); ++k) terms(k) += normal_logpdf(x, means(k), params.sigma2);
    return log_sum_exp(terms);
}

double log_likelihood(const Dataset& data, const RhlpParams& params) {
    double total = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) total += mixture_logpdf(data.x(i), data.t(i), params);
    return total;
}

Eigen::VectorXd polynomial_in_original_scale(const Eigen::VectorXd& c, double offset, double scale) {
    // c_j ((t - offset)/scale)^j = c_j scale^-j sum_m binom(j,m) t^m (-offset)^(j-m)
    const Eigen::Index n = c.size();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double cj = c(j) / std::pow(scale, static_cast<double>(j));
        double binom = 1.0;
        for (Eigen::Index m = 0; m <= j; ++m) {
            out(m) += cj * binom * std::pow(-offset, static_cast<double>(j - m));
            binom = binom * static_cast<double>(j - m) / static_cast<double>(m + 1);
        }
    }
    return out;
}

RhlpParams params_in_original_scale(const RhlpParams& params, double offset, double scale) {
    RhlpParams out;
    out.sigma2 = params.sigma2;
    out.beta.resize(params.beta.rows(), params.beta.cols());
    for (Eigen::Index k = 0; k < params.beta.rows(); ++k)
        out.beta.row(k) = polynomial_in_original_scale(params.beta.row(k).transpose(), offset, scale).transpose();
    Eigen::MatrixXd w(params.w.components(), 2);
    for (int k = 0; k < params.w.components(); ++k) {
        w(k, 1) = params.w(k, 1) / scale;
        w(k, 0) = params.w(k, 0) - params.w(k, 1) * offset / scale;
    }
    out.w = GateWeights(std::move(w));
    return out;
}

}  // namespace rhlp
