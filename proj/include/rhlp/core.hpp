#pragma once

// Regression with a hidden logistic process: K polynomial experts of degree p
// mixed by time-dependent softmax proportions, sharing one noise variance.
//
// Components are indexed 0..K-1 in code (1..K in documentation). The last
// gate row is pinned to zero to remove the softmax translation freedom.

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

namespace rhlp {

// Paired samples (t_i, x_i), sorted by t on construction.
class Dataset {
public:
    Dataset() = default;
    // Throws LengthMismatch / InvalidArgument on empty, unequal or non-finite input.
    Dataset(std::vector<double> t, std::vector<double> x);

    std::size_t size() const noexcept { return t_.size(); }
    std::span<const double> t() const noexcept { return t_; }
    std::span<const double> x() const noexcept { return x_; }
    double t(std::size_t i) const { return t_[i]; }
    double x(std::size_t i) const { return x_[i]; }
    Eigen::Map<const Eigen::VectorXd> x_vector() const {
        return {x_.data(), static_cast<Eigen::Index>(x_.size())};
    }

    // Each observation repeated `copies` times (adjacent, order preserved).
    Dataset replicated(int copies) const;

private:
    std::vector<double> t_;
    std::vector<double> x_;
};

// K x 2 matrix of logit coefficients; row k = (w_k0, w_k1). Last row is zero.
class GateWeights {
public:
    GateWeights() = default;
    explicit GateWeights(int components);
    // Throws InvalidArgument unless `w` is K x 2, finite, with a zero last row.
    explicit GateWeights(Eigen::MatrixXd w);

    int components() const noexcept { return static_cast<int>(w_.rows()); }
    const Eigen::MatrixXd& matrix() const noexcept { return w_; }
    double operator()(int k, int j) const { return w_(k, j); }

    // Free coordinates (rows 0..K-2, row-major) as a vector of length 2(K-1).
    Eigen::VectorXd free_vector() const;
    static GateWeights from_free_vector(const Eigen::VectorXd& v);

private:
    Eigen::MatrixXd w_;
};

struct RhlpParams {
    GateWeights w;
    Eigen::MatrixXd beta;  // K x (p+1), row k = beta_k
    double sigma2 = 1.0;

    int components() const noexcept { return static_cast<int>(beta.rows()); }
    int degree() const noexcept { return static_cast<int>(beta.cols()) - 1; }
    // Throws InvalidArgument when shapes disagree, entries are non-finite or sigma2 <= 0.
    void validate() const;
};

// n x K posterior membership probabilities.
struct Responsibilities {
    Eigen::MatrixXd tau;

    Eigen::Index rows() const noexcept { return tau.rows(); }
    Eigen::Index components() const noexcept { return tau.cols(); }
};

// (1, t, t^2, ..., t^p)
Eigen::VectorXd polynomial_basis(double t, int degree);

// n x (p+1) Vandermonde matrix over the dataset's time points.
Eigen::MatrixXd design_matrix(std::span<const double> t, int degree);

// Softmax proportions pi_k(t; w), computed with max subtraction.
Eigen::VectorXd gate_proportions(double t, const GateWeights& w);

// log pi_k(t; w) for all k.
Eigen::VectorXd log_gate_proportions(double t, const GateWeights& w);

// f(t) = sum_k pi_k(t) beta_k' basis(t)
double regression_mean(double t, const RhlpParams& params);

// log N(x; beta_k' basis(t), sigma2)
double component_logpdf(double x, double t, int k, const RhlpParams& params);

// log sum_k pi_k(t) N(x; beta_k' basis(t), sigma2)
double mixture_logpdf(double x, double t, const RhlpParams& params);

double log_likelihood(const Dataset& data, const RhlpParams& params);

// Numerically stable log(sum(exp(v))).
double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v);

// Given coefficients `c` of a polynomial in u = (t - offset) / scale, returns
// the coefficients of the same polynomial in powers of t.
Eigen::VectorXd polynomial_in_original_scale(const Eigen::VectorXd& c, double offset, double scale);

// Maps parameters fitted on u = (t - offset) / scale back to the original t axis,
// so that regression_mean(t, mapped) == regression_mean(u, params).
RhlpParams params_in_original_scale(const RhlpParams& params, double offset, double scale);

}  // namespace rhlp
