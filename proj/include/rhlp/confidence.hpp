#pragma once

// Pointwise asymptotic confidence bands for the fitted curve:
//   f(t; theta_hat) +/- sqrt(chi2_{nu_theta, 1 - alpha}) s(t)
// with s^2(t) = (1/n) D' Ibar^-1 D, D = df/dPhi and Ibar the per-observation
// information.
//
// Parameter coordinates (Phi) are ordered
//   beta_1 .. beta_K (row-major), free gate rows w_1 .. w_{K-1} (row-major), sigma2
// so dim(Phi) = K(p+1) + 2(K-1) + 1.

#include "rhlp/core.hpp"

#include <vector>

namespace rhlp {

int parameter_dimension(int components, int degree) noexcept;

// dim(theta): everything except sigma2.
constexpr int curve_parameter_dimension(int components, int degree) noexcept {
    return components * (degree + 1) + 2 * (components - 1);
}

Eigen::VectorXd parameter_vector(const RhlpParams& params);
RhlpParams params_from_vector(const Eigen::VectorXd& v, int components, int degree);

// df/dPhi at t. The sigma2 entry is always zero.
Eigen::VectorXd f_gradient(double t, const RhlpParams& params);

// d log p(x | t; Phi) / dPhi, analytically.
Eigen::VectorXd observation_score(double x, double t, const RhlpParams& params);

enum class FisherEstimator {
    Observed,        // -d2 L / dPhi dPhi' by central differences of the analytic score
    OuterProduct,    // sum_i s_i s_i'
};

// Total information over the dataset (grows linearly with n). Symmetric.
Eigen::MatrixXd fisher_information(const Dataset& data, const RhlpParams& params,
                                   FisherEstimator estimator = FisherEstimator::OuterProduct);

// Caches the (pseudo-)inverse information for repeated variance queries.
class CurveVariance {
public:
    CurveVariance(const Dataset& data, const RhlpParams& params,
                  FisherEstimator estimator = FisherEstimator::OuterProduct);

    // s^2(t) >= 0.
    double operator()(double t) const;

    const Eigen::MatrixXd& information() const noexcept { return information_; }
    bool used_pseudo_inverse() const noexcept { return pseudo_inverse_; }

private:
    RhlpParams params_;
    std::size_t n_;
    Eigen::MatrixXd information_;
    Eigen::MatrixXd covariance_;  // inverse of the total information
    bool pseudo_inverse_ = false;
};

double pointwise_variance(double t, const Dataset& data, const RhlpParams& params);

// Regularized lower incomplete gamma P(a, x).
double regularized_gamma_p(double a, double x);

// Inverse CDF of chi-square(dof) by bisection, absolute tolerance 1e-10.
double chi_square_quantile(int dof, double prob);

struct ConfidenceBand {
    std::vector<double> ts;
    std::vector<double> center;
    std::vector<double> half_width;
    double alpha = 0.05;
    int dof = 0;

    double lower(std::size_t i) const { return center[i] - half_width[i]; }
    double upper(std::size_t i) const { return center[i] + half_width[i]; }
};

ConfidenceBand confidence_band(std::span<const double> grid, const Dataset& data, const RhlpParams& params,
                               double alpha, FisherEstimator estimator = FisherEstimator::OuterProduct);

}  // namespace rhlp
