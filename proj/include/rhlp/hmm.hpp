#pragma once

// Regression with a hidden Markov chain: state k emits N(beta_k' t_i, sigma2),
// states follow a first-order chain. Fitted by Baum-Welch.

#include "rhlp/core.hpp"
#include "rhlp/em.hpp"

#include <vector>

namespace rhlp {

struct HmmRegParams {
    Eigen::VectorXd initial;  // K
    Eigen::MatrixXd trans;    // K x K, row-stochastic
    Eigen::MatrixXd beta;     // K x (p+1)
    double sigma2 = 1.0;

    int components() const noexcept { return static_cast<int>(beta.rows()); }
    int degree() const noexcept { return static_cast<int>(beta.cols()) - 1; }
    void validate() const;
};

struct HmmOptions {
    bool left_to_right = false;  // restrict transitions to k -> k and k -> k+1
    double self_transition = 0.9;
};

struct ForwardBackward {
    Eigen::MatrixXd filtered;  // n x K, p(z_i = k | x_1..x_i)
    Eigen::MatrixXd smoothed;  // n x K, p(z_i = k | x_1..x_n)
    Eigen::MatrixXd expected_transitions;  // K x K, sum_i p(z_i = k, z_{i+1} = l | x)
    double loglik = 0.0;
};

// Scaled forward-backward; the log-likelihood is the sum of log normalizers.
ForwardBackward hmm_forward_backward(const Dataset& data, const HmmRegParams& params);

// Forward pass only.
double hmm_log_likelihood(const Dataset& data, const HmmRegParams& params);
Eigen::MatrixXd hmm_filter(const Dataset& data, const HmmRegParams& params);

// sum_k omega_k(t_i) beta_k' t_i with omega the filtering probabilities.
std::vector<double> hmm_filter_predict(const Dataset& data, const HmmRegParams& params);

struct HmmFit {
    HmmRegParams params;
    std::vector<double> loglik_trace;
    int n_iter = 0;
    bool converged = false;
    int best_start_index = 0;

    double loglik() const { return loglik_trace.back(); }
};

// Multi-start Baum-Welch with the stopping rules and seeding of FitConfig.
// Throws TooFewPoints, AllStartsFailed.
HmmFit fit_hmm_regression(const Dataset& data, int components, int degree, const FitConfig& config,
                          const HmmOptions& options = {});

}  // namespace rhlp
