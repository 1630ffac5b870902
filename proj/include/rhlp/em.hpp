#pragma once

// Maximum-likelihood fitting of RhlpParams by EM. The M-step solves K
// weighted least-squares problems in closed form and maximizes the gating
// objective Q1(w) = sum_i sum_k tau_ik log pi_k(t_i; w) by Newton-Raphson
// (IRLS) over the free gate rows.

#include "rhlp/core.hpp"
#include "rhlp/random.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace rhlp {

inline constexpr double kSigma2Floor = 1e-12;
inline constexpr double kDegenerateMass = 1e-8;

struct FitConfig {
    int n_starts = 10;
    double em_tol = 1e-6;      // relative change of the log-likelihood
    int em_max_iter = 1000;
    double irls_tol = 1e-6;    // relative change of Q1
    int irls_max_iter = 50;
    std::uint64_t seed = 0;
    std::optional<int> gem_irls_cap;  // caps IRLS iterations per M-step (generalized EM)
    int max_restarts = 3;             // re-initializations per start after a degenerate component
    int threads = 1;                  // workers for the multi-start loop; results do not depend on it

    // Throws InvalidArgument on non-positive tolerances or caps.
    void validate() const;
};

struct EStepResult {
    Responsibilities tau;
    double loglik = 0.0;
};

EStepResult e_step(const Dataset& data, const RhlpParams& params);

// Weighted least squares per component; throws DegenerateComponent when a
// column of tau carries less than kDegenerateMass.
Eigen::MatrixXd m_step_beta(const Dataset& data, const Responsibilities& tau, int degree);

double m_step_sigma(const Dataset& data, const Responsibilities& tau, const Eigen::MatrixXd& beta);

// Gating objective and its derivatives over the free coordinates
// (GateWeights::free_vector ordering).
double gating_objective(std::span<const double> t, const Responsibilities& tau, const GateWeights& w);
Eigen::VectorXd gating_gradient(std::span<const double> t, const Responsibilities& tau, const GateWeights& w);
Eigen::MatrixXd gating_hessian(std::span<const double> t, const Responsibilities& tau, const GateWeights& w);

struct IrlsResult {
    GateWeights w;
    double objective = 0.0;
    int iterations = 0;
    bool converged = false;
    bool singular = false;  // Hessian stayed singular under the largest damping
};

IrlsResult irls_fit_gates(const Dataset& data, const Responsibilities& tau, const GateWeights& w_init,
                          double tol, int max_iter);

// Contiguous random partition of the time axis, OLS per block, and gate
// logits that approximate the block indicators. Throws TooFewPoints when
// n < K (p + 2).
RhlpParams initialize(const Dataset& data, int components, int degree, Rng& rng);

// One EM run from one initialization.
struct RunResult {
    RhlpParams params;
    std::vector<double> loglik_trace;  // L(Phi^(0)), L(Phi^(1)), ...
    int n_iter = 0;
    bool converged = false;
    int irls_warnings = 0;
    int restarts = 0;
};

struct FitResult {
    RhlpParams params;
    std::vector<double> loglik_trace;
    Responsibilities responsibilities;
    std::vector<double> fitted;
    std::vector<int> map_labels;
    int n_iter = 0;
    bool converged = false;
    int best_start_index = 0;
    std::vector<double> start_logliks;  // NaN for starts that failed

    double loglik() const { return loglik_trace.back(); }
};

// Runs EM for start `start_index` with its own stream derived from
// (config.seed, start_index). Throws DegenerateComponent once restarts are
// exhausted.
RunResult fit_single_start(const Dataset& data, int components, int degree, const FitConfig& config,
                           int start_index);

// Multi-start EM; keeps the run with the highest final log-likelihood (lowest
// start index on ties). Throws TooFewPoints, AllStartsFailed.
FitResult fit(const Dataset& data, int components, int degree, const FitConfig& config);

}  // namespace rhlp
