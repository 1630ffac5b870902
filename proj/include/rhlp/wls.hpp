#pragma once

#include <Eigen/Dense>

namespace rhlp {

// argmin_b sum_i weights_i (x_i - T_i b)^2 via Cholesky of the normal
// equations. If the factorization fails, retries once with a ridge of
// 1e-8 * trace(T'WT) / cols.
Eigen::VectorXd weighted_least_squares(const Eigen::Ref<const Eigen::MatrixXd>& T,
                                       const Eigen::Ref<const Eigen::VectorXd>& weights,
                                       const Eigen::Ref<const Eigen::VectorXd>& x);

// Same with unit weights.
Eigen::VectorXd ordinary_least_squares(const Eigen::Ref<const Eigen::MatrixXd>& T,
                                       const Eigen::Ref<const Eigen::VectorXd>& x);

// Solves a symmetric positive (semi)definite system with the same ridge fallback.
Eigen::VectorXd solve_normal_equations(const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs);

}  // namespace rhlp
