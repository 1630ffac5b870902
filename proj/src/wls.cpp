#include "rhlp/wls.hpp"

namespace rhlp {

namespace {

constexpr double kMinRcond = 1e-15;

bool usable(const Eigen::LLT<Eigen::MatrixXd>& llt) {
    return llt.info() == Eigen::Success && llt.rcond() > kMinRcond;
}

}  // namespace

Eigen::VectorXd solve_normal_equations(const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs) {
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (usable(llt)) return llt.solve(rhs);
    const double ridge = 1e-8 * gram.trace() / static_cast<double>(gram.rows());
    Eigen::MatrixXd damped = gram;
    damped.diagonal().array() += ridge > 0.0 ? ridge : 1e-12;
    llt.compute(damped);
    if (llt.info() == Eigen::Success) return llt.solve(rhs);
    // Still not positive definite: minimum-norm solution.
    return gram.completeOrthogonalDecomposition().solve(rhs);
}

Eigen::VectorXd weighted_least_squares(const Eigen::Ref<const Eigen::MatrixXd>& T,
                                       const Eigen::Ref<const Eigen::VectorXd>& weights,
                                       const Eigen::Ref<const Eigen::VectorXd>& x) {
    const Eigen::MatrixXd wt = T.array().colwise() * weights.array();
    const Eigen::MatrixXd gram = T.transpose() * wt;
    const Eigen::VectorXd rhs = wt.transpose() * x;
    return solve_normal_equations(gram, rhs);
}

Eigen::VectorXd ordinary_least_squares(const Eigen::Ref<const Eigen::MatrixXd>& T,
                                       const Eigen::Ref<const Eigen::VectorXd>& x) {
    const Eigen::MatrixXd gram = T.transpose() * T;
    return solve_normal_equations(gram, T.transpose() * x);
}

}  // namespace rhlp
