#include "rhlp/confidence.hpp"
#include "rhlp/em.hpp"
#include "rhlp/errors.hpp"
#include "rhlp/selection.hpp"
#include "rhlp/simulation.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace rhlp;

namespace {

RhlpParams random_params(int K, int p, Rng& rng) {
    std::normal_distribution<double> z(0.0, 1.0);
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(K, 2);
    for (int k = 0; k + 1 < K; ++k) w.row(k) << z(rng), z(rng);
    RhlpParams params;
    params.w = GateWeights(w);
    params.beta = Eigen::MatrixXd::NullaryExpr(K, p + 1, [&] { return z(rng); });
    params.sigma2 = 0.5 + std::abs(z(rng));
    return params;
}

Dataset noisy_line(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> z(0.0, 0.7);
    std::vector<double> t(n), x(n);
    for (std::size_t i = 0; i < n; ++i) {
        t[i] = 3.0 * static_cast<double>(i) / static_cast<double>(n - 1);
        x[i] = 1.0 - 0.5 * t[i] + z(rng);
    }
    return {t, x};
}

}  // namespace

TEST(Confidence, ParameterVectorRoundTrip) {
    Rng rng(3);
    const RhlpParams params = random_params(3, 2, rng);
    const Eigen::VectorXd v = parameter_vector(params);
    ASSERT_EQ(v.size(), parameter_dimension(3, 2));
    EXPECT_EQ(v.size(), 3 * 3 + 4 + 1);
    const RhlpParams back = params_from_vector(v, 3, 2);
    EXPECT_EQ(back.beta, params.beta);
    EXPECT_EQ(back.w.matrix(), params.w.matrix());
    EXPECT_EQ(back.sigma2, params.sigma2);
}

TEST(Confidence, CurveDimensionExcludesVariance) {
    for (int K = 1; K <= 6; ++K)
        for (int p = 0; p <= 4; ++p) EXPECT_EQ(curve_parameter_dimension(K, p) + 1, free_param_count(K, p));
}

TEST(Confidence, GradientMatchesFiniteDifferences) {
    Rng rng(10);
    for (int trial = 0; trial < 50; ++trial) {
        const int K = 1 + trial % 5, p = trial % 4;
        const RhlpParams params = random_params(K, p, rng);
        const double t = std::uniform_real_distribution<double>(0.0, 3.0)(rng);
        const Eigen::VectorXd g = f_gradient(t, params);
        const Eigen::VectorXd phi = parameter_vector(params);
        EXPECT_EQ(g(g.size() - 1), 0.0);
        for (Eigen::Index j = 0; j < phi.size(); ++j) {
            const double h = 1e-6 * (1.0 + std::abs(phi(j)));
            Eigen::VectorXd up = phi, down = phi;
            up(j) += h;
            down(j) -= h;
            const double fd = (regression_mean(t, params_from_vector(up, K, p)) -
                               regression_mean(t, params_from_vector(down, K, p))) /
                              (2 * h);
            EXPECT_NEAR(g(j), fd, 1e-6 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST(Confidence, ScoreMatchesFiniteDifferencesOfLogDensity) {
    Rng rng(12);
    for (int trial = 0; trial < 30; ++trial) {
        const int K = 1 + trial % 4, p = trial % 3;
        const RhlpParams params = random_params(K, p, rng);
        const double t = 1.3, x = 0.4;
        const Eigen::VectorXd s = observation_score(x, t, params);
        const Eigen::VectorXd phi = parameter_vector(params);
        for (Eigen::Index j = 0; j < phi.size(); ++j) {
            const double h = 1e-6 * (1.0 + std::abs(phi(j)));
            Eigen::VectorXd up = phi, down = phi;
            up(j) += h;
            down(j) -= h;
            const double fd = (mixture_logpdf(x, t, params_from_vector(up, K, p)) -
                               mixture_logpdf(x, t, params_from_vector(down, K, p))) /
                              (2 * h);
            EXPECT_NEAR(s(j), fd, 1e-6 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST(Confidence, SingleComponentInformationIsClosedForm) {
    // K = 1: I_beta = T'T / sigma2, I_sigma2 = n / (2 sigma4) and zero cross
    // terms at the maximum-likelihood estimate.
    const Dataset d = noisy_line(60, 4);
    const FitResult res = fit(d, 1, 1, FitConfig{});
    const Eigen::MatrixXd info = fisher_information(d, res.params, FisherEstimator::Observed);
    const Eigen::MatrixXd T = design_matrix(d.t(), 1);
    const double s2 = res.params.sigma2;
    const Eigen::MatrixXd ib = T.transpose() * T / s2;
    EXPECT_LT((info.topLeftCorner(2, 2) - ib).norm() / ib.norm(), 1e-6);
    EXPECT_NEAR(info(2, 2), 60.0 / (2.0 * s2 * s2), 1e-4 * 60.0 / (2.0 * s2 * s2));
    EXPECT_LT(info.block(0, 2, 2, 1).norm(), 1e-4 * ib.norm());
}

TEST(Confidence, SingleComponentVarianceIsOlsVariance) {
    const Dataset d = noisy_line(50, 5);
    const FitResult res = fit(d, 1, 1, FitConfig{});
    const Eigen::MatrixXd T = design_matrix(d.t(), 1);
    const Eigen::MatrixXd cov = res.params.sigma2 * (T.transpose() * T).inverse();
    for (auto est : {FisherEstimator::Observed}) {
        const CurveVariance v(d, res.params, est);
        for (double t : {0.0, 1.2, 3.0}) {
            const Eigen::Vector2d b(1.0, t);
            const double ols = b.dot(cov * b);
            EXPECT_NEAR(v(t), ols, 1e-6 * ols);
        }
    }
}

TEST(Confidence, OuterProductAgreesWithObservedAsymptotically) {
    const Dataset d = noisy_line(4000, 6);
    const FitResult res = fit(d, 1, 1, FitConfig{});
    const Eigen::MatrixXd a = fisher_information(d, res.params, FisherEstimator::Observed);
    const Eigen::MatrixXd b = fisher_information(d, res.params, FisherEstimator::OuterProduct);
    EXPECT_LT((a - b).norm() / a.norm(), 0.1);
}

TEST(Confidence, InformationIsSymmetric) {
    const SimulatedData sim = generate(2, 150, 1.5, 3);
    const FitResult res = fit(sim.data, 2, 2, FitConfig{});
    for (auto est : {FisherEstimator::Observed, FisherEstimator::OuterProduct}) {
        const Eigen::MatrixXd info = fisher_information(sim.data, res.params, est);
        EXPECT_EQ((info - info.transpose()).cwiseAbs().maxCoeff(), 0.0);
    }
}

TEST(Confidence, VarianceNonnegativeAndShrinksWithReplication) {
    const SimulatedData sim = generate(2, 120, 1.5, 8);
    FitConfig c;
    c.n_starts = 3;
    const FitResult res = fit(sim.data, 2, 2, c);
    const CurveVariance v1(sim.data, res.params);
    const CurveVariance v4(sim.data.replicated(4), res.params);
    for (double t = 0.0; t <= 5.0; t += 0.25) {
        EXPECT_GE(v1(t), 0.0);
        // Four copies of the data quadruple the information.
        EXPECT_NEAR(v4(t), v1(t) / 4.0, 1e-6 * std::max(v1(t), 1e-12));
    }
}

TEST(Confidence, ChiSquareQuantileMatchesBoost) {
    for (int dof : {1, 2, 5, 8, 13, 30, 100})
        for (double prob : {0.01, 0.5, 0.9, 0.95, 0.999}) {
            const double expected = boost::math::quantile(boost::math::chi_squared(dof), prob);
            EXPECT_NEAR(chi_square_quantile(dof, prob), expected, 1e-8 * std::max(1.0, expected));
        }
}

TEST(Confidence, RegularizedGammaMatchesBoost) {
    for (double a : {0.5, 1.0, 4.0, 15.0})
        for (double x : {0.1, 1.0, 3.0, 10.0, 40.0})
            EXPECT_NEAR(regularized_gamma_p(a, x), boost::math::cdf(boost::math::chi_squared(2 * a), 2 * x), 1e-12);
}

TEST(Confidence, BandIsCenteredAndWidensWithConfidence) {
    const SimulatedData sim = generate(2, 150, 1.5, 9);
    FitConfig c;
    c.n_starts = 3;
    const FitResult res = fit(sim.data, 2, 2, c);
    const std::vector<double> grid{0.5, 2.0, 4.0};
    const ConfidenceBand b95 = confidence_band(grid, sim.data, res.params, 0.05);
    const ConfidenceBand b80 = confidence_band(grid, sim.data, res.params, 0.20);
    EXPECT_EQ(b95.dof, curve_parameter_dimension(2, 2));
    for (std::size_t i = 0; i < grid.size(); ++i) {
        EXPECT_NEAR(b95.center[i], regression_mean(grid[i], res.params), 1e-12);
        EXPECT_NEAR(0.5 * (b95.lower(i) + b95.upper(i)), b95.center[i], 1e-12);
        EXPECT_GE(b95.half_width[i], b80.half_width[i]);
    }
    EXPECT_THROW(confidence_band(grid, sim.data, res.params, 1.5), InvalidArgument);
}

TEST(Confidence, BandIsSymmetric) {
    const SimulatedData sim = generate(2, 150, 1.5, 10);
    FitConfig c;
    c.n_starts = 2;
    const FitResult res = fit(sim.data, 2, 2, c);
    const ConfidenceBand b = confidence_band(sim.data.t(), sim.data, res.params, 0.05);
    for (std::size_t i = 0; i < b.ts.size(); ++i) {
        EXPECT_EQ(b.upper(i), b.center[i] + b.half_width[i]);
        EXPECT_EQ(b.lower(i), b.center[i] - b.half_width[i]);
        const double ulp = 4.0 * std::numeric_limits<double>::epsilon() * std::abs(b.center[i]);
        EXPECT_NEAR(b.upper(i) - b.center[i], b.center[i] - b.lower(i), ulp);
    }
}

TEST(Confidence, HalfWidthShrinksUnderDuplication) {
    const SimulatedData sim = generate(2, 120, 1.5, 11);
    FitConfig c;
    c.n_starts = 2;
    const FitResult res = fit(sim.data, 2, 2, c);
    const std::vector<double> grid{0.5, 1.5, 3.0, 4.5};
    const ConfidenceBand b1 = confidence_band(grid, sim.data, res.params, 0.05);
    const ConfidenceBand b2 = confidence_band(grid, sim.data.replicated(2), res.params, 0.05);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        EXPECT_LT(b2.half_width[i], b1.half_width[i]);
        EXPECT_NEAR(b2.half_width[i], b1.half_width[i] / std::sqrt(2.0), 0.05 * b1.half_width[i]);
    }
}

TEST(Confidence, ChiSquareQuantileMonotone) {
    for (int dof = 1; dof < 20; ++dof)
        for (double prob = 0.05; prob < 0.85; prob += 0.1) {
            EXPECT_LT(chi_square_quantile(dof, prob), chi_square_quantile(dof, prob + 0.1));
            EXPECT_LT(chi_square_quantile(dof, prob), chi_square_quantile(dof + 1, prob));
        }
}
