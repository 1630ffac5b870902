#include "rhlp/errors.hpp"
#include "rhlp/hmm.hpp"
#include "rhlp/simulation.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace rhlp;

namespace {

HmmRegParams random_hmm(int K, int p, std::mt19937_64& rng) {
    std::gamma_distribution<double> g(1.0, 1.0);
    std::normal_distribution<double> z;
    HmmRegParams h;
    h.initial.resize(K);
    h.trans.resize(K, K);
    for (int k = 0; k < K; ++k) {
        h.initial(k) = g(rng);
        for (int l = 0; l < K; ++l) h.trans(k, l) = g(rng);
        h.trans.row(k) /= h.trans.row(k).sum();
    }
    h.initial /= h.initial.sum();
    h.beta = Eigen::MatrixXd::NullaryExpr(K, p + 1, [&] { return z(rng); });
    h.sigma2 = 0.5 + g(rng);
    return h;
}

struct Enumerated {
    double loglik;
    Eigen::MatrixXd smoothed;
    Eigen::MatrixXd filtered;
};

// Sums over all K^n state paths.
Enumerated enumerate_paths(const Dataset& d, const HmmRegParams& h) {
    const int K = h.components();
    const std::size_t n = d.size();
    auto emit = [&](std::size_t i, int k) {
        const double mu = h.beta.row(k).dot(polynomial_basis(d.t(i), h.degree()));
        const double r = d.x(i) - mu;
        return std::exp(-r * r / (2 * h.sigma2)) / std::sqrt(2 * std::numbers::pi * h.sigma2);
    };
    Enumerated out{0.0, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), K),
                   Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), K)};
    std::size_t total = 1;
    for (std::size_t i = 0; i < n; ++i) total *= static_cast<std::size_t>(K);
    std::vector<int> z(n);
    // prefix[i][k]: probability of paths ending in k at i, jointly with x_1..x_i
    Eigen::MatrixXd prefix = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), K);
    double sum = 0.0;
    for (std::size_t code = 0; code < total; ++code) {
        std::size_t c = code;
        for (std::size_t i = 0; i < n; ++i) {
            z[i] = static_cast<int>(c % static_cast<std::size_t>(K));
            c /= static_cast<std::size_t>(K);
        }
        double prob = h.initial(z[0]) * emit(0, z[0]);
        // prefix weights count each prefix once per completion; normalize later.
        std::vector<double> pre(n);
        pre[0] = prob;
        for (std::size_t i = 1; i < n; ++i) {
            prob *= h.trans(z[i - 1], z[i]) * emit(i, z[i]);
            pre[i] = prob;
        }
        sum += prob;
        for (std::size_t i = 0; i < n; ++i) {
            out.smoothed(static_cast<Eigen::Index>(i), z[i]) += prob;
            // Each prefix (z_1..z_i) appears K^(n-1-i) times.
            double reps = 1.0;
            for (std::size_t r = i + 1; r < n; ++r) reps *= K;
            prefix(static_cast<Eigen::Index>(i), z[i]) += pre[i] / reps;
        }
    }
    out.loglik = std::log(sum);
    out.smoothed /= sum;
    for (Eigen::Index i = 0; i < prefix.rows(); ++i) out.filtered.row(i) = prefix.row(i) / prefix.row(i).sum();
    return out;
}

Dataset small_data(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> z;
    std::vector<double> t(n), x(n);
    for (std::size_t i = 0; i < n; ++i) {
        t[i] = 0.5 * static_cast<double>(i);
        x[i] = z(rng);
    }
    return {t, x};
}

}  // namespace

TEST(Hmm, ForwardMatchesPathEnumeration) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 30; ++trial) {
        const int K = 2 + trial % 2;
        const std::size_t n = 3 + static_cast<std::size_t>(trial) % 6;  // up to 8
        const HmmRegParams h = random_hmm(K, trial % 3, rng);
        const Dataset d = small_data(n, rng);
        const Enumerated e = enumerate_paths(d, h);
        EXPECT_NEAR(hmm_log_likelihood(d, h), e.loglik, 1e-10 * std::max(1.0, std::abs(e.loglik)));
        const ForwardBackward fb = hmm_forward_backward(d, h);
        EXPECT_NEAR(fb.loglik, e.loglik, 1e-10 * std::max(1.0, std::abs(e.loglik)));
        EXPECT_LT((fb.smoothed - e.smoothed).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LT((fb.filtered - e.filtered).cwiseAbs().maxCoeff(), 1e-10);
    }
}

TEST(Hmm, ExpectedTransitionsSumToStepsMinusOne) {
    std::mt19937_64 rng(2);
    const HmmRegParams h = random_hmm(3, 1, rng);
    const Dataset d = small_data(20, rng);
    const ForwardBackward fb = hmm_forward_backward(d, h);
    EXPECT_NEAR(fb.expected_transitions.sum(), 19.0, 1e-10);
    for (Eigen::Index i = 0; i < fb.smoothed.rows(); ++i) EXPECT_NEAR(fb.smoothed.row(i).sum(), 1.0, 1e-12);
}

TEST(Hmm, LongSequencesDoNotUnderflow) {
    const SimulatedData sim = generate(1, 5000, 1.5, 3);
    std::mt19937_64 rng(1);
    HmmRegParams h = random_hmm(4, 2, rng);
    const double ll = hmm_log_likelihood(sim.data, h);
    EXPECT_TRUE(std::isfinite(ll));
}

TEST(Hmm, BaumWelchAscends) {
    const SimulatedData sim = generate(1, 200, 1.5, 4);
    FitConfig c;
    c.n_starts = 3;
    for (bool ltr : {false, true}) {
        HmmOptions o;
        o.left_to_right = ltr;
        const HmmFit f = fit_hmm_regression(sim.data, 4, 2, c, o);
        for (std::size_t q = 1; q < f.loglik_trace.size(); ++q)
            EXPECT_GE(f.loglik_trace[q], f.loglik_trace[q - 1] - 1e-8 * std::abs(f.loglik_trace[q - 1]));
        EXPECT_NEAR(f.params.trans.rowwise().sum().maxCoeff(), 1.0, 1e-12);
        if (ltr) EXPECT_EQ(f.params.trans(1, 0), 0.0);
    }
}

TEST(Hmm, FilterPredictionIsFilterWeightedMean) {
    std::mt19937_64 rng(5);
    const HmmRegParams h = random_hmm(2, 1, rng);
    const Dataset d = small_data(10, rng);
    const Eigen::MatrixXd omega = hmm_filter(d, h);
    const std::vector<double> pred = hmm_filter_predict(d, h);
    for (std::size_t i = 0; i < d.size(); ++i) {
        double m = 0.0;
        for (int k = 0; k < 2; ++k)
            m += omega(static_cast<Eigen::Index>(i), k) * h.beta.row(k).dot(polynomial_basis(d.t(i), 1));
        EXPECT_NEAR(pred[i], m, 1e-12);
    }
}

TEST(Hmm, Deterministic) {
    const SimulatedData sim = generate(3, 150, 1.5, 6);
    FitConfig c;
    c.n_starts = 3;
    c.seed = 5;
    const HmmFit a = fit_hmm_regression(sim.data, 5, 3, c);
    c.threads = 3;
    const HmmFit b = fit_hmm_regression(sim.data, 5, 3, c);
    EXPECT_EQ(a.loglik_trace, b.loglik_trace);
    EXPECT_EQ(a.params.beta, b.params.beta);
}

TEST(Hmm, TooFewPoints) {
    const SimulatedData sim = generate(1, 8, 1.0, 1);
    EXPECT_THROW(fit_hmm_regression(sim.data, 4, 2, FitConfig{}), TooFewPoints);
}

TEST(Baselines, SingleComponentPredictionsAgree) {
    const SimulatedData sim = generate(3, 90, 1.0, 12);
    FitConfig c;
    c.n_starts = 2;
    const std::vector<double> a = estimate_curve(Method::Rhlp, sim.data, 1, 3, c);
    const std::vector<double> b = estimate_curve(Method::Piecewise, sim.data, 1, 3, c);
    const std::vector<double> h = estimate_curve(Method::Hmm, sim.data, 1, 3, c);
    for (std::size_t i = 0; i < sim.data.size(); ++i) {
        EXPECT_NEAR(a[i], b[i], 1e-9);
        EXPECT_NEAR(a[i], h[i], 1e-9);
    }
}
