#include "rhlp/piecewise.hpp"

#include "rhlp/errors.hpp"
#include "rhlp/wls.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace rhlp {

int PiecewiseFit::segment_of(std::size_t i) const {
    return static_cast<int>(std::upper_bound(boundaries.begin(), boundaries.end(), i) - boundaries.begin());
}

std::vector<int> PiecewiseFit::labels() const {
    std::vector<int> out(fitted.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = segment_of(i);
    return out;
}

double piecewise_predict(const PiecewiseFit& fit, const Dataset& data, std::size_t i) {
    if (i >= data.size()) throw InvalidArgument("piecewise_predict: index out of range");
    return fit.beta.row(fit.segment_of(i)).dot(polynomial_basis(data.t(i), fit.degree()));
}

namespace {

// Upper-triangular table cost(i, j) = SSE of an OLS fit on [i, j).
class SegmentCosts {
public:
    SegmentCosts(const Dataset& data, int degree, std::size_t min_len)
        : n_(data.size()), min_len_(min_len), cost_(n_ * (n_ + 1), std::numeric_limits<double>::infinity()) {
        const int q = degree + 1;
        const auto t = data.t();
        const auto x = data.x();
        const double range = t.back() - t.front();
        const double scale = range > 0.0 ? range : 1.0;
        const double x_ref = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n_);

        Eigen::MatrixXd gram(q, q);
        Eigen::VectorXd rhs(q), u(q);
        for (std::size_t i = 0; i + min_len_ <= n_; ++i) {
            // Shifted basis keeps the segment's Gram matrix well conditioned; the
            // column space (and so the SSE) is unchanged.
            gram.setZero();
            rhs.setZero();
            double xx = 0.0;
            for (std::size_t j = i; j < n_; ++j) {
                const double s = (t[j] - t[i]) / scale;
                double v = 1.0;
                for (int c = 0; c < q; ++c, v *= s) u(c) = v;
                const double xc = x[j] - x_ref;
                gram.selfadjointView<Eigen::Lower>().rankUpdate(u);
                rhs += xc * u;
                xx += xc * xc;
                const std::size_t len = j + 1 - i;
                if (len < min_len_) continue;
                Eigen::MatrixXd full = gram.selfadjointView<Eigen::Lower>();
                const Eigen::VectorXd b = solve_normal_equations(full, rhs);
                cost_[index(i, j + 1)] = std::max(0.0, xx - rhs.dot(b));
            }
        }
    }

    double operator()(std::size_t begin, std::size_t end) const { return cost_[index(begin, end)]; }

private:
    std::size_t index(std::size_t begin, std::size_t end) const { return begin * (n_ + 1) + end; }

    std::size_t n_;
    std::size_t min_len_;
    std::vector<double> cost_;
};

}  // namespace

PiecewiseFit fit_piecewise_dp(const Dataset& data, int components, int degree) {
    if (components < 1 || degree < 0) throw InvalidArgument("fit_piecewise_dp: need K >= 1 and p >= 0");
    const std::size_t n = data.size();
    const std::size_t m = static_cast<std::size_t>(degree) + 2;
    const std::size_t K = static_cast<std::size_t>(components);
    if (n < K * m) throw TooFewPoints(n, K * m);

    const SegmentCosts cost(data, degree, m);
    constexpr double inf = std::numeric_limits<double>::infinity();
    // best[k][j]: min cost of splitting [0, j) into k+1 segments; from[k][j]: last segment start.
    std::vector<std::vector<double>> best(K, std::vector<double>(n + 1, inf));
    std::vector<std::vector<std::size_t>> from(K, std::vector<std::size_t>(n + 1, 0));
    for (std::size_t j = m; j <= n; ++j) best[0][j] = cost(0, j);
    for (std::size_t k = 1; k < K; ++k) {
        for (std::size_t j = (k + 1) * m; j <= n; ++j) {
            double b = inf;
            std::size_t arg = 0;
            for (std::size_t i = k * m; i + m <= j; ++i) {
                const double c = best[k - 1][i] + cost(i, j);
                if (c < b) {
                    b = c;
                    arg = i;
                }
            }
            best[k][j] = b;
            from[k][j] = arg;
        }
    }

    PiecewiseFit out;
    out.boundaries.resize(K - 1);
    std::size_t end = n;
    for (std::size_t k = K - 1; k >= 1; --k) {
        end = from[k][end];
        out.boundaries[k - 1] = end;
    }

    const Eigen::MatrixXd T = design_matrix(data.t(), degree);
    const Eigen::VectorXd x = data.x_vector();
    out.beta.resize(components, degree + 1);
    out.fitted.resize(n);
    out.sse = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        const std::size_t begin = k == 0 ? 0 : out.boundaries[k - 1];
        const std::size_t stop = k + 1 == K ? n : out.boundaries[k];
        const auto first = static_cast<Eigen::Index>(begin);
        const auto len = static_cast<Eigen::Index>(stop - begin);
        const Eigen::VectorXd b = ordinary_least_squares(T.middleRows(first, len), x.segment(first, len));
        out.beta.row(static_cast<Eigen::Index>(k)) = b.transpose();
        const Eigen::VectorXd pred = T.middleRows(first, len) * b;
        for (Eigen::Index r = 0; r < len; ++r) {
            out.fitted[begin + r] = pred(r);
            const double e = x(first + r) - pred(r);
            out.sse += e * e;
        }
    }
    return out;
}

}  // namespace rhlp
