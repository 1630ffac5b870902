#pragma once

// Piecewise polynomial regression with K contiguous segments, solved exactly
// by dynamic programming over all boundary placements.

#include "rhlp/core.hpp"

#include <cstddef>
#include <vector>

namespace rhlp {

struct PiecewiseFit {
    // Index of the first observation of segments 2..K; a boundary index
    // belongs to the segment on its right.
    std::vector<std::size_t> boundaries;
    Eigen::MatrixXd beta;  // K x (p+1)
    double sse = 0.0;
    std::vector<double> fitted;

    int components() const noexcept { return static_cast<int>(beta.rows()); }
    int degree() const noexcept { return static_cast<int>(beta.cols()) - 1; }
    int segment_of(std::size_t i) const;
    std::vector<int> labels() const;
};

// Global minimizer of the total within-segment squared error with every
// segment holding at least p+2 points. Throws TooFewPoints when n < K(p+2).
PiecewiseFit fit_piecewise_dp(const Dataset& data, int components, int degree);

// Prediction at observation i (polynomial of the segment containing i).
double piecewise_predict(const PiecewiseFit& fit, const Dataset& data, std::size_t i);

}  // namespace rhlp
