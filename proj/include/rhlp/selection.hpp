#pragma once

#include "rhlp/em.hpp"

#include <map>
#include <utility>
#include <vector>

namespace rhlp {

// nu(K, p) = K(p+3) - 1: K(p+1) coefficients, 2(K-1) free gate entries, one variance.
constexpr int free_param_count(int components, int degree) noexcept {
    return components * (degree + 3) - 1;
}

// loglik - nu(K, p) log(n) / 2; larger is better.
double bic(double loglik, int components, int degree, std::size_t n);

struct GridCell {
    double bic = 0.0;
    double loglik = 0.0;
    FitResult fit;
};

using ModelKey = std::pair<int, int>;  // (K, p)

struct BicGridResult {
    std::map<ModelKey, GridCell> table;   // cells that were fitted
    std::vector<ModelKey> skipped;        // n < K(p+2), or every start failed
    ModelKey best{0, 0};

    const GridCell& best_cell() const { return table.at(best); }
};

// Fits every (K, p) in the ranges and picks the maximum BIC; ties go to the
// smaller nu, then the smaller K. Cell seeds derive from (config.seed, K, p).
// Throws EmptyGrid when no cell could be fitted.
BicGridResult grid_select(const Dataset& data, const std::vector<int>& k_range, const std::vector<int>& p_range,
                          const FitConfig& config);

// Inclusive integer range [lo, hi].
std::vector<int> int_range(int lo, int hi);

}  // namespace rhlp
