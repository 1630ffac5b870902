#include "rhlp/selection.hpp"

#include "rhlp/errors.hpp"
#include "rhlp/parallel.hpp"

#include <cmath>
#include <optional>

namespace rhlp {

double bic(double loglik, int components, int degree, std::size_t n) {
    if (n < 1) throw InvalidArgument("bic: n must be >= 1");
    return loglik - free_param_count(components, degree) * std::log(static_cast<double>(n)) / 2.0;
}

std::vector<int> int_range(int lo, int hi) {
    std::vector<int> out;
    for (int v = lo; v <= hi; ++v) out.push_back(v);
    return out;
}

namespace {

bool better(const ModelKey& a, double bic_a, const ModelKey& b, double bic_b) {
    if (bic_a != bic_b) return bic_a > bic_b;
    const int nu_a = free_param_count(a.first, a.second);
    const int nu_b = free_param_count(b.first, b.second);
    if (nu_a != nu_b) return nu_a < nu_b;
    return a.first < b.first;
}

}  // namespace

BicGridResult grid_select(const Dataset& data, const std::vector<int>& k_range, const std::vector<int>& p_range,
                          const FitConfig& config) {
    if (k_range.empty() || p_range.empty()) throw EmptyGrid("grid_select: empty range");
    config.validate();

    BicGridResult out;
    std::vector<ModelKey> cells;
    for (int K : k_range)
        for (int p : p_range) {
            if (K < 1 || p < 0) throw InvalidArgument("grid_select: need K >= 1 and p >= 0");
            if (data.size() < static_cast<std::size_t>(K) * static_cast<std::size_t>(p + 2))
                out.skipped.push_back({K, p});
            else
                cells.push_back({K, p});
        }

    // Cells run concurrently; each fit itself stays single-threaded.
    std::vector<std::optional<FitResult>> fits(cells.size());
    parallel_for(cells.size(), config.threads, [&](std::size_t c) {
        FitConfig cell_config = config;
        cell_config.threads = 1;
        cell_config.seed = derive_seed(config.seed, {static_cast<std::uint64_t>(cells[c].first),
                                                     static_cast<std::uint64_t>(cells[c].second)});
        try {
            fits[c] = fit(data, cells[c].first, cells[c].second, cell_config);
        } catch (const AllStartsFailed&) {
            fits[c].reset();
        }
    });

    bool have_best = false;
    double best_bic = 0.0;
    for (std::size_t c = 0; c < cells.size(); ++c) {
        if (!fits[c]) {
            out.skipped.push_back(cells[c]);
            continue;
        }
        GridCell cell;
        cell.loglik = fits[c]->loglik();
        cell.bic = bic(cell.loglik, cells[c].first, cells[c].second, data.size());
        cell.fit = std::move(*fits[c]);
        if (!have_best || better(cells[c], cell.bic, out.best, best_bic)) {
            out.best = cells[c];
            best_bic = cell.bic;
            have_best = true;
        }
        out.table.emplace(cells[c], std::move(cell));
    }
    if (!have_best) throw EmptyGrid("grid_select: no (K, p) cell could be fitted");
    return out;
}

}  // namespace rhlp
