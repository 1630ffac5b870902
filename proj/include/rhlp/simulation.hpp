#pragma once

// Synthetic scenarios on t in [0, 5], the EQM metric, and sweep drivers that
// compare the proposed model with the piecewise and HMM baselines.

#include "rhlp/core.hpp"
#include "rhlp/em.hpp"
#include "rhlp/selection.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace rhlp {

enum class Method { Rhlp, Piecewise, Hmm };

std::string_view method_name(Method m) noexcept;
Method parse_method(std::string_view name);  // throws InvalidArgument

struct Scenario {
    int id = 1;
    int components = 4;  // default model order for this scenario
    int degree = 2;
};

// Throws InvalidArgument unless id is 1, 2 or 3.
Scenario scenario(int id);

// Scenario 1 generating parameters (sigma2 left at 1).
RhlpParams scenario1_params();

double true_curve(int scenario_id, double t);

struct SimulatedData {
    Dataset data;
    std::vector<double> truth;
};

// n equally spaced points on [0, 5] (both ends included) plus N(0, sigma^2) noise.
SimulatedData generate(int scenario_id, std::size_t n, double sigma, std::uint64_t seed);

// Mean squared difference; throws LengthMismatch.
double eqm(std::span<const double> truth, std::span<const double> estimate);

// Each method's curve estimate at the data points: gate-weighted mean for
// rhlp, segment polynomial for piecewise, filter-weighted mean for hmm.
std::vector<double> estimate_curve(Method method, const Dataset& data, int components, int degree,
                                   const FitConfig& config);

struct BenchmarkRecord {
    int scenario = 0;
    Method method = Method::Rhlp;
    std::size_t n = 0;
    double sigma = 0.0;
    int replicate = 0;
    std::uint64_t seed = 0;  // fit seed; data depends on (seed, scenario, n, sigma, replicate) only
    double eqm = 0.0;
    double wall_seconds = 0.0;
    bool ok = true;
    std::string error;
};

struct SweepAxes {
    std::vector<int> scenarios{1, 2, 3};
    std::vector<std::size_t> sizes{100, 300, 500, 1000};
    std::vector<double> sigmas{0.5, 1.0, 1.5, 2.0, 2.5};
    std::vector<Method> methods{Method::Rhlp, Method::Piecewise, Method::Hmm};
    int replicates = 10;
    std::uint64_t seed = 0;
};

// Seed used to simulate one cell replicate; shared by all methods.
std::uint64_t data_seed(std::uint64_t seed, int scenario_id, std::size_t n, double sigma, int replicate);
std::uint64_t fit_seed(std::uint64_t seed, int scenario_id, Method method, std::size_t n, double sigma,
                       int replicate);

// One record per (scenario, method, n, sigma, replicate), in that order.
// `fit_config.seed` is ignored; `threads` spreads records over workers.
std::vector<BenchmarkRecord> sweep(const SweepAxes& axes, const FitConfig& fit_config, int threads = 1);

struct BicStudyResult {
    std::map<ModelKey, double> percent;  // selection frequency in %
    std::vector<ModelKey> selections;    // per replicate
    ModelKey modal() const;
};

// grid_select on fresh scenario-1 data per replicate.
BicStudyResult bic_study(std::size_t n, double sigma, int replicates, const std::vector<int>& k_range,
                         const std::vector<int>& p_range, std::uint64_t seed, const FitConfig& fit_config);

}  // namespace rhlp
