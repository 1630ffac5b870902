#pragma once

// File formats: input/output CSV tables and the JSON model document.

#include "rhlp/confidence.hpp"
#include "rhlp/core.hpp"
#include "rhlp/hmm.hpp"
#include "rhlp/piecewise.hpp"
#include "rhlp/simulation.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace rhlp {

// CSV with header `t,x` (further columns ignored); lines starting with '#' and blank lines are skipped.
// Throws ParseError naming the offending line.
Dataset read_dataset_csv(std::istream& in);
Dataset read_dataset_csv(const std::string& path);

// %.17g
std::string format_number(double v);

inline constexpr int kModelSchemaVersion = 1;

struct ModelDocument {
    int schema_version = kModelSchemaVersion;
    std::string method;  // rhlp | piecewise | hmm
    int K = 0;
    int p = 0;
    Eigen::MatrixXd beta;
    double sigma2 = 0.0;
    Eigen::MatrixXd w;                     // rhlp
    Eigen::VectorXd initial;               // hmm
    Eigen::MatrixXd trans;                 // hmm
    std::vector<std::size_t> boundaries;   // piecewise
    double loglik = 0.0;
    int n_iter = 0;
    std::uint64_t seed = 0;
    bool converged = false;
    std::size_t n = 0;

    bool operator==(const ModelDocument& other) const;
};

std::string render_model(const ModelDocument& doc);
// Throws ParseError on malformed documents or unsupported schema versions.
ModelDocument parse_model(std::string_view text);

RhlpParams rhlp_params_of(const ModelDocument& doc);
HmmRegParams hmm_params_of(const ModelDocument& doc);

void write_simulation_csv(std::ostream& out, const SimulatedData& sim);
// t,x,fitted,map_label[,pi_1..pi_K]; `proportions` may be empty (n x 0).
void write_curves_csv(std::ostream& out, const Dataset& data, std::span<const double> fitted,
                      std::span<const int> labels, const Eigen::MatrixXd& proportions);
void write_band_csv(std::ostream& out, const ConfidenceBand& band);
void write_benchmark_csv(std::ostream& out, std::span<const BenchmarkRecord> records);
void write_frequency_csv(std::ostream& out, const BicStudyResult& study);

}  // namespace rhlp
