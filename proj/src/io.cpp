#include "rhlp/io.hpp"

#include "rhlp/errors.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>

namespace rhlp {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

double parse_number(std::string_view field, std::string_view column, std::size_t line) {
    double v = 0.0;
    const char* begin = field.data();
    const char* end = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (field.empty() || ec != std::errc() || ptr != end)
        throw ParseError("column " + std::string(column) + ": cannot parse '" + std::string(field) + "' as a number",
                         line);
    if (!std::isfinite(v)) throw ParseError("column " + std::string(column) + ": non-finite value", line);
    return v;
}

}  // namespace

Dataset read_dataset_csv(std::istream& in) {
    std::string raw;
    std::size_t line_no = 0;
    bool header_seen = false;
    std::size_t columns = 2;
    std::vector<double> t, x;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string_view line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        const auto fields = split_fields(line);
        if (!header_seen) {
            // Extra trailing columns (e.g. a simulated truth column) are ignored.
            if (fields.size() < 2 || fields[0] != "t" || fields[1] != "x")
                throw ParseError("expected header 't,x', got '" + std::string(line) + "'", line_no);
            header_seen = true;
            columns = fields.size();
            continue;
        }
        if (fields.size() != columns)
            throw ParseError("expected " + std::to_string(columns) + " fields, got " + std::to_string(fields.size()),
                             line_no);
        t.push_back(parse_number(fields[0], "t", line_no));
        x.push_back(parse_number(fields[1], "x", line_no));
    }
    if (!header_seen) throw ParseError("missing header 't,x'", line_no);
    if (t.empty()) throw ParseError("no data rows", line_no);
    return Dataset(std::move(t), std::move(x));
}

Dataset read_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'", 0);
    return read_dataset_csv(in);
}

std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Model document

namespace {

using nlohmann::json;

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, const char* name) {
    if (!j.is_array()) throw ParseError(std::string("model: '") + name + "' must be an array of rows", 0);
    const auto rows = static_cast<Eigen::Index>(j.size());
    const Eigen::Index cols = rows ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const json& row = j.at(r);
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
            throw ParseError(std::string("model: '") + name + "' has ragged rows", 0);
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row.at(c).get<double>();
    }
    return m;
}

}  // namespace

bool ModelDocument::operator==(const ModelDocument& o) const {
    auto same = [](const auto& a, const auto& b) {
        return a.rows() == b.rows() && a.cols() == b.cols() && (a.size() == 0 || a == b);
    };
    return schema_version == o.schema_version && method == o.method && K == o.K && p == o.p &&
           same(beta, o.beta) && sigma2 == o.sigma2 && same(w, o.w) && same(initial, o.initial) &&
           same(trans, o.trans) && boundaries == o.boundaries && loglik == o.loglik && n_iter == o.n_iter &&
           seed == o.seed && converged == o.converged && n == o.n;
}

std::string render_model(const ModelDocument& doc) {
    json params;
    params["beta"] = matrix_to_json(doc.beta);
    params["sigma2"] = doc.sigma2;
    if (doc.method == "rhlp") params["w"] = matrix_to_json(doc.w);
    if (doc.method == "hmm") {
        params["initial"] = std::vector<double>(doc.initial.data(), doc.initial.data() + doc.initial.size());
        params["trans"] = matrix_to_json(doc.trans);
    }
    if (doc.method == "piecewise") params["boundaries"] = doc.boundaries;

    json j;
    j["schema_version"] = doc.schema_version;
    j["method"] = doc.method;
    j["K"] = doc.K;
    j["p"] = doc.p;
    j["parameters"] = std::move(params);
    j["loglik"] = doc.loglik;
    j["fit"] = {{"n_iter", doc.n_iter}, {"seed", doc.seed}, {"converged", doc.converged}, {"n", doc.n}};
    return j.dump(2) + "\n";
}

ModelDocument parse_model(std::string_view text) {
    json j;
    try {
        j = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("model: ") + e.what(), 0);
    }
    try {
        ModelDocument doc;
        doc.schema_version = j.at("schema_version").get<int>();
        if (doc.schema_version != kModelSchemaVersion)
            throw ParseError("model: unsupported schema_version " + std::to_string(doc.schema_version), 0);
        doc.method = j.at("method").get<std::string>();
        doc.K = j.at("K").get<int>();
        doc.p = j.at("p").get<int>();
        const json& params = j.at("parameters");
        doc.beta = matrix_from_json(params.at("beta"), "beta");
        doc.sigma2 = params.at("sigma2").get<double>();
        if (doc.method == "rhlp") {
            doc.w = matrix_from_json(params.at("w"), "w");
        } else if (doc.method == "hmm") {
            const auto init = params.at("initial").get<std::vector<double>>();
            doc.initial = Eigen::Map<const Eigen::VectorXd>(init.data(), static_cast<Eigen::Index>(init.size()));
            doc.trans = matrix_from_json(params.at("trans"), "trans");
        } else if (doc.method == "piecewise") {
            doc.boundaries = params.at("boundaries").get<std::vector<std::size_t>>();
        } else {
            throw ParseError("model: unknown method '" + doc.method + "'", 0);
        }
        doc.loglik = j.at("loglik").get<double>();
        const json& meta = j.at("fit");
        doc.n_iter = meta.at("n_iter").get<int>();
        doc.seed = meta.at("seed").get<std::uint64_t>();
        doc.converged = meta.at("converged").get<bool>();
        doc.n = meta.at("n").get<std::size_t>();
        return doc;
    } catch (const json::exception& e) {
        throw ParseError(std::string("model: ") + e.what(), 0);
    }
}

RhlpParams rhlp_params_of(const ModelDocument& doc) {
    if (doc.method != "rhlp") throw InvalidArgument("model document is not an rhlp model");
    RhlpParams params;
    params.w = GateWeights(doc.w);
    params.beta = doc.beta;
    params.sigma2 = doc.sigma2;
    params.validate();
    return params;
}

HmmRegParams hmm_params_of(const ModelDocument& doc) {
    if (doc.method != "hmm") throw InvalidArgument("model document is not an hmm model");
    HmmRegParams params{doc.initial, doc.trans, doc.beta, doc.sigma2};
    params.validate();
    return params;
}

// ---------------------------------------------------------------------------
// CSV writers

void write_simulation_csv(std::ostream& out, const SimulatedData& sim) {
    out << "t,x,truth\n";
    for (std::size_t i = 0; i < sim.data.size(); ++i)
        out << format_number(sim.data.t(i)) << ',' << format_number(sim.data.x(i)) << ','
            << format_number(sim.truth[i]) << '\n';
}

void write_curves_csv(std::ostream& out, const Dataset& data, std::span<const double> fitted,
                      std::span<const int> labels, const Eigen::MatrixXd& proportions) {
    out << "t,x,fitted,map_label";
    for (Eigen::Index k = 0; k < proportions.cols(); ++k) out << ",pi_" << (k + 1);
    out << '\n';
    for (std::size_t i = 0; i < data.size(); ++i) {
        out << format_number(data.t(i)) << ',' << format_number(data.x(i)) << ',' << format_number(fitted[i])
            << ',' << (labels[i] + 1);
        for (Eigen::Index k = 0; k < proportions.cols(); ++k)
            out << ',' << format_number(proportions(static_cast<Eigen::Index>(i), k));
        out << '\n';
    }
}

void write_band_csv(std::ostream& out, const ConfidenceBand& band) {
    out << "t,center,lower,upper\n";
    for (std::size_t i = 0; i < band.ts.size(); ++i)
        out << format_number(band.ts[i]) << ',' << format_number(band.center[i]) << ','
            << format_number(band.lower(i)) << ',' << format_number(band.upper(i)) << '\n';
}

void write_benchmark_csv(std::ostream& out, std::span<const BenchmarkRecord> records) {
    out << "scenario,method,n,sigma,replicate,seed,eqm,wall_seconds,ok,error\n";
    for (const auto& r : records) {
        std::string err = r.error;
        for (char& c : err)
            if (c == ',' || c == '\n') c = ';';
        out << r.scenario << ',' << method_name(r.method) << ',' << r.n << ',' << format_number(r.sigma) << ','
            << r.replicate << ',' << r.seed << ',' << format_number(r.eqm) << ','
            << format_number(r.wall_seconds) << ',' << (r.ok ? 1 : 0) << ',' << err << '\n';
    }
}

void write_frequency_csv(std::ostream& out, const BicStudyResult& study) {
    out << "K,p,percent\n";
    for (const auto& [key, pct] : study.percent) out << key.first << ',' << key.second << ',' << format_number(pct) << '\n';
}

}  // namespace rhlp
