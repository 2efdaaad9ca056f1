#pragma once

// Problem-file ingestion and machine-readable reporting. Input is one JSON
// document; outputs are a JSON report plus CSV trajectory tables. Numbers are
// serialized with 17 significant digits so doubles round-trip exactly.

#include <nlohmann/json.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "butcher/control.hpp"
#include "butcher/linear_ode.hpp"
#include "butcher/nonlinearity.hpp"
#include "butcher/series.hpp"

namespace butcher {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace io {

using nlohmann::json;

inline double require_number(const json& j, const char* field) {
    if (!j.contains(field) || !j[field].is_number())
        throw ParseError(std::string("problem file: missing or non-numeric field \"") + field + "\"");
    return j[field].get<double>();
}

inline int require_int(const json& j, const char* field) {
    if (!j.contains(field) || !j[field].is_number_integer())
        throw ParseError(std::string("problem file: missing or non-integer field \"") + field + "\"");
    return j[field].get<int>();
}

inline Eigen::MatrixXd parse_matrix(const json& j, const char* field, int rows, int cols) {
    if (!j.contains(field) || !j[field].is_array() ||
        static_cast<int>(j[field].size()) != rows * cols)
        throw ParseError(std::string("problem file: field \"") + field + "\" must be a flat array of " +
                         std::to_string(rows * cols) + " numbers (row-major)");
    Eigen::MatrixXd M(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const auto& v = j[field][static_cast<std::size_t>(r * cols + c)];
            if (!v.is_number())
                throw ParseError(std::string("problem file: non-numeric entry in \"") + field + "\"");
            M(r, c) = v.get<double>();
        }
    return M;
}

/// Parse the ProblemFile JSON schema into a ControlProblem.
inline ControlProblem parse_problem(const json& j) {
    int n = require_int(j, "n");
    int m = require_int(j, "m");
    if (n < 1 || m < 1) throw ParseError("problem file: n and m must be positive");
    double T = require_number(j, "T");
    if (!(T > 0.0)) throw ParseError("problem file: T must be positive");
    double lambda = j.contains("lambda") ? require_number(j, "lambda") : 0.0;

    ControlProblem prob;
    try {
        prob.sys = LinearSystem(parse_matrix(j, "A", n, n), parse_matrix(j, "B", n, m), T);
    } catch (const std::invalid_argument& e) {
        throw ParseError(std::string("problem file: ") + e.what());
    }
    prob.x0 = parse_matrix(j, "x0", n, 1);
    prob.lambda = lambda;

    int M = j.contains("grid_points") ? require_int(j, "grid_points") : 200;
    if (M <= 0 || M % 2 != 0) throw ParseError("problem file: grid_points must be even and positive");
    prob.grid = TimeGrid(T, M);
    prob.n_max = j.contains("n_max") ? require_int(j, "n_max") : 7;
    if (prob.n_max < 1) throw ParseError("problem file: n_max must be >= 1");

    if (j.contains("tolerances")) {
        const auto& t = j["tolerances"];
        if (t.contains("rank_tol")) prob.tol.rank_tol = require_number(t, "rank_tol");
        if (t.contains("observability_threshold"))
            prob.tol.observability_threshold = require_number(t, "observability_threshold");
        if (t.contains("verify_tol")) prob.tol.verify_tol = require_number(t, "verify_tol");
    }

    prob.F = PolynomialNonlinearity(n);
    if (j.contains("tensors")) {
        if (!j["tensors"].is_array()) throw ParseError("problem file: \"tensors\" must be an array");
        std::vector<int> orders;
        for (const auto& tj : j["tensors"]) {
            int p = require_int(tj, "order");
            if (p < 2) throw ParseError("problem file: tensor order must be >= 2");
            for (int seen : orders)
                if (seen == p) throw ParseError("problem file: duplicate tensor order");
            orders.push_back(p);
            if (!tj.contains("entries") || !tj["entries"].is_array())
                throw ParseError("problem file: tensor is missing its \"entries\" array");
            for (const auto& ej : tj["entries"]) {
                TensorEntry e;
                e.out = require_int(ej, "out");
                e.value = require_number(ej, "value");
                if (!ej.contains("in") || !ej["in"].is_array() ||
                    static_cast<int>(ej["in"].size()) != p)
                    throw ParseError("problem file: tensor entry \"in\" must list one index per slot");
                for (const auto& idx : ej["in"]) e.in.push_back(idx.get<int>());
                try {
                    prob.F.add_entry(p, std::move(e));
                } catch (const std::invalid_argument& err) {
                    throw ParseError(std::string("problem file: ") + err.what());
                }
            }
        }
    }
    return prob;
}

inline ControlProblem load_problem(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open problem file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("problem file is not valid JSON: ") + e.what());
    }
    return parse_problem(j);
}

/// Decimal form with 17 significant digits; doubles survive a round trip.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline json number(double v) { return json(v); }

inline json matrix_to_json(const Eigen::MatrixXd& M) {
    json arr = json::array();
    for (int r = 0; r < M.rows(); ++r)
        for (int c = 0; c < M.cols(); ++c) arr.push_back(M(r, c));
    return arr;
}

/// CSV with header t, <prefix>_1..<prefix>_d.
inline void write_trajectory_csv(std::ostream& out, const Trajectory& traj,
                                 const std::string& prefix) {
    out << "t";
    for (int c = 1; c <= traj.dim(); ++c) out << "," << prefix << "_" << c;
    out << "\n";
    for (int k = 0; k <= traj.grid.M; ++k) {
        out << format_double(traj.grid.node(k));
        for (int c = 0; c < traj.dim(); ++c) out << "," << format_double(traj[k](c));
        out << "\n";
    }
}

inline Trajectory read_trajectory_csv(std::istream& in, const TimeGrid& grid) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("trajectory csv: empty file");
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            double v = 0.0;
            auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (res.ec != std::errc{}) throw ParseError("trajectory csv: non-numeric cell \"" + cell + "\"");
            row.push_back(v);
        }
        rows.push_back(std::move(row));
    }
    if (static_cast<int>(rows.size()) != grid.nodes())
        throw ParseError("trajectory csv: row count does not match the grid");
    int dim = static_cast<int>(rows.front().size()) - 1;
    if (dim < 1) throw ParseError("trajectory csv: needs at least one value column");
    Trajectory traj(grid, dim);
    for (int k = 0; k <= grid.M; ++k) {
        if (static_cast<int>(rows[static_cast<std::size_t>(k)].size()) != dim + 1)
            throw ParseError("trajectory csv: ragged row");
        for (int c = 0; c < dim; ++c) traj[k](c) = rows[static_cast<std::size_t>(k)][static_cast<std::size_t>(c + 1)];
    }
    return traj;
}

inline json certificate_to_json(const ConvergenceCertificate& c) {
    return json{{"lambda", c.lambda},
                {"u_norm", c.u_norm},
                {"phi_circ_norm_bound", c.phi_circ_norm_bound},
                {"majorant_value", c.majorant_value},
                {"condition_value", c.condition_value},
                {"satisfied", c.satisfied}};
}

inline json certificate_to_json(const ControlCertificate& c) {
    return json{{"c_T", c.c_T},
                {"alpha", c.alpha},
                {"beta", c.beta},
                {"B_spectral_norm", c.B_norm},
                {"C_phi", c.C_phi},
                {"u_circ_norm", c.u_circ_norm},
                {"C", c.C},
                {"C_prime", c.C_prime},
                {"condition1_value", c.condition1_value},
                {"u_norm_bound", std::isfinite(c.u_norm_bound) ? json(c.u_norm_bound) : json("unbounded")},
                {"condition2_value", c.condition2_value},
                {"part1_satisfied", c.part1_satisfied},
                {"part2_satisfied", c.part2_satisfied},
                {"norm_conventions",
                 "B: spectral; u entries: |x0| + L2(f); leaf solve bound: "
                 "(1+||A||sqrt(T))e^(||A||T)max(1,sqrt(T))+1"}};
}

inline json tree_rows_to_json(const std::vector<TreeReportRow>& rows) {
    json arr = json::array();
    for (const auto& r : rows)
        arr.push_back(json{{"tree", r.encoding},
                           {"internal", r.internal},
                           {"leaves", r.leaves},
                           {"total", r.total},
                           {"lambda_power", r.lambda_power},
                           {"contribution_s_norm", r.contribution_s_norm}});
    return arr;
}

}  // namespace io

}  // namespace butcher
