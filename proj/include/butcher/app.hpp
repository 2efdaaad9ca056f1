#pragma once

// Command implementations behind the CLI front end. Each command returns the
// process exit status so the binary's contract can be tested directly:
//   0 success, 2 parse error, 3 Kalman/observability failure,
//   4 verification failure (terminal state above tolerance).

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "butcher/control.hpp"
#include "butcher/planar_tree.hpp"
#include "butcher/problem_io.hpp"
#include "butcher/series.hpp"

namespace butcher::app {

inline constexpr int kExitOk = 0;
inline constexpr int kExitParse = 2;
inline constexpr int kExitKalman = 3;
inline constexpr int kExitVerify = 4;

struct Options {
    std::string input;
    std::string out_dir = ".";
    std::optional<int> n_max;
    std::optional<int> grid_points;
    std::string source;  ///< "zero" or a CSV path (solve command)
    bool show_coproduct = false;
};

namespace detail {

inline void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << content;
}

inline void apply_overrides(ControlProblem& prob, const Options& opt) {
    if (opt.n_max) prob.n_max = *opt.n_max;
    if (opt.grid_points) prob.grid = TimeGrid(prob.sys.T, *opt.grid_points);
}

inline io::json report_header(const ControlProblem& prob) {
    return io::json{{"n", prob.sys.n()},
                    {"m", prob.sys.m()},
                    {"T", prob.sys.T},
                    {"lambda", prob.lambda},
                    {"A", io::matrix_to_json(prob.sys.A)},
                    {"B", io::matrix_to_json(prob.sys.B)},
                    {"x0", io::matrix_to_json(prob.x0)},
                    {"grid_points", prob.grid.M},
                    {"n_max", prob.n_max}};
}

}  // namespace detail

/// `trees`: list every tree up to the vertex-count cap with its statistics,
/// optionally with its coproduct terms.
inline int run_trees(int n_max, bool show_coproduct, std::ostream& out) {
    if (n_max < 1) {
        out << "error: n-max must be >= 1\n";
        return kExitParse;
    }
    out << "tree\tleaves\tinternal\ttotal\n";
    for (const auto& b : enumerate_trees(n_max)) {
        out << b.encode() << "\t" << b.leaves() << "\t" << b.internal() << "\t" << b.total()
            << "\n";
        if (show_coproduct) {
            for (const auto& term : coproduct(b)) {
                out << "  " << term.coeff << " * ";
                for (std::size_t i = 0; i < term.left.size(); ++i) {
                    if (i) out << ".";
                    out << term.left[i].encode();
                }
                out << " (x) " << term.right.encode() << "\n";
            }
        }
    }
    return kExitOk;
}

/// `solve`: sum the series for data (x0, f) supported on the leaf, emit the
/// trajectory, residual, and the series certificate.
inline int run_solve(const Options& opt, std::ostream& log) {
    ControlProblem prob;
    Trajectory source;
    try {
        prob = io::load_problem(opt.input);
        detail::apply_overrides(prob, opt);
        source = Trajectory(prob.grid, prob.sys.n());
        if (!opt.source.empty() && opt.source != "zero") {
            std::ifstream in(opt.source);
            if (!in) throw ParseError("cannot open source table: " + opt.source);
            source = io::read_trajectory_csv(in, prob.grid);
            if (source.dim() != prob.sys.n()) throw ParseError("source table dimension mismatch");
        }
    } catch (const ParseError& e) {
        log << "error: " << e.what() << "\n";
        return kExitParse;
    }

    auto t0 = std::chrono::steady_clock::now();
    SeriesData u(prob.grid);
    u.set(leaf(), SeriesEntry{prob.x0, source});
    SeriesResult result = sum_series(u, prob.lambda, prob.n_max, prob.sys, prob.F);
    ConvergenceCertificate cert = convergence_certificate(u, prob.lambda, prob.sys, prob.F);
    double residual = s_norm(equation_residual(result.x, prob.sys, &source, prob.lambda, prob.F));
    auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    io::json report = detail::report_header(prob);
    report["series_certificate"] = io::certificate_to_json(cert);
    report["trees"] = io::tree_rows_to_json(result.rows);
    report["residual_s_norm"] = residual;
    report["last_level_mass"] = result.last_level_mass;
    report["timing_seconds"] = elapsed;

    std::filesystem::path dir(opt.out_dir);
    std::filesystem::create_directories(dir);
    detail::write_file(dir / "report.json", report.dump(2) + "\n");
    std::ostringstream csv;
    io::write_trajectory_csv(csv, result.x, "x");
    detail::write_file(dir / "trajectory.csv", csv.str());

    if (!cert.satisfied)
        log << "warning: series certificate not satisfied (condition value "
            << io::format_double(cert.condition_value) << ")\n";
    log << "solve: residual " << io::format_double(residual) << ", report in " << dir.string()
        << "\n";
    return kExitOk;
}

/// `control`: synthesize the tree-indexed control, verify the closed
/// trajectory with the independent integrator, and emit everything.
inline int run_control(const Options& opt, std::ostream& log) {
    ControlProblem prob;
    try {
        prob = io::load_problem(opt.input);
        detail::apply_overrides(prob, opt);
    } catch (const ParseError& e) {
        log << "error: " << e.what() << "\n";
        return kExitParse;
    }

    auto t0 = std::chrono::steady_clock::now();
    SynthesisResult synth(prob.grid);
    try {
        synth = synthesize(prob);
    } catch (const ObservabilityError& e) {
        log << "error: " << e.what() << " (rank(B, AB, ..., A^(n-1)B) < n)\n";
        return kExitKalman;
    }
    VerificationResult verification = verify_control(prob, synth.control);
    ConvergenceCertificate series_cert =
        convergence_certificate(synth.u, prob.lambda, prob.sys, prob.F);
    auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    io::json tree_rows = io::json::array();
    for (const auto& tc : synth.tree_controls)
        tree_rows.push_back(io::json{{"tree", tc.tree.encode()},
                                     {"internal", tc.tree.internal()},
                                     {"y0_min", io::matrix_to_json(tc.y0_min)},
                                     {"v_l2_norm", l2_norm(tc.v)}});

    io::json report = detail::report_header(prob);
    report["kalman_rank"] = kalman_rank(prob.sys, prob.tol.rank_tol);
    report["gramian"] = io::json{{"c_T", synth.gramian.c_T},
                                 {"alpha", synth.gramian.alpha},
                                 {"beta", synth.gramian.beta}};
    report["tree_controls"] = tree_rows;
    report["control_certificate"] = io::certificate_to_json(synth.certificate);
    report["series_certificate"] = io::certificate_to_json(series_cert);
    report["terminal_norm"] = verification.terminal_norm;
    report["verify_tol"] = prob.tol.verify_tol;
    report["timing_seconds"] = elapsed;

    std::filesystem::path dir(opt.out_dir);
    std::filesystem::create_directories(dir);
    detail::write_file(dir / "report.json", report.dump(2) + "\n");
    std::ostringstream control_csv;
    io::write_trajectory_csv(control_csv, synth.control, "v");
    detail::write_file(dir / "control.csv", control_csv.str());
    std::ostringstream state_csv;
    io::write_trajectory_csv(state_csv, verification.x, "x");
    detail::write_file(dir / "state.csv", state_csv.str());

    log << "control: |x(T)| = " << io::format_double(verification.terminal_norm) << ", report in "
        << dir.string() << "\n";
    if (verification.terminal_norm > prob.tol.verify_tol) {
        log << "verification failed: |x(T)| above tolerance "
            << io::format_double(prob.tol.verify_tol) << "\n";
        return kExitVerify;
    }
    return kExitOk;
}

/// `certify`: both certificates, no verification run.
inline int run_certify(const Options& opt, std::ostream& log) {
    ControlProblem prob;
    try {
        prob = io::load_problem(opt.input);
        detail::apply_overrides(prob, opt);
    } catch (const ParseError& e) {
        log << "error: " << e.what() << "\n";
        return kExitParse;
    }

    SynthesisResult synth(prob.grid);
    try {
        synth = synthesize(prob);
    } catch (const ObservabilityError& e) {
        log << "error: " << e.what() << " (rank(B, AB, ..., A^(n-1)B) < n)\n";
        return kExitKalman;
    }
    ConvergenceCertificate series_cert =
        convergence_certificate(synth.u, prob.lambda, prob.sys, prob.F);

    io::json report = detail::report_header(prob);
    report["control_certificate"] = io::certificate_to_json(synth.certificate);
    report["series_certificate"] = io::certificate_to_json(series_cert);
    log << report.dump(2) << "\n";
    return kExitOk;
}

}  // namespace butcher::app
