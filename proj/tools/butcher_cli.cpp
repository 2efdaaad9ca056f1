// Command-line front end: trees | solve | control | certify.

#include <CLI11.hpp>

#include <iostream>

#include "butcher/app.hpp"

int main(int argc, char** argv) {
    CLI::App cli{"Tree-indexed series ODE solver and open-loop control synthesis"};
    cli.require_subcommand(1);

    butcher::app::Options opt;
    int trees_n_max = 5;
    int threads = 1;

    auto* trees = cli.add_subcommand("trees", "List planar trees and their statistics");
    trees->add_option("--n-max", trees_n_max, "Largest total vertex count")->check(CLI::PositiveNumber);
    trees->add_flag("--coproduct", opt.show_coproduct, "Also print each tree's coproduct terms");

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--input", opt.input, "Problem file (JSON)")->required();
        cmd->add_option("--out", opt.out_dir, "Output directory for reports");
        cmd->add_option("--n-max", [&opt](const std::vector<std::string>& v) {
            opt.n_max = std::stoi(v.front());
            return true;
        }, "Override the truncation level");
        cmd->add_option("--grid", [&opt](const std::vector<std::string>& v) {
            opt.grid_points = std::stoi(v.front());
            return true;
        }, "Override the number of grid intervals (even)");
        cmd->add_option("--threads", threads, "Worker threads (currently single-threaded engine)");
    };

    auto* solve = cli.add_subcommand("solve", "Sum the series for given data (x0, f)");
    add_common(solve);
    solve->add_option("--source", opt.source, "Source table CSV, or \"zero\" (default)");

    auto* control = cli.add_subcommand("control", "Synthesize and verify an open-loop control");
    add_common(control);

    auto* certify = cli.add_subcommand("certify", "Compute convergence certificates only");
    add_common(certify);

    CLI11_PARSE(cli, argc, argv);

    try {
        if (trees->parsed()) return butcher::app::run_trees(trees_n_max, opt.show_coproduct, std::cout);
        if (solve->parsed()) return butcher::app::run_solve(opt, std::cout);
        if (control->parsed()) return butcher::app::run_control(opt, std::cout);
        return butcher::app::run_certify(opt, std::cout);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
