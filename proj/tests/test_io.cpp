#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "butcher/app.hpp"
#include "butcher/problem_io.hpp"

using namespace butcher;
using io::json;

namespace {

json scalar_doc() {
    return json{{"n", 1},
                {"m", 1},
                {"T", 1.0},
                {"lambda", 0.1},
                {"A", {0.0}},
                {"B", {1.0}},
                {"x0", {1.0}},
                {"grid_points", 100},
                {"n_max", 3},
                {"tensors",
                 json::array({json{{"order", 2},
                                   {"entries", json::array({json{{"out", 0},
                                                                 {"in", {0, 0}},
                                                                 {"value", 1.0}}})}}})}};
}

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("butcher_test_" + std::to_string(std::random_device{}()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

std::string write_doc(const TempDir& dir, const json& doc, const char* name = "problem.json") {
    auto p = dir.path / name;
    std::ofstream out(p);
    out << doc.dump(2);
    return p.string();
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("problem parsing round trip of the scalar document") {
    ControlProblem prob = io::parse_problem(scalar_doc());
    CHECK(prob.sys.n() == 1);
    CHECK(prob.sys.m() == 1);
    CHECK(prob.sys.T == 1.0);
    CHECK(prob.lambda == 0.1);
    CHECK(prob.x0(0) == 1.0);
    CHECK(prob.grid.M == 100);
    CHECK(prob.n_max == 3);
    CHECK(prob.F.has_order(2));
    CHECK(prob.F.max_order() == 2);
    CHECK_NOTHROW(prob.validate());
}

TEST_CASE("problem parsing defaults and tolerance overrides") {
    json doc = scalar_doc();
    doc.erase("grid_points");
    doc.erase("n_max");
    doc.erase("lambda");
    doc.erase("tensors");
    doc["tolerances"] = json{{"verify_tol", 1e-5}, {"rank_tol", 1e-8}};
    ControlProblem prob = io::parse_problem(doc);
    CHECK(prob.grid.M == 200);
    CHECK(prob.n_max == 7);
    CHECK(prob.lambda == 0.0);
    CHECK(prob.F.empty());
    CHECK(prob.tol.verify_tol == 1e-5);
    CHECK(prob.tol.rank_tol == 1e-8);
    CHECK(prob.tol.observability_threshold == kObservabilityThreshold);
}

TEST_CASE("problem parsing reports the offending field") {
    auto expect_error = [](json doc, const std::string& needle) {
        try {
            io::parse_problem(doc);
            FAIL("expected ParseError mentioning \"" << needle << "\"");
        } catch (const ParseError& e) {
            CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring(needle));
        }
    };

    json doc = scalar_doc();
    doc.erase("n");
    expect_error(doc, "n");

    doc = scalar_doc();
    doc["T"] = -1.0;
    expect_error(doc, "T");

    doc = scalar_doc();
    doc["A"] = json::array({1.0, 2.0});
    expect_error(doc, "A");

    doc = scalar_doc();
    doc["grid_points"] = 101;  // odd
    expect_error(doc, "grid_points");

    doc = scalar_doc();
    doc["tensors"][0]["order"] = 1;
    expect_error(doc, "order");

    doc = scalar_doc();
    doc["tensors"][0]["entries"][0]["in"] = json::array({0});
    expect_error(doc, "in");

    doc = scalar_doc();
    doc["tensors"][0]["entries"][0]["out"] = 5;
    expect_error(doc, "tensor entry");

    doc = scalar_doc();
    doc["tensors"].push_back(doc["tensors"][0]);
    expect_error(doc, "duplicate");
}

TEST_CASE("load_problem surfaces file-system and syntax failures") {
    CHECK_THROWS_AS(io::load_problem("/nonexistent/path.json"), ParseError);
    TempDir dir;
    auto p = dir.path / "bad.json";
    std::ofstream(p) << "{ not json";
    CHECK_THROWS_AS(io::load_problem(p.string()), ParseError);
}

TEST_CASE("trajectory csv round trips doubles exactly") {
    TimeGrid g(1.0, 10);
    Trajectory traj(g, 2);
    std::mt19937 rng(5150);
    std::uniform_real_distribution<double> dist(-10.0, 10.0);
    for (int k = 0; k <= g.M; ++k)
        for (int c = 0; c < 2; ++c) traj[k](c) = dist(rng) * std::exp(dist(rng) / 3.0);
    traj[3](1) = 1.0 / 3.0;  // not representable in decimal

    std::ostringstream out;
    io::write_trajectory_csv(out, traj, "x");
    std::istringstream in(out.str());
    Trajectory back = io::read_trajectory_csv(in, g);
    REQUIRE(back.dim() == 2);
    for (int k = 0; k <= g.M; ++k)
        for (int c = 0; c < 2; ++c) CHECK(back[k](c) == traj[k](c));

    // Header shape.
    std::istringstream header_in(out.str());
    std::string header;
    std::getline(header_in, header);
    CHECK(header == "t,x_1,x_2");

    // Malformed tables are rejected.
    std::istringstream empty("");
    CHECK_THROWS_AS(io::read_trajectory_csv(empty, g), ParseError);
    std::istringstream wrong_rows("t,x_1\n0,1\n");
    CHECK_THROWS_AS(io::read_trajectory_csv(wrong_rows, g), ParseError);
    std::string bad = out.str();
    bad.replace(bad.find(',', bad.find('\n')) + 1, 1, "x");  // first data cell
    std::istringstream nonnum(bad);
    CHECK_THROWS_AS(io::read_trajectory_csv(nonnum, g), ParseError);
}

TEST_CASE("format_double keeps 17 significant digits") {
    CHECK(io::format_double(0.1) == "0.10000000000000001");
    CHECK(io::format_double(1.0) == "1");
    double v = 1.0 / 3.0;
    CHECK(std::stod(io::format_double(v)) == v);
}

TEST_CASE("trees command lists the graded census") {
    std::ostringstream out;
    CHECK(app::run_trees(4, false, out) == app::kExitOk);
    std::string text = out.str();
    CHECK_THAT(text, Catch::Matchers::ContainsSubstring("o\t1\t0\t1"));
    CHECK_THAT(text, Catch::Matchers::ContainsSubstring("(oo)\t2\t1\t3"));
    CHECK_THAT(text, Catch::Matchers::ContainsSubstring("(ooo)\t3\t1\t4"));
    CHECK_THAT(text, !Catch::Matchers::ContainsSubstring("((oo)o)"));

    std::ostringstream bad;
    CHECK(app::run_trees(0, false, bad) == app::kExitParse);

    std::ostringstream with_cop;
    CHECK(app::run_trees(3, true, with_cop) == app::kExitOk);
    CHECK_THAT(with_cop.str(), Catch::Matchers::ContainsSubstring("1 * o.o (x) (oo)"));
    CHECK_THAT(with_cop.str(), Catch::Matchers::ContainsSubstring("1 * (oo) (x) o"));
}

TEST_CASE("solve command writes a report and trajectory") {
    TempDir dir;
    app::Options opt;
    opt.input = write_doc(dir, scalar_doc());
    opt.out_dir = (dir.path / "out").string();
    opt.n_max = 9;
    std::ostringstream log;
    CHECK(app::run_solve(opt, log) == app::kExitOk);

    json report = json::parse(slurp(dir.path / "out" / "report.json"));
    CHECK(report["n"] == 1);
    CHECK(report["lambda"] == 0.1);
    CHECK(report.contains("series_certificate"));
    CHECK(report.contains("residual_s_norm"));
    // Binary trees with <= 9 vertices: 1 + 1 + 2 + 5 + 14 across leaf counts.
    CHECK(report["trees"].size() == 23);

    std::ifstream csv(dir.path / "out" / "trajectory.csv");
    TimeGrid g(1.0, 100);
    Trajectory x = io::read_trajectory_csv(csv, g);
    CHECK(x.dim() == 1);
    // x(t) tracks 1/(1 - 0.1 t) to the truncation tail.
    CHECK(std::abs(x[g.M](0) - 1.0 / 0.9) < 1e-3);
}

TEST_CASE("solve command rejects a broken input with the parse status") {
    TempDir dir;
    app::Options opt;
    opt.input = (dir.path / "missing.json").string();
    opt.out_dir = dir.path.string();
    std::ostringstream log;
    CHECK(app::run_solve(opt, log) == app::kExitParse);
    CHECK_THAT(log.str(), Catch::Matchers::ContainsSubstring("error"));
}

TEST_CASE("control command synthesizes, verifies, and reports") {
    TempDir dir;
    app::Options opt;
    opt.input = write_doc(dir, scalar_doc());
    opt.out_dir = (dir.path / "out").string();
    opt.n_max = 7;
    std::ostringstream log;
    CHECK(app::run_control(opt, log) == app::kExitOk);

    json report = json::parse(slurp(dir.path / "out" / "report.json"));
    CHECK(report["kalman_rank"] == 1);
    CHECK(report["n_max"] == 7);  // override applied
    CHECK(report["terminal_norm"].get<double>() <= 1e-4);
    CHECK(report.contains("control_certificate"));
    CHECK(report["tree_controls"][0]["tree"] == "o");

    TimeGrid g(1.0, 100);
    std::ifstream control_csv(dir.path / "out" / "control.csv");
    Trajectory v = io::read_trajectory_csv(control_csv, g);
    // v = -1 - lambda/3 + O(lambda^2) pointwise for this problem.
    CHECK(std::abs(v[0](0) + 1.0 + 0.1 / 3.0) < 5e-3);

    std::ifstream state_csv(dir.path / "out" / "state.csv");
    Trajectory x = io::read_trajectory_csv(state_csv, TimeGrid(1.0, 200));
    CHECK(std::abs(x[0](0) - 1.0) < 1e-14);
    CHECK(x[200].norm() <= 1e-4);
}

TEST_CASE("control command exit statuses for failure modes") {
    TempDir dir;
    std::ostringstream log;

    SECTION("uncontrollable pair") {
        json doc = scalar_doc();
        doc["B"] = {0.0};
        app::Options opt;
        opt.input = write_doc(dir, doc);
        opt.out_dir = (dir.path / "out").string();
        CHECK(app::run_control(opt, log) == app::kExitKalman);
        CHECK_THAT(log.str(), Catch::Matchers::ContainsSubstring("rank"));
    }

    SECTION("verification tolerance exceeded") {
        json doc = scalar_doc();
        doc["n_max"] = 1;  // linear control only; quadratic term left unserved
        doc["lambda"] = 0.4;
        doc["tolerances"] = json{{"verify_tol", 1e-9}};
        app::Options opt;
        opt.input = write_doc(dir, doc);
        opt.out_dir = (dir.path / "out").string();
        CHECK(app::run_control(opt, log) == app::kExitVerify);
    }
}

TEST_CASE("certify command prints both certificates") {
    TempDir dir;
    app::Options opt;
    opt.input = write_doc(dir, scalar_doc());
    std::ostringstream log;
    CHECK(app::run_certify(opt, log) == app::kExitOk);
    json report = json::parse(log.str());
    CHECK(report.contains("control_certificate"));
    CHECK(report.contains("series_certificate"));
    CHECK(report["control_certificate"]["C"].get<double>() == Catch::Approx(32.0));
}

TEST_CASE("command outputs are deterministic across runs") {
    TempDir dir;
    app::Options opt;
    opt.input = write_doc(dir, scalar_doc());
    opt.n_max = 7;  // deep enough that verification stays under tolerance
    std::string first, second;
    for (std::string* dest : {&first, &second}) {
        opt.out_dir = (dir.path / (dest == &first ? "a" : "b")).string();
        std::ostringstream log;
        REQUIRE(app::run_control(opt, log) == app::kExitOk);
        json report = json::parse(slurp(std::filesystem::path(opt.out_dir) / "report.json"));
        report.erase("timing_seconds");
        *dest = report.dump() + slurp(std::filesystem::path(opt.out_dir) / "control.csv");
    }
    CHECK(first == second);
}
