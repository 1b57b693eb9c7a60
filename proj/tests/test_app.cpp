#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "mrc/app.hpp"

using namespace mrc;
using namespace mrc::app;

namespace {

class TempDir {
public:
    TempDir()
    {
        static int counter = 0;
        path_ = fs::temp_directory_path() /
                fmt::format("mrc_test_{}_{}", ::getpid(), counter++);
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& s) const { return path_ / s; }

private:
    fs::path path_;
};

std::string read_file(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path write_config(const TempDir& dir, const json& j, const std::string& name = "config.json")
{
    const fs::path p = dir / name;
    std::ofstream(p) << j.dump(2);
    return p;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p)
{
    std::vector<std::vector<std::string>> rows;
    std::ifstream in(p);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            cells.push_back(cell);
        if (!line.empty() && line.back() == ',')
            cells.emplace_back();
        rows.push_back(cells);
    }
    return rows;
}

std::size_t column(const std::vector<std::string>& header, const std::string& name)
{
    const auto it = std::find(header.begin(), header.end(), name);
    EXPECT_NE(it, header.end()) << name;
    return static_cast<std::size_t>(it - header.begin());
}

json band_limited_config()
{
    return json::parse(R"({
      "surface": {"preset": "sphere", "a": 1.0},
      "boundary_condition": {"kind": "dirichlet"},
      "data": {"type": "band_limited", "coefficients": [{"l": 3, "m": 2, "value": 1.0}]},
      "mrc": {"epsilon": 1e-10, "L_start": 2, "L_max": 10}
    })");
}

json bump_config()
{
    return json::parse(R"({
      "surface": {"preset": "cosine_bump", "a": 1.0, "delta": 0.2, "k": 2, "p": 3},
      "boundary_condition": {"kind": "dirichlet"},
      "data": {"type": "point_source", "z": [0.3, 0.0, 0.0], "q": 1.0},
      "mrc": {"epsilon": 1e-6, "L_max": 40},
      "outputs": {"points": [[0.0, 0.0, 3.0]]}
    })");
}

int solve(const fs::path& config, const fs::path& out)
{
    std::ostringstream err;
    return solve_command(config, out, false, err);
}

int sweep(const fs::path& config, const fs::path& out, int jobs = 1)
{
    std::ostringstream err;
    return sweep_command(config, out, jobs, err);
}

} // namespace

TEST(Solve, BandLimitedSphereConvergesAtItsDegree)
{
    TempDir dir;
    const auto cfg = write_config(dir, band_limited_config());
    ASSERT_EQ(solve(cfg, dir / "out"), exit_ok);
    const json report = json::parse(read_file(dir / "out/report.json"));
    EXPECT_EQ(report["chosen_L"], 3);
    EXPECT_EQ(report["termination"], "converged");
    EXPECT_LE(report["final_residual"].get<double>(), 1e-12);
    EXPECT_NEAR(report["coefficients"][flatten(3, 2)].get<double>(), 1.0, 1e-12);
    EXPECT_TRUE(fs::exists(dir / "out/history.csv"));
    EXPECT_TRUE(fs::exists(dir / "out/field_error.csv"));
}

TEST(Solve, ConfigErrorWritesNothing)
{
    TempDir dir;
    json j = band_limited_config();
    j["mrc"]["epsilon"] = -1.0;
    const fs::path out = dir / "out";
    EXPECT_EQ(solve(write_config(dir, j), out), exit_config);
    EXPECT_FALSE(fs::exists(out));

    for (auto mutate : std::vector<std::function<void(json&)>>{
             [](json& c) { c["mrc"]["bogus"] = 1; },
             [](json& c) { c["surface"]["preset"] = "torus"; },
             [](json& c) { c["data"] = json::parse(R"({"type": "point_source", "z": [1.5, 0, 0]})"); },
             [](json& c) { c["outputs"] = json::parse(R"({"radii": [0.5]})"); },
             [](json& c) { c["outputs"] = json::parse(R"({"points": [[0.1, 0, 0]]})"); },
             [](json& c) { c["boundary_condition"] = json::parse(R"({"kind": "robin", "robin_sigma": -1})"); },
             [](json& c) { c["quadrature"] = "fine"; },
             [](json& c) { c["data"]["coefficients"][0]["m"] = 4; },
         }) {
        json bad = band_limited_config();
        mutate(bad);
        EXPECT_EQ(solve(write_config(dir, bad), out), exit_config) << bad.dump();
        EXPECT_FALSE(fs::exists(out));
    }
    EXPECT_EQ(solve(dir / "missing.json", out), exit_config);
    std::ofstream(dir / "broken.json") << "{ not json";
    EXPECT_EQ(solve(dir / "broken.json", out), exit_config);
    EXPECT_FALSE(fs::exists(out));
}

TEST(Solve, ExitStatusDistinguishesFailureKinds)
{
    TempDir dir;
    json geometry = band_limited_config();
    geometry["surface"] = json::parse(R"({"preset": "spheroid", "a": 1.0, "e": -1.5})");
    EXPECT_EQ(solve(write_config(dir, geometry), dir / "g"), exit_geometry);
    EXPECT_FALSE(fs::exists(dir / "g"));

    json capped = bump_config();
    capped["mrc"] = json::parse(R"({"epsilon": 1e-14, "L_max": 4})");
    EXPECT_EQ(solve(write_config(dir, capped), dir / "c"), exit_nonconvergence);
    const json report = json::parse(read_file(dir / "c/report.json"));
    EXPECT_EQ(report["termination"], "L_max_reached");
    EXPECT_EQ(report["chosen_L"], 4);
}

TEST(Solve, BumpHistoryResidualStrictlyDecreases)
{
    TempDir dir;
    ASSERT_EQ(solve(write_config(dir, bump_config()), dir / "out"), exit_ok);
    const auto rows = read_csv(dir / "out/history.csv");
    ASSERT_GE(rows.size(), 3u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"L", "residual_l2", "residual_rel", "sup_residual", "rank",
                                                 "cond_estimate"}));
    for (std::size_t i = 2; i < rows.size(); ++i)
        EXPECT_LT(std::stod(rows[i][1]), std::stod(rows[i - 1][1])) << "row " << i;

    const auto errors = read_csv(dir / "out/field_error.csv");
    ASSERT_EQ(errors.size(), 2u);
    EXPECT_EQ(errors[0], (std::vector<std::string>{"R", "l2_error", "sup_error"}));
    EXPECT_LE(std::stod(errors[1][1]), 1e-5);
}

TEST(Solve, ReportContainsEveryField)
{
    TempDir dir;
    ASSERT_EQ(solve(write_config(dir, bump_config()), dir / "out"), exit_ok);
    const json r = json::parse(read_file(dir / "out/report.json"));
    for (const char* key : {"epsilon", "final_residual", "final_residual_rel", "final_sup_residual", "data_norm",
                            "cond_estimate", "svd_rtol"})
        EXPECT_TRUE(r.at(key).is_number_float()) << key;
    for (const char* key : {"chosen_L", "monotonicity_violations"})
        EXPECT_TRUE(r.at(key).is_number_integer()) << key;
    for (const char* key : {"termination", "solver_error", "data_type"})
        EXPECT_TRUE(r.at(key).is_string()) << key;
    EXPECT_TRUE(r.at("converged").is_boolean());
    EXPECT_TRUE(r.at("analytic_derivatives").is_boolean());
    EXPECT_TRUE(r.at("quadrature").at("refined").is_boolean());
    EXPECT_TRUE(r.at("quadrature").at("n_theta").is_number_integer());
    EXPECT_TRUE(r.at("boundary_condition").at("kind").is_string());
    EXPECT_TRUE(r.at("surface").at("enclosing_radius").is_number());

    const int L = r.at("chosen_L");
    EXPECT_EQ(r.at("coefficients").size(), static_cast<std::size_t>(basis_size(L)));
    ASSERT_FALSE(r.at("history").empty());
    for (const auto& step : r.at("history"))
        for (const char* key : {"L", "residual_l2", "residual_rel", "sup_residual", "rank", "cond_estimate"})
            EXPECT_TRUE(step.contains(key)) << key;
    EXPECT_EQ(r.at("field_errors").size(), 1u);
    ASSERT_EQ(r.at("evaluations").size(), 1u);
    EXPECT_LE(std::abs(r.at("evaluations")[0].at("error").get<double>()), 1e-8);
    EXPECT_TRUE(r.at("config").is_object());
}

TEST(Solve, FloatsUseSeventeenDigits)
{
    EXPECT_EQ(format_double(0.1), "0.10000000000000001");
    EXPECT_EQ(format_double(1.0), "1");
    EXPECT_EQ(dump_json(json{{"x", 0.1}}), "{\n  \"x\": 0.10000000000000001\n}\n");
    EXPECT_EQ(dump_json(json{{"x", std::nan("")}}), "{\n  \"x\": null\n}\n");
    EXPECT_EQ(dump_json(json{{"x", 2.0}, {"n", 2}}), "{\n  \"x\": 2.0,\n  \"n\": 2\n}\n");
}

TEST(Solve, ConfigRoundTripReproducesReport)
{
    TempDir dir;
    json j = bump_config();
    j["boundary_condition"] = json::parse(R"({"kind": "robin", "robin_sigma": 0.7})");
    j["mrc"]["epsilon"] = 3.3e-6;
    const RunConfig first = parse_run_config(j);
    const RunConfig second = parse_run_config(json::parse(dump_json(to_json(first))));
    EXPECT_EQ(dump_json(to_json(first)), dump_json(to_json(second)));
    EXPECT_EQ(dump_json(report_json(first, execute(first))), dump_json(report_json(second, execute(second))));
}

TEST(Solve, TabulatedDataMatchesClosedFormTrace)
{
    TempDir dir;
    const auto spec = SurfaceSpec::spheroid(1.0, 0.3);
    const auto rule = build_quadrature(spec, 12, 22);
    const PointSource src{Vec3(0.1, 0.0, 0.2), 1.0};
    {
        std::ofstream csv(dir / "trace.csv");
        csv << "theta,phi,f\n";
        for (const auto& n : rule.nodes)
            csv << format_double(n.theta) << "," << format_double(n.phi) << ","
                << format_double(src.value(n.position)) << "\n";
    }
    json tab = json::parse(R"({
      "surface": {"preset": "spheroid", "a": 1.0, "e": 0.3},
      "data": {"type": "tabulated", "file": "trace.csv"},
      "mrc": {"epsilon": 1e-6, "L_max": 10},
      "quadrature": {"n_theta": 12, "n_phi": 22}
    })");
    ASSERT_EQ(solve(write_config(dir, tab), dir / "tab"), exit_ok);
    EXPECT_FALSE(fs::exists(dir / "tab/field_error.csv"));

    json closed = tab;
    closed["data"] = json::parse(R"({"type": "point_source", "z": [0.1, 0.0, 0.2]})");
    ASSERT_EQ(solve(write_config(dir, closed, "closed.json"), dir / "closed"), exit_ok);
    const json a = json::parse(read_file(dir / "tab/report.json"));
    const json b = json::parse(read_file(dir / "closed/report.json"));
    EXPECT_EQ(a["coefficients"], b["coefficients"]);
    EXPECT_EQ(a["history"], b["history"]);

    // a rule the table was not sampled on
    tab["quadrature"] = json::parse(R"({"n_theta": 13, "n_phi": 22})");
    EXPECT_EQ(solve(write_config(dir, tab), dir / "bad"), exit_config);
    EXPECT_FALSE(fs::exists(dir / "bad"));
}

TEST(Sweep, EpsilonGridNeedsNonDecreasingDegree)
{
    TempDir dir;
    json j = json::parse(R"({
      "surface": {"preset": "sphere", "a": 1.0},
      "data": {"type": "point_source", "z": [0.3, 0.0, 0.0]},
      "mrc": {"L_start": 0, "L_max": 40},
      "grid": {"mrc.epsilon": [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8]}
    })");
    ASSERT_EQ(sweep(write_config(dir, j), dir / "out"), exit_ok);
    const auto rows = read_csv(dir / "out/sweep.csv");
    ASSERT_EQ(rows.size(), 8u);
    const std::size_t iL = column(rows[0], "chosen_L");
    const std::size_t it = column(rows[0], "termination");
    for (std::size_t i = 1; i < rows.size(); ++i)
        EXPECT_EQ(rows[i][it], "converged");
    for (std::size_t i = 2; i < rows.size(); ++i)
        EXPECT_GE(std::stoi(rows[i][iL]), std::stoi(rows[i - 1][iL]));
    EXPECT_GT(std::stoi(rows.back()[iL]), std::stoi(rows[1][iL]));
}

TEST(Sweep, FlatBumpRowReproducesSphere)
{
    TempDir dir;
    json bumps = bump_config();
    bumps.erase("outputs");
    bumps["grid"] = json::parse(R"({"surface.delta": [0.0, 0.1, 0.2]})");
    ASSERT_EQ(sweep(write_config(dir, bumps), dir / "bumps"), exit_ok);

    json sphere = bumps;
    sphere["surface"] = json::parse(R"({"preset": "sphere", "a": 1.0})");
    sphere["grid"] = json::parse(R"({"surface.a": [1.0]})");
    ASSERT_EQ(sweep(write_config(dir, sphere, "sphere.json"), dir / "sphere"), exit_ok);

    const auto b = read_csv(dir / "bumps/sweep.csv");
    const auto s = read_csv(dir / "sphere/sweep.csv");
    ASSERT_EQ(b.size(), 4u);
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(std::vector<std::string>(b[1].begin() + 1, b[1].end()),
              std::vector<std::string>(s[1].begin() + 1, s[1].end()));
    EXPECT_NE(b[2][column(b[0], "final_residual")], b[1][column(b[0], "final_residual")]);
}

TEST(Sweep, EmptyGridWritesHeaderOnly)
{
    TempDir dir;
    json j = bump_config();
    j["grid"] = json::object();
    ASSERT_EQ(sweep(write_config(dir, j), dir / "out"), exit_ok);
    EXPECT_EQ(read_file(dir / "out/sweep.csv"),
              "termination,chosen_L,final_residual,final_residual_rel,sr_radius,sr_l2_error,exit_code,error\n");
}

TEST(Sweep, CellFailuresStayInTheirRows)
{
    TempDir dir;
    json j = band_limited_config();
    j["grid"] = json::parse(R"({"mrc.epsilon": [1e-10, -1.0], "surface.a": [1.0, 0.0]})");
    ASSERT_EQ(sweep(write_config(dir, j), dir / "out"), exit_ok);
    const auto rows = read_csv(dir / "out/sweep.csv");
    ASSERT_EQ(rows.size(), 5u);
    EXPECT_EQ(rows[0][0], "mrc.epsilon");
    EXPECT_EQ(rows[0][1], "surface.a");
    const std::size_t ic = column(rows[0], "exit_code");
    // the last key varies fastest
    EXPECT_EQ(rows[1][ic], "0");
    EXPECT_EQ(rows[2][ic], "3");
    EXPECT_EQ(rows[3][ic], "2");
    EXPECT_EQ(rows[4][ic], "2");
    EXPECT_EQ(rows[3][column(rows[0], "termination")], "error");
}

TEST(Sweep, ConcurrentCellsGiveIdenticalCsv)
{
    TempDir dir;
    json j = bump_config();
    j.erase("outputs");
    j["mrc"]["L_max"] = 20;
    j["grid"] = json::parse(R"({"mrc.epsilon": [1e-3, 1e-5], "surface.delta": [0.0, 0.15]})");
    const auto cfg = write_config(dir, j);
    ASSERT_EQ(sweep(cfg, dir / "one", 1), exit_ok);
    ASSERT_EQ(sweep(cfg, dir / "three", 3), exit_ok);
    EXPECT_EQ(read_file(dir / "one/sweep.csv"), read_file(dir / "three/sweep.csv"));
}

TEST(Sweep, RejectsMalformedGrids)
{
    TempDir dir;
    json j = bump_config();
    j["grid"] = json::parse(R"({"mrc.epsilon": 1e-3})");
    EXPECT_EQ(sweep(write_config(dir, j), dir / "out"), exit_config);
    j["grid"] = json::object();
    for (int i = 0; i < 5; ++i)
        j["grid"][fmt::format("outputs.error_n_phi{}", i)] = std::vector<int>(7, 0);
    EXPECT_EQ(sweep(write_config(dir, j), dir / "out"), exit_config);
    EXPECT_FALSE(fs::exists(dir / "out"));
}

TEST(Cli, ExitCodesFromTheBinary)
{
    TempDir dir;
    auto run = [&](const std::string& args) {
        const std::string cmd = std::string(MRC_CLI_PATH) + " " + args + " > /dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    };
    const std::string configs = MRC_CONFIG_DIR;
    EXPECT_EQ(run("solve " + configs + "/sphere_band_limited.json --out " + (dir / "a").string()), 0);
    EXPECT_TRUE(fs::exists(dir / "a/report.json"));

    json bad = band_limited_config();
    bad["mrc"]["epsilon"] = -1.0;
    EXPECT_EQ(run("solve " + write_config(dir, bad).string() + " --out " + (dir / "b").string()), 2);
    EXPECT_FALSE(fs::exists(dir / "b"));
    EXPECT_EQ(run(""), 2);
    EXPECT_EQ(run("sweep " + configs + "/sweep_delta.json --jobs 2 --out " + (dir / "c").string()), 0);
    EXPECT_EQ(read_csv(dir / "c/sweep.csv").size(), 4u);
}
