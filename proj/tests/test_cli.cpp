#include "spincav/config.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

const std::string kCli = SPINCAV_CLI;
const fs::path kConfigs = SPINCAV_CONFIGS;

// fresh scratch directory per test
fs::path scratch() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    fs::path d = fs::temp_directory_path() /
                 ("spincav_cli_" + std::string(info->test_suite_name()) + "_" + info->name() + "_" +
                  std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

int run(const std::string& args, const fs::path& dir) {
    const std::string cmd = "\"" + kCli + "\" " + args + " > \"" + (dir / "stdout.txt").string() + "\" 2> \"" +
                            (dir / "stderr.txt").string() + "\"";
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void put(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

// data rows (non-comment, non-header) split on commas
std::vector<std::vector<std::string>> rows(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::vector<std::string>> out;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (header) {
            header = false;
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cells.push_back(c);
        out.push_back(cells);
    }
    return out;
}

std::string header_line(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty() && line[0] != '#') return line;
    return {};
}

std::string cfg(const std::string& name) { return (kConfigs / name).string(); }

}  // namespace

TEST(Cli, SteadyWritesSCurveWithConfigHeader) {
    const auto d = scratch();
    ASSERT_EQ(run("steady --config " + cfg("switching_steady.json") + " --out " + d.string(), d), 0) << slurp(d / "stderr.txt");
    const auto f = d / "switching_scurve.csv";
    ASSERT_TRUE(fs::exists(f));
    const auto text = slurp(f);
    EXPECT_NE(text.find("# config {"), std::string::npos);
    EXPECT_NE(text.find("\"M\":201"), std::string::npos);
    EXPECT_NE(text.find("\"window_mult\":4.0"), std::string::npos);
    EXPECT_EQ(header_line(f), "eta,eta_normalized,a0,a0_sq,branch,stable");
    const auto r = rows(f);
    ASSERT_EQ(r.size(), 3000u);
    bool unstable = false;
    for (const auto& row : r) unstable = unstable || row[4] == "unstable";
    EXPECT_TRUE(unstable);
    EXPECT_NE(slurp(d / "stdout.txt").find("bistable"), std::string::npos);
    // reference drives: all above the window, on the upper branch
    const auto roots = rows(d / "switching_roots.csv");
    ASSERT_EQ(roots.size(), 4u);
    for (const auto& row : roots) EXPECT_EQ(row[4], "upper");
}

TEST(Cli, ZeroCouplingIsStraightLine) {
    const auto d = scratch();
    ASSERT_EQ(run("steady --config " + cfg("omega0.json") + " --out " + d.string(), d), 0);
    const auto r = rows(d / "omega0_scurve.csv");
    ASSERT_EQ(r.size(), 200u);
    for (const auto& row : r) {
        EXPECT_NEAR(std::stod(row[0]) / std::stod(row[2]), 1.0, 1e-11);
        EXPECT_EQ(row[4], "unique");
    }
}

TEST(Cli, NegativeKappaFailsWithoutWriting) {
    const auto d = scratch();
    put(d / "bad.json", R"({"cavity": {"kappa_hz": -0.8e6}, "output": {"prefix": "bad"}})");
    EXPECT_EQ(run("steady --config " + (d / "bad.json").string() + " --out " + (d / "out").string(), d), 2);
    EXPECT_FALSE(fs::exists(d / "out"));
    EXPECT_NE(slurp(d / "stderr.txt").find("kappa"), std::string::npos);
}

TEST(Cli, UnknownKeysAndFlagsAreConfigErrors) {
    const auto d = scratch();
    put(d / "typo.json", R"({"spectral": {"fhwm_hz": 9.4e6}})");
    EXPECT_EQ(run("steady --config " + (d / "typo.json").string() + " --out " + d.string(), d), 2);
    put(d / "task.json", R"({"task": {"t_end_gamma_par": 3}})");
    EXPECT_EQ(run("steady --config " + (d / "task.json").string() + " --out " + d.string(), d), 2);
    EXPECT_EQ(run("steady --no-such-flag", d), 2);
    EXPECT_EQ(run("", d), 2);
    EXPECT_EQ(run("steady --config " + (d / "missing.json").string(), d), 2);
    put(d / "offres.json", R"({"cavity": {"omega_c_hz": 2.871e9}})");
    EXPECT_EQ(run("steady --config " + (d / "offres.json").string() + " --out " + d.string(), d), 2);
}

TEST(Cli, RerunsAreByteIdentical) {
    const auto d = scratch();
    put(d / "small.json", R"({"spectral": {"M": 21}, "task": {"omegas_hz": [8e6, 12e6], "eta_points": 41}})");
    const std::string small = "decay --config " + (d / "small.json").string() + " --out ";
    ASSERT_EQ(run(small + (d / "a").string(), d), 0);
    ASSERT_EQ(run(small + (d / "b").string() + " --workers 2", d), 0);
    // the output dir is part of the echoed config, so compare past that line
    auto strip = [](std::string s) {
        const auto p = s.find("\"dir\":");
        const auto q = s.find(',', p);
        return s.erase(p, q - p);
    };
    EXPECT_EQ(strip(slurp(d / "a" / "decay_zeta.csv")), strip(slurp(d / "b" / "decay_zeta.csv")));
    ASSERT_EQ(run("steady --config " + cfg("switching_steady.json") + " --out " + (d / "c").string(), d), 0);
    const auto first = slurp(d / "c" / "switching_scurve.csv");
    ASSERT_EQ(run("steady --config " + cfg("switching_steady.json") + " --out " + (d / "c").string(), d), 0);
    EXPECT_EQ(first, slurp(d / "c" / "switching_scurve.csv"));
}

TEST(Cli, EmptySweepGivesHeaderOnlyFiles) {
    const auto d = scratch();
    // coarse M inflates C, so stay at the default cluster count here
    put(d / "low.json", R"({"task": {"omega_start_hz": 1e6, "omega_stop_hz": 4e6, "omega_points": 4}})");
    ASSERT_EQ(run("sweep-omega --config " + (d / "low.json").string() + " --out " + d.string(), d), 0);
    for (const char* f : {"gaussian", "qgaussian", "lorentzian"}) {
        const auto p = d / ("sweep-omega_" + std::string(f) + ".csv");
        ASSERT_TRUE(fs::exists(p)) << f;
        EXPECT_TRUE(rows(p).empty());
        EXPECT_EQ(header_line(p).rfind("omega_over_2pi_hz,C_total,eta_sn_up,eta_sn_down", 0), 0u);
    }
    EXPECT_NE(slurp(d / "stdout.txt").find("cusp onset"), std::string::npos);
}

TEST(Cli, SweepPrintsThresholdAndOrdering) {
    const auto d = scratch();
    put(d / "s.json", R"({"spectral": {"M": 41}, "task": {"omega_start_hz": 8e6, "omega_stop_hz": 16e6, "omega_points": 17}})");
    ASSERT_EQ(run("sweep-omega --threshold --config " + (d / "s.json").string() + " --out " + d.string(), d), 0);
    const auto out = slurp(d / "stdout.txt");
    EXPECT_NE(out.find("threshold qgaussian: Omega_th/2pi"), std::string::npos);
    EXPECT_NE(out.find(" ordered"), std::string::npos);
    EXPECT_EQ(out.find("NOT ordered"), std::string::npos);
    EXPECT_EQ(rows(d / "sweep-omega_threshold.csv").size(), 3u);
}

TEST(Cli, NormalizedDrivesAreEchoedInBothConventions) {
    const auto d = scratch();
    put(d / "n.json", R"({"spectral": {"M": 41}, "task": {"eta": [1.0, 3.0], "points": 50}})");
    ASSERT_EQ(run("steady --eta-normalized --config " + (d / "n.json").string() + " --out " + d.string(), d), 0);
    const auto r = rows(d / "steady_roots.csv");
    ASSERT_EQ(r.size(), 4u);  // three roots inside the window, one above
    EXPECT_NEAR(std::stod(r[0][1]), 1.0, 1e-12);
    EXPECT_NEAR(std::stod(r[3][1]), 3.0, 1e-12);
    EXPECT_NEAR(std::stod(r[3][0]) / std::stod(r[0][0]), 3.0, 1e-9);
    EXPECT_NE(slurp(d / "steady_roots.csv").find("\"eta_units\":\"normalized\""), std::string::npos);
}

TEST(Cli, DynamicsBothModelsAndResume) {
    const auto d = scratch();
    put(d / "dyn.json", R"({"spectral": {"M": 21}, "task": {"eta": 2.0, "eta_units": "normalized",
        "t_end_gamma_par": 2, "samples": 40}})");
    const std::string base = "dynamics --config " + (d / "dyn.json").string();
    ASSERT_EQ(run(base + " --out " + d.string() + " --model both --spacing linear --save-state " + (d / "state.json").string(), d), 0)
        << slurp(d / "stderr.txt");
    const auto full = rows(d / "dynamics_full.csv"), slow = rows(d / "dynamics_adiabatic.csv");
    ASSERT_EQ(full.size(), 40u);
    ASSERT_EQ(slow.size(), 40u);
    EXPECT_EQ(full.back()[6], "full");
    EXPECT_EQ(slow.back()[6], "adiabatic");
    EXPECT_NEAR(std::stod(slow.back()[2]) / std::stod(full.back()[2]), 1.0, 0.02);
    // linear spacing: constant steps
    EXPECT_NEAR(std::stod(full[1][0]) - std::stod(full[0][0]), std::stod(full[2][0]) - std::stod(full[1][0]), 1e-12);

    const auto st = spincav::state_from_json(spincav::read_json_file(d / "state.json"));
    EXPECT_NEAR(st.t, std::stod(full.back()[0]), 1e-15);
    ASSERT_EQ(run(base + " --resume " + (d / "state.json").string() + " --out " + (d / "r").string(), d), 0);
    const auto resumed = rows(d / "r" / "dynamics_full.csv");
    ASSERT_FALSE(resumed.empty());
    EXPECT_GT(std::stod(resumed.front()[0]), st.t);
    EXPECT_NEAR(std::stod(resumed.back()[1]), 4.0, 1e-9);
}

TEST(Cli, DecaySinglePointAndOracle) {
    const auto d = scratch();
    put(d / "dec.json", R"({"spectral": {"M": 11}, "task": {"omegas_hz": [12e6], "eta_points": 21}})");
    ASSERT_EQ(run("decay --oracle --config " + (d / "dec.json").string() + " --out " + d.string(), d), 0);
    const auto r = rows(d / "decay_zeta.csv");
    ASSERT_FALSE(r.empty());
    ASSERT_EQ(r[0].size(), 8u);
    ASSERT_EQ(run("decay --eta 1.0 --branch lower --config " + (d / "dec.json").string() + " --out " + d.string(), d), 0);
    const auto one = rows(d / "decay_zeta.csv");
    ASSERT_EQ(one.size(), 1u);
    EXPECT_EQ(one[0][3], "lower");
    EXPECT_NE(slurp(d / "stdout.txt").find("zeta/gamma_par"), std::string::npos);
    // the dense oracle is limited to small ensembles
    EXPECT_EQ(run("decay --oracle --config " + cfg("decay_scan.json") + " --out " + d.string(), d), 2);
}

TEST(Cli, QuenchExitCodes) {
    const auto d = scratch();
    ASSERT_EQ(run("quench --normal-form-selftest --out " + d.string(), d), 0);
    EXPECT_EQ(rows(d / "quench_normal_form.csv").size(), 11u);

    put(d / "short.json", R"({"spectral": {"M": 41}, "task": {"scan_points": 6, "scan_rel_min": 1e-4,
        "t_max_gamma_par": 2, "fit": false}})");
    EXPECT_EQ(run("quench --config " + (d / "short.json").string() + " --out " + d.string(), d), 4);
    EXPECT_EQ(rows(d / "quench_adiabatic_scan.csv").size(), 6u);

    put(d / "wrong.json", R"({"spectral": {"M": 41}, "task": {"source": "upper", "eta_quench": 1.5,
        "eta_units": "normalized"}})");
    EXPECT_EQ(run("quench --config " + (d / "wrong.json").string() + " --out " + d.string(), d), 2);

    put(d / "single.json", R"({"task": {"source": "lower", "eta_quench": 1.02,
        "eta_units": "normalized", "t_max_gamma_par": 200}})");
    ASSERT_EQ(run("quench --config " + (d / "single.json").string() + " --out " + d.string(), d), 0);
    EXPECT_EQ(header_line(d / "quench_adiabatic_portrait.csv"), "a_sq,da_sq_dt,in_window");
    EXPECT_GT(rows(d / "quench_adiabatic_trajectory.csv").size(), 100u);
}

TEST(Cli, QuenchScanWritesFit) {
    const auto d = scratch();
    put(d / "scan.json", R"({"spectral": {"M": 41}, "task": {"scan_points": 10, "scan_rel_min": 1e-5,
        "scan_rel_max": 1e-2, "t_max_gamma_par": 3000}})");
    ASSERT_EQ(run("quench --config " + (d / "scan.json").string() + " --out " + d.string(), d), 0)
        << slurp(d / "stderr.txt");
    const auto fit = slurp(d / "quench_adiabatic_fit.txt");
    const auto at = fit.find("\nalpha = ");
    ASSERT_NE(at, std::string::npos) << fit;
    const double alpha = std::stod(fit.substr(at + 9));
    EXPECT_GT(alpha, 0.4);
    EXPECT_LT(alpha, 0.6);
    EXPECT_NE(fit.find("n_points = 10"), std::string::npos);
}
