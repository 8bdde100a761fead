#include <ekmeta/config.hpp>

#include <gtest/gtest.h>
#include <json.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace ekm;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string output;
};

Run run(const std::string& args) {
    std::string cmd = std::string(EKMETA_CLI_PATH) + " " + args + " 2>&1";
    Run r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) r.output.append(buf, n);
    int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string cfg(const std::string& rel) { return std::string(EKMETA_SOURCE_DIR) + "/" + rel; }

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("ekmeta_cli_" + std::to_string(getpid())) / name;
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

std::vector<std::string> lines(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

}  // namespace

// ---------------------------------------------------------------- config parsing

TEST(Config, ParsesAllSections) {
    auto c = parse_config(R"(
# comment
[potential]
name = dw
source = (x1^2 - 1)^2 + x2^2   # trailing
dim = 2
[domain]
lo = -2
hi = 2, 1.5
[sweep]
eps = 0.3, 0.1
grid = 256
oracle = false
[output]
dir = results
seed = 7
)",
                          "t.cfg");
    EXPECT_EQ(c.name, "dw");
    EXPECT_EQ(c.dim, 2);
    EXPECT_EQ(c.source_line, 5);
    EXPECT_DOUBLE_EQ(c.box.lo[1], -2.0);
    EXPECT_DOUBLE_EQ(c.box.hi[1], 1.5);
    EXPECT_EQ(c.eps, (std::vector<double>{0.3, 0.1}));
    EXPECT_EQ(c.grid_for_dim(), 256);
    EXPECT_FALSE(c.oracle);
    EXPECT_EQ(c.out_dir, "results");
    EXPECT_EQ(c.seed, 7u);
}

TEST(Config, Defaults) {
    auto c = parse_config("[potential]\nsource = x1^2\ndim = 1\n[domain]\nlo = -1\nhi = 1\n");
    EXPECT_EQ(c.eps, (std::vector<double>{0.2, 0.1, 0.07, 0.05}));
    EXPECT_EQ(c.grid_for_dim(), 4096);
    EXPECT_TRUE(c.oracle);
    EXPECT_EQ(c.name, "x1^2");
}

TEST(Config, ErrorsCarryFileAndLine) {
    const std::string head = "[potential]\nsource = x1^2\ndim = 1\n[domain]\nlo = -1\nhi = 1\n";
    auto message = [&](const std::string& text) {
        try {
            parse_config(text, "f.cfg");
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), "ConfigError");
            return std::string(e.what());
        }
        return std::string("no error");
    };
    EXPECT_NE(message(head + "[sweep]\ngrid = 100\n").find("f.cfg:8:"), std::string::npos);
    EXPECT_NE(message(head + "[sweep]\neps = 0.1, -0.2\n").find("f.cfg:8:"), std::string::npos);
    EXPECT_NE(message(head + "[sweep]\neps = 0.1, x\n").find("not a number"), std::string::npos);
    EXPECT_NE(message(head + "[bogus]\n").find("f.cfg:7:"), std::string::npos);
    EXPECT_NE(message(head + "[sweep]\ncolour = red\n").find("unknown key"), std::string::npos);
    EXPECT_NE(message(head + "[domain]\nlo = 0\n").find("duplicate"), std::string::npos);
    EXPECT_NE(message("[potential]\nsource = x1\ndim = 1\n[domain]\nlo = 1\nhi = 1\n").find("exceed"), std::string::npos);
    EXPECT_NE(message("[potential]\nsource = x1\ndim = 2\n[domain]\nlo = 0, 0, 0\nhi = 1\n").find("wrong length"),
              std::string::npos);
    EXPECT_NE(message("[potential]\ndim = 1\n").find("missing potential.source"), std::string::npos);
}

TEST(Config, GridMustBePowerOfTwoInRange) {
    for (long g : {64L, 128L, 4096L, 16384L}) EXPECT_NO_THROW(validate_grid(g, "x"));
    for (long g : {0L, 32L, 100L, 32768L, -64L}) EXPECT_THROW(validate_grid(g, "x"), Error);
}

// ---------------------------------------------------------------- analyze

TEST(Cli, AnalyzeDoubleWell) {
    auto out = scratch("analyze_dw");
    auto r = run("analyze --config " + cfg("configs/double_well.cfg") + " --out " + out.string());
    ASSERT_EQ(r.code, 0) << r.output;
    auto j = nlohmann::json::parse(slurp(out / "landscape.json"));
    EXPECT_EQ(j["critical_points"].size(), 3u);
    EXPECT_EQ(j["minima_ordered"].size(), 2u);
    ASSERT_EQ(j["edges"].size(), 1u);
    EXPECT_NEAR(j["edges"][0]["height"].get<double>(), 1.0, 1e-9);
    EXPECT_NEAR(j["edges"][0]["saddle"][0].get<double>(), 0.0, 1e-9);
    EXPECT_TRUE(j["delta_gap"].is_null());
    EXPECT_TRUE(j["assumptions"]["A1_PI"].get<bool>());
}

TEST(Cli, AnalyzeTripleWellOrdering) {
    auto out = scratch("analyze_tw");
    auto r = run("analyze --config " + cfg("configs/triple_well.cfg") + " --out " + out.string());
    ASSERT_EQ(r.code, 0) << r.output;
    auto j = nlohmann::json::parse(slurp(out / "landscape.json"));
    auto& m = j["minima_ordered"];
    ASSERT_EQ(m.size(), 3u);
    // global minimum first, then by decreasing depth below the communication height
    EXPECT_LT(m[0]["location"][0].get<double>(), -1.0);
    EXPECT_GT(m[1]["location"][0].get<double>(), 1.0);
    EXPECT_NEAR(m[2]["location"][0].get<double>(), 0.0, 0.1);
    EXPECT_GT(j["delta_gap"].get<double>(), 0.0);
    EXPECT_EQ(j["edges"].size(), 3u);
}

TEST(Cli, MalformedConfigExitsTwo) {
    auto r = run("analyze --config " + cfg("tests/fixtures/malformed.cfg") + " --out " + scratch("bad").string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.output.find("malformed.cfg:10:"), std::string::npos) << r.output;
}

TEST(Cli, MissingConfigAndUnknownOption) {
    EXPECT_EQ(run("analyze --config /nonexistent/x.cfg").code, 2);
    EXPECT_EQ(run("analyze").code, 2);
    EXPECT_EQ(run("frobnicate").code, 2);
    EXPECT_EQ(run("constants --config " + cfg("configs/double_well.cfg") + " --grid 100").code, 2);
}

TEST(Cli, BadPotentialReportsConfigLine) {
    auto dir = scratch("badpot");
    fs::create_directories(dir);
    std::ofstream(dir / "p.cfg") << "[potential]\ndim = 1\nsource = x1^^2\n[domain]\nlo = -1\nhi = 1\n";
    auto r = run("analyze --config " + (dir / "p.cfg").string() + " --out " + dir.string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.output.find("p.cfg:3:"), std::string::npos) << r.output;
}

// ---------------------------------------------------------------- constants

TEST(Cli, ConstantsRowsAndOracleColumns) {
    auto out = scratch("const");
    auto r = run("constants --config " + cfg("configs/double_well.cfg") + " --out " + out.string());
    ASSERT_EQ(r.code, 0) << r.output;
    auto rows = lines(slurp(out / "constants.csv"));
    ASSERT_EQ(rows.size(), 5u);
    EXPECT_EQ(rows[0], "epsilon,Z1,Z2,inv_rho_ek,inv_alpha2_ek,ek_gap,fd_gap,gap_ratio");
    for (std::size_t k = 1; k < rows.size(); ++k) {
        double ratio = std::stod(rows[k].substr(rows[k].rfind(',') + 1));
        EXPECT_GT(ratio, 0.9);
        EXPECT_LT(ratio, 1.1);
    }
    auto r2 = run("constants --config " + cfg("configs/double_well.cfg") + " --no-oracle --eps 0.1 --out " + out.string());
    ASSERT_EQ(r2.code, 0) << r2.output;
    rows = lines(slurp(out / "constants.csv"));
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0], "epsilon,Z1,Z2,inv_rho_ek,inv_alpha2_ek,ek_gap");
    EXPECT_EQ(rows[1].rfind("0.1", 0), 0u);
}

TEST(Cli, ConstantsHighDimensionWarnsAndSkipsOracle) {
    auto out = scratch("dim3");
    auto r = run("constants --config " + cfg("tests/fixtures/dim3.cfg") + " --out " + out.string());
    ASSERT_EQ(r.code, 0) << r.output;
    EXPECT_NE(r.output.find("warning:"), std::string::npos);
    EXPECT_EQ(lines(slurp(out / "constants.csv"))[0], "epsilon,Z1,Z2,inv_rho_ek,inv_alpha2_ek,ek_gap");
}

TEST(Cli, ConstantsByteIdenticalAcrossRuns) {
    auto a = scratch("det_a"), b = scratch("det_b");
    const std::string base = "constants --config " + cfg("configs/triple_well.cfg") + " --out ";
    ASSERT_EQ(run(base + a.string()).code, 0);
    ASSERT_EQ(run(base + b.string()).code, 0);
    EXPECT_EQ(slurp(a / "constants.csv"), slurp(b / "constants.csv"));
}

// ---------------------------------------------------------------- validate

TEST(Cli, ValidatePassesOnReferenceConfigs) {
    for (const char* c : {"configs/double_well.cfg", "configs/triple_well.cfg", "configs/asymmetric.cfg"}) {
        auto out = scratch("val");
        auto r = run(std::string("validate --config ") + cfg(c) + " --out " + out.string());
        EXPECT_EQ(r.code, 0) << c << "\n" << r.output;
        EXPECT_NE(r.output.find("all checks passed"), std::string::npos) << c;
        EXPECT_TRUE(fs::exists(out / "validate.csv"));
    }
}

TEST(Cli, ValidateFlagsInjectedFault) {
    auto r = run("validate --config " + cfg("tests/fixtures/fault_lambda.cfg") + " --filter ek --out " +
                 scratch("fault").string());
    EXPECT_EQ(r.code, 1) << r.output;
    EXPECT_NE(r.output.find("FAIL"), std::string::npos);
}

TEST(Cli, ValidateFilterAndDeterminism) {
    auto a = scratch("flt_a"), b = scratch("flt_b");
    const std::string base = "validate --config " + cfg("configs/double_well.cfg") + " --filter transport --seed 11 --out ";
    auto r = run(base + a.string());
    ASSERT_EQ(r.code, 0) << r.output;
    ASSERT_EQ(run(base + b.string()).code, 0);
    auto rows = lines(slurp(a / "validate.csv"));
    ASSERT_GE(rows.size(), 2u);
    for (std::size_t k = 1; k < rows.size(); ++k) EXPECT_EQ(rows[k].rfind("transport,", 0), 0u) << rows[k];
    EXPECT_EQ(slurp(a / "validate.csv"), slurp(b / "validate.csv"));
    EXPECT_EQ(run("validate --config " + cfg("configs/double_well.cfg") + " --filter nosuch").code, 2);
}
