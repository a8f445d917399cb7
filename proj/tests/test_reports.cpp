#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "geolab/reports.hpp"
#include "support.hpp"

using namespace geolab;
namespace fs = std::filesystem;

namespace {

std::string message_of(const std::string& text) {
    try {
        parse_config(text, "cfg.json");
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(Config, ParseErrorsCarryPosition) {
    const std::string msg = message_of("{\n  \"k\": 16,\n  \"m_max\": ,\n}");
    EXPECT_NE(msg.find("cfg.json"), std::string::npos);
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(message_of("{\"k\": \"many\"}").find("'k'"), std::string::npos);
    EXPECT_NE(message_of("{\"k\": 2}").find("at least 3"), std::string::npos);
    EXPECT_NE(message_of("{\"tolerances\": {\"tau_typo\": 1}}").find("tau_typo"), std::string::npos);
    EXPECT_NE(message_of("[1, 2]").find("object"), std::string::npos);
}

TEST(Config, FieldsAndOverrides) {
    ExperimentConfig c = parse_config(R"({"manifold": {"type": "sphere"}, "k": 24, "seed": 9,
        "tolerances": {"tau_grad": 1e-7}, "circle": {"base": [1.5707963267948966, 0], "coord": 1}})");
    EXPECT_EQ(c.k, 24);
    EXPECT_EQ(c.seed, 9u);
    EXPECT_DOUBLE_EQ(c.tolerances.at("tau_grad"), 1e-7);
    ASSERT_TRUE(c.circle);
    EXPECT_EQ(c.circle->coord, 1);
    apply_tolerance_override(c, "tau_grad=2e-6");
    EXPECT_DOUBLE_EQ(c.tolerances.at("tau_grad"), 2e-6);
    EXPECT_THROW(apply_tolerance_override(c, "tau_grad"), ConfigError);
    EXPECT_THROW(apply_tolerance_override(c, "tau_grad=abc"), ConfigError);
    EXPECT_THROW(apply_tolerance_override(c, "nonsense=1"), ConfigError);
    EXPECT_THROW(apply_tolerance_override(c, "armijo=-1"), ConfigError);
    EXPECT_EQ(make_manifold(c)->name().find("sphere") != std::string::npos, true);
    c.manifold = {{"type", "klein_bottle"}};
    EXPECT_THROW(make_manifold(c), ConfigError);
}

TEST(Config, ShippedConfigsLoad) {
    for (const char* name : {"sphere", "flat_torus", "hyperboloid", "flat_plane", "model"}) {
        const fs::path p = fs::path(GEOLAB_SOURCE_DIR) / "configs" / (std::string(name) + ".json");
        const ExperimentConfig c = load_config(p.string());
        EXPECT_NO_THROW(make_manifold(c)) << name;
    }
    EXPECT_THROW(load_config("/nonexistent/geolab.json"), ConfigError);
}

TEST(Output, HeaderAndBody) {
    ExperimentConfig c;
    c.seed = 3;
    const std::string text = csv_header(c, "find") + "a,b\n1,2\n";
    EXPECT_EQ(text.rfind("# geolab find seed=3", 0), 0u);
    EXPECT_NE(text.find("# timestamp="), std::string::npos);
    EXPECT_EQ(csv_body(text), "a,b\n1,2\n");
    const fs::path dir = fs::temp_directory_path() / "geolab_reports_test";
    write_atomic(dir / "x.csv", text);
    EXPECT_EQ(slurp(dir / "x.csv"), text);
    EXPECT_FALSE(fs::exists(dir / "x.csv.tmp"));
    fs::remove_all(dir);
}

TEST(Output, SearchRerunIsIdentical) {
    auto h = SurfaceOfRevolution::hyperboloid();
    ExperimentConfig c;
    c.manifold = {{"type", "hyperboloid"}};
    c.k = 16;
    c.seeds = 4;
    c.seed = 5;
    c.radial_max = 1.5;
    const ManifoldPtr m = make_manifold(c);
    const std::string a = circles_csv(find_circles(*m, search_seeds(*m, c), search_options(c)).circles);
    const std::string b = circles_csv(find_circles(*m, search_seeds(*m, c), search_options(c)).circles);
    EXPECT_EQ(a, b);
}

#ifdef GEOLAB_CLI
class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir = fs::temp_directory_path() / ("geolab_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir);
    }
    void TearDown() override { fs::remove_all(dir); }
    int run(const std::string& args) {
        const std::string cmd = std::string(GEOLAB_CLI) + " " + args + " --out " + dir.string() + " > /dev/null 2>&1";
        const int rc = std::system(cmd.c_str());
        return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    }
    std::string config(const char* name) { return (fs::path(GEOLAB_SOURCE_DIR) / "configs" / name).string(); }
    fs::path dir;
};

TEST_F(Cli, WindowsRow) {
    ASSERT_EQ(run("windows --m 5 --ell 1 --eps 0.1"), 0);
    const std::string body = csv_body(slurp(dir / "windows.csv"));
    EXPECT_NE(body.find("\n5,5,5.05,"), std::string::npos) << body;
}

TEST_F(Cli, SphereIndexTable) {
    ASSERT_EQ(run("index --config " + config("sphere.json")), 0);
    const std::string first = csv_body(slurp(dir / "bott.csv"));
    std::istringstream in(first);
    std::string line;
    std::getline(in, line);
    int rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        const int m = std::stoi(line.substr(0, line.find(',')));
        const int ind = std::stoi(line.substr(line.find(',') + 1));
        EXPECT_EQ(m, rows);
        EXPECT_EQ(ind, 2 * m - 1) << line;
    }
    EXPECT_EQ(rows, 6);
    ASSERT_EQ(run("index --config " + config("sphere.json")), 0);
    EXPECT_EQ(csv_body(slurp(dir / "bott.csv")), first);
}

TEST_F(Cli, ExitCodes) {
    EXPECT_EQ(run("verify --config " + config("flat_torus.json")), 0);
    EXPECT_EQ(run("find --config " + config("sphere.json") + " --tolerance bogus=1"), 2);
    EXPECT_EQ(run("find --config /nonexistent.json"), 2);
}
#endif
