#include <gtest/gtest.h>

#include <rupture/field_io.hpp>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("rupture_lab_cli_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = "cd '" + workdir().string() + "' && " + env + " '" RUPTURE_LAB_BIN "' " + args +
                          " > last.out 2> last.err";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& name) {
  std::ifstream f(workdir() / name, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

void write(const std::string& name, const std::string& text) { std::ofstream(workdir() / name) << text; }

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    ASSERT_EQ(run("make-exact --n 2 --p 3 --kind radial --shape 512 --out u.rfld"), 0) << slurp("last.err");
    ASSERT_EQ(run("make-exact --kind ode --eps 0.2 --shape 17 --extent 1 --out ode.rfld"), 0) << slurp("last.err");
  }
};

}  // namespace

TEST_F(Cli, MakeExactWritesTwoDimensionalHeader) {
  const auto bytes = slurp("u.rfld");
  ASSERT_GE(bytes.size(), rupture::rfld_header_bytes(2));
  EXPECT_EQ(bytes.substr(0, 4), "RFLD");
  const auto u = rupture::load_field(workdir() / "u.rfld");
  EXPECT_EQ(u.grid().dim(), 2);
  EXPECT_EQ(u.grid().shape(0), 512u);
  EXPECT_EQ(run("make-exact --n 3 --kind cylinder --shape 9 --out c.rfld"), 0);
  EXPECT_EQ(rupture::load_field(workdir() / "c.rfld").grid().dim(), 3);
}

TEST_F(Cli, DensityProfileCsvAndSummary) {
  ASSERT_EQ(run("density --field u.rfld --p 3 --point 0,0 --radii 0.05:0.3:16 --out prof.csv"), 0) << slurp("last.err");
  const auto csv = slurp("prof.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "r,D,D_f,F,H,I_f,theta,theta_f,W_f");
  EXPECT_EQ(count_lines(csv), 17u);
  const auto j = nlohmann::json::parse(slurp("prof.json"));
  EXPECT_EQ(j["schema"], "rupture-lab/1");
  EXPECT_EQ(j["rows"], 16);
  EXPECT_LT(j["monotone_defect"].get<double>(), 1e-3);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("make-exact --kind bogus --out x.rfld"), 2);
  EXPECT_EQ(run("density --field missing.rfld --out a.csv"), 2);
  EXPECT_EQ(run("no-such-command"), 2);
  EXPECT_EQ(run("density --field u.rfld --radii 0.3:0.1:4 --out a.csv"), 2);
  write("unknown.json", R"({"p": 3, "bogus": 1})");
  EXPECT_EQ(run("density --field u.rfld --config unknown.json --out a.csv"), 2);
  EXPECT_EQ(run("density --field u.rfld --out no/such/dir/a.csv"), 2);
  // a solve that cannot meet its tolerance is a numeric failure
  EXPECT_EQ(run("solve --init ode.rfld --out s.rfld --max-steps 1"), 3);
  EXPECT_EQ(run("solve --init ode.rfld --out s.rfld --tol-residual 1e-4"), 0) << slurp("last.err");
}

TEST_F(Cli, ConfigFileSuppliesOptions) {
  write("density.json", R"({"p": 3, "point": "0,0", "radii": "0.05:0.2:5"})");
  ASSERT_EQ(run("density --field u.rfld --config density.json --out cfg.csv"), 0) << slurp("last.err");
  EXPECT_EQ(count_lines(slurp("cfg.csv")), 6u);
  write("solve.json", R"({"delta_schedule": [0.1, 0.01], "tol_residual": 1e-4, "boundary": "dirichlet"})");
  EXPECT_EQ(run("solve --init ode.rfld --config solve.json --out s2.rfld"), 0) << slurp("last.err");
}

TEST_F(Cli, SameSeedGivesIdenticalReportsAndEnvOverridesSeed) {
  const std::string args = " --field u.rfld --k 0 --epsilon 0.1 --rmin 0.0625 --rmax 0.25 --samples 5";
  ASSERT_EQ(run("stratify" + args + " --seed 4 --out a/r.json", "mkdir -p a b &&"), 0) << slurp("last.err");
  ASSERT_EQ(run("stratify" + args + " --seed 4 --out b/r.json"), 0);
  EXPECT_EQ(slurp("a/r.flagged.csv"), slurp("b/r.flagged.csv"));
  auto a = nlohmann::json::parse(slurp("a/r.json")), b = nlohmann::json::parse(slurp("b/r.json"));
  a.erase("flagged_csv");
  b.erase("flagged_csv");
  EXPECT_EQ(a.dump(), b.dump());
  EXPECT_EQ(a["seed"], 4);
  ASSERT_EQ(run("stratify" + args + " --seed 4 --out c.json", "RUPTURE_LAB_SEED=9"), 0);
  EXPECT_EQ(nlohmann::json::parse(slurp("c.json"))["seed"], 9);
}

TEST_F(Cli, PointCloudCommands) {
  write("tri.csv", "x,y,w\n0,0,1\n1,0,1\n0,1,1\n");
  ASSERT_EQ(run("displacement --points tri.csv --point 0,0 --radii 2:2:1 --k 1 --out d.json"), 0) << slurp("last.err");
  const auto d = slurp("d.csv");
  const auto row = d.substr(d.find('\n') + 1);
  EXPECT_NEAR(std::stod(row.substr(row.find(',') + 1)), 1.0 / 24.0, 1e-12);
  ASSERT_EQ(run("cover --points tri.csv --radius 0.4 --out cv.json"), 0);
  const auto cv = nlohmann::json::parse(slurp("cv.json"));
  EXPECT_EQ(cv["count"], 3);
  EXPECT_TRUE(cv["disjoint"].get<bool>());
  // no atoms in any ball: zero-length arrays, still valid JSON
  ASSERT_EQ(run("displacement --points tri.csv --point 5,5 --radii 0.1:0.2:2 --out empty.json"), 0);
  const auto e = nlohmann::json::parse(slurp("empty.json"));
  for (const auto& s : e["spectra"]) EXPECT_TRUE(s["eigenvalues"].is_array() && s["eigenvalues"].empty());
}

TEST_F(Cli, MinkowskiOfSublevelSet) {
  ASSERT_EQ(run("minkowski --field u.rfld --epsilon 0.5 --p 3 --radii 0.05:0.4:6 --radius 1 --out m.json"), 0)
      << slurp("last.err");
  EXPECT_NEAR(nlohmann::json::parse(slurp("m.json"))["slope"].get<double>(), 2.0, 0.2);
  EXPECT_EQ(run("minkowski --field u.rfld --out m.json"), 2);
}
