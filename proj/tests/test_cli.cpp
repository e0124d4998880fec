#include <gtest/gtest.h>
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "lowrank_sdp/lowrank_sdp.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace lowrank_sdp;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
};

CliRun run(const std::string& args) {
  const std::string cmd = std::string(LOWRANK_SDP_CLI) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  CliRun r;
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t got = 0;
  while ((got = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), got);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

std::string sample(const char* name) { return std::string(LOWRANK_SDP_SAMPLES) + "/" + name; }

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("lowrank_sdp_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& leaf) const { return (dir_ / leaf).string(); }
  fs::path dir_;
};

}  // namespace

TEST_F(Cli, BadSdpFromUbarIsStationaryButUncertified) {
  const CliRun r = run("solve --gen bad-sdp --n 5 --k 4 --init ubar --eps 1e-8 --out " + path("o"));
  ASSERT_EQ(r.code, 0) << r.out;
  const json j = json::parse(r.out);
  EXPECT_EQ(j["iterations"].get<long>(), 0);
  EXPECT_LE(j["certificate"]["grad_norm"].get<double>(), 1e-10);
  EXPECT_FALSE(j["certificate"]["certificate_holds"].get<bool>());
  EXPECT_NEAR(j["certificate"]["dual_min_eig"].get<double>(), -2.0, 1e-9);
  for (const char* f : {"solution.txt", "certificate.json", "trace.csv", "config.json"}) {
    EXPECT_TRUE(fs::exists(dir_ / "o" / f)) << f;
  }
}

TEST_F(Cli, BadSdpFullRankReachesZero) {
  const CliRun r = run("solve --gen bad-sdp --n 5 --k 6 --eps 1e-5 --seed 3 --out " + path("o"));
  ASSERT_NE(r.code, 3) << r.out;
  const json j = json::parse(r.out);
  EXPECT_LE(j["objective"].get<double>(), 1e-6);
}

TEST_F(Cli, EmptyConstraintsWithPsdCostGoesToZero) {
  {
    std::ofstream f(path("p.txt"));
    f << "3 0 1 0 0 0\nMAT cost\n0 0 2\n1 1 1\n2 2 3\n0 1 0.5\nEND\nRHS\n";
  }
  const CliRun r = run("solve --problem " + path("p.txt") + " --k 2 --eps 1e-8 --out " + path("o"));
  ASSERT_EQ(r.code, 0) << r.out;
  std::ifstream sol(dir_ / "o" / "solution.txt");
  const Matrix u = read_matrix(sol);
  EXPECT_LE(u.norm(), 1e-6);
  EXPECT_TRUE(json::parse(r.out)["certificate"]["certificate_holds"].get<bool>());
}

TEST_F(Cli, SolveThenCertifyRoundTrip) {
  const std::string common = " --gen maxcut --graph " + sample("c4.txt") + " --mu 10 --sigma-g 1e-3 --seed 2";
  const CliRun s = run("solve" + common + " --k 3 --eps 1e-6 --out " + path("o"));
  ASSERT_EQ(s.code, 0) << s.out;
  const CliRun c = run("certify" + common + " --eps 1e-6 --point " + path("o/solution.txt"));
  const json cert = json::parse(c.out);
  const json stored = json::parse(slurp(dir_ / "o" / "certificate.json"));
  EXPECT_EQ(cert["grad_norm"], stored["grad_norm"]);
  EXPECT_EQ(cert["is_eps_gamma_sosp"], stored["is_eps_gamma_sosp"]);
  EXPECT_EQ(c.code, cert["certificate_holds"].get<bool>() ? 0 : 1);
}

TEST_F(Cli, CertifyShapeMismatchIsInputError) {
  {
    std::ofstream f(path("u.txt"));
    write_matrix(f, Matrix::Ones(3, 2));
  }
  EXPECT_EQ(run("certify --gen bad-sdp --n 5 --point " + path("u.txt")).code, 2);
}

TEST_F(Cli, PlanMaxCutAndPdCostRejection) {
  const CliRun r = run("plan --gen maxcut --graph " + sample("k33.txt") + " --mu 10 --sigma-g 1e-3");
  ASSERT_EQ(r.code, 0) << r.out;
  const json j = json::parse(r.out);
  EXPECT_GT(j["B"].get<double>(), 0.0);
  EXPECT_GE(j["k_min"].get<long>(), 1);
  EXPECT_GT(j["eps_max"].get<double>(), 0.0);
  EXPECT_EQ(j["mode"].get<std::string>(), "compact");

  // The Max-Cut cost -L/4 is not positive definite.
  EXPECT_EQ(run("plan --gen maxcut --graph " + sample("k33.txt") + " --sigma-g 1e-3 --mode pd-cost").code, 2);
}

TEST_F(Cli, PlanPdCostOnPositiveCost) {
  {
    std::ofstream f(path("p.txt"));
    f << "2 1 1 0 0 0\nMAT cost\n0 0 2\n1 1 2\nEND\nMAT 1\n0 0 1\nEND\nRHS 1\n";
  }
  const CliRun r = run("plan --problem " + path("p.txt") + " --sigma-g 1e-3 --mode pd-cost");
  ASSERT_EQ(r.code, 0) << r.out;
  const json j = json::parse(r.out);
  EXPECT_EQ(j["mode"].get<std::string>(), "pd_cost");
  EXPECT_TRUE(j["sigma_G_max"].is_number());
}

TEST_F(Cli, GenerateSingleEdgeMaxCut) {
  const CliRun r = run("generate --gen maxcut --graph " + sample("k2.txt") + " --out " + path("g"));
  ASSERT_EQ(r.code, 0) << r.out;
  std::ifstream f(dir_ / "g" / "problem.txt");
  const PenaltyProblem pp = read_problem(f);
  EXPECT_EQ(pp.dim(), 2);
  EXPECT_EQ(pp.op().size(), 2);
  ASSERT_TRUE(pp.op().compactifier().has_value());
  EXPECT_TRUE(pp == build_maxcut(Graph(2, {{0, 1, 1.0}}), 10.0, 0.0, 0));
}

TEST_F(Cli, GenerateBadSdpWitnesses) {
  const CliRun r = run("generate --gen bad-sdp --n 6 --out " + path("g"));
  ASSERT_EQ(r.code, 0) << r.out;
  std::ifstream f(dir_ / "g" / "problem.txt");
  EXPECT_TRUE(read_problem(f) == build_bad_sdp(6).problem);
  std::ifstream ub(dir_ / "g" / "ubar.txt");
  const Matrix u = read_matrix(ub);
  EXPECT_EQ(u.rows(), 6);
  EXPECT_EQ(u.cols(), 5);
  EXPECT_TRUE(fs::exists(dir_ / "g" / "uopt.txt"));
}

TEST_F(Cli, GenerateConstrainedCeVerifies) {
  const CliRun r = run("generate --gen constrained-ce --n 5 --out " + path("g"));
  ASSERT_EQ(r.code, 0) << r.out;
  const json j = json::parse(r.out);
  EXPECT_TRUE(j["verification"]["passed"].get<bool>());
  EXPECT_NEAR(j["verification"]["objective_x0"].get<double>(), -9.0 / 5.0, 1e-12);
  for (const char* f : {"problem.txt", "u.txt", "w.txt", "x0.txt", "d.txt"}) EXPECT_TRUE(fs::exists(dir_ / "g" / f)) << f;
}

TEST_F(Cli, CalibrateReportsAndLimitsSize) {
  const CliRun r = run("calibrate --n 30 --k 5 --sigma-g 0.5 --trials 40 --seed 7");
  ASSERT_EQ(r.code, 0) << r.out;
  const json j = json::parse(r.out);
  EXPECT_EQ(j["trials"].get<long>(), 40);
  EXPECT_GT(j["c0_hat"].get<double>(), 0.0);
  EXPECT_EQ(r.out, run("calibrate --n 30 --k 5 --sigma-g 0.5 --trials 40 --seed 7").out);
  EXPECT_EQ(run("calibrate --n 401 --k 5 --trials 1").code, 2);
}

TEST_F(Cli, RepeatRunsAreByteIdentical) {
  const std::string args = " --gen maxcut --graph " + sample("k33.txt") + " --mu 5 --sigma-g 1e-3 --k 3 --seed 11 --out ";
  const CliRun a = run("solve" + args + path("a"));
  const CliRun b = run("solve" + args + path("b"));
  EXPECT_EQ(a.code, b.code);
  EXPECT_EQ(a.out, b.out);
  for (const char* f : {"solution.txt", "certificate.json", "trace.csv"}) {
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
}

TEST_F(Cli, ConfigFileAndFlagOverride) {
  const CliRun r = run("solve --config " + sample("maxcut_c4.json") + " --k 3 --out " + path("o"));
  ASSERT_EQ(r.code, 0) << r.out;
  const json cfg = json::parse(slurp(dir_ / "o" / "config.json"));
  EXPECT_EQ(cfg["k"].get<long>(), 3);
  EXPECT_EQ(cfg["mu"].get<double>(), 10.0);
  EXPECT_EQ(cfg["seed"].get<long>(), 1);
  run("solve --config " + sample("maxcut_c4.json") + " --k 3 --mu 4 --out " + path("p"));
  EXPECT_EQ(json::parse(slurp(dir_ / "p" / "config.json"))["mu"].get<double>(), 4.0);
}

TEST_F(Cli, InputErrors) {
  {
    std::ofstream f(path("c.json"));
    f << "{\"gen\": \"bad-sdp\", \"colour\": 1}";
  }
  EXPECT_EQ(run("solve --config " + path("c.json")).code, 2);
  {
    std::ofstream f(path("p.txt"));
    f << "2 1 1 0 0 0\nMAT cost\n0 0 x\nEND\n";
  }
  EXPECT_EQ(run("solve --problem " + path("p.txt")).code, 2);
  EXPECT_EQ(run("solve --problem " + path("missing.txt")).code, 2);
  EXPECT_EQ(run("solve --gen nonsense").code, 2);
  EXPECT_EQ(run("solve").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
}

TEST_F(Cli, DivergenceExitCode) {
  {
    std::ofstream f(path("p.txt"));
    f << "2 0 1 0 0 0\nMAT cost\n0 0 1\nEND\nRHS\n";
  }
  {
    std::ofstream f(path("u.txt"));
    f << "2 1\n1e200\n1e200\n";
  }
  EXPECT_EQ(run("solve --problem " + path("p.txt") + " --k 1 --step fixed --solver gd --init file:" + path("u.txt") +
                " --out " + path("o"))
                .code,
            3);
}
