#include <gtest/gtest.h>
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "branchimm/report.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int status = -1;
  std::string out;
};

Run run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " \"" + BRANCHIMM_CLI_PATH + "\" " + args + " 2>/dev/null";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  const int st = pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string data(const std::string& name) { return std::string(BRANCHIMM_TEST_DATA) + "/" + name; }
std::string config(const std::string& name) { return std::string(BRANCHIMM_CONFIG_DIR) + "/" + name; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto d = fs::temp_directory_path() / ("branchimm_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST(Cli, ClassifyPrintsErgodic) {
  const auto r = run("classify " + data("classify_ergodic.json"));
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(r.out, "Ergodic\n");
}

TEST(Cli, MalformedKernelExitsWithConfigError) {
  EXPECT_EQ(run("fourier-cov " + data("bad_kernel.json")).status, 2);
  EXPECT_EQ(run("moments /nonexistent.json").status, 2);
  EXPECT_EQ(run("no-such-command").status, 2);
}

TEST(Cli, MomentsCheckGate) {
  EXPECT_EQ(run("moments --check " + data("small_moments.json")).status, 0);
  EXPECT_EQ(run("moments --check --oracle-scale 1.1 " + data("small_moments.json")).status, 1);
}

TEST(Cli, OverflowExitCode) { EXPECT_EQ(run("simulate " + data("overflow.json")).status, 3); }

TEST(Cli, OutputHeaderAndDeterministicBody) {
  const auto a = run("simulate --replicas 300 " + data("small_moments.json"));
  const auto b = run("simulate --replicas 300 --jobs 3 " + data("small_moments.json"));
  ASSERT_EQ(a.status, 0);
  EXPECT_EQ(a.out.rfind("# branchimm ", 0), 0u);
  EXPECT_NE(a.out.find(" seed=4242 "), std::string::npos);
  EXPECT_EQ(branchimm::csv_body(a.out), branchimm::csv_body(b.out));
  const auto c = run("simulate --replicas 300 --seed 1 " + data("small_moments.json"));
  EXPECT_NE(branchimm::csv_body(a.out), branchimm::csv_body(c.out));
}

TEST(Cli, EnvironmentVariableOverrides) {
  const auto a = run("simulate --replicas 200 --seed 77 " + data("small_moments.json"));
  const auto b = run("simulate " + data("small_moments.json"), "BRANCHIMM_SEED=77 BRANCHIMM_REPLICAS=200");
  ASSERT_EQ(b.status, 0);
  EXPECT_EQ(branchimm::csv_body(a.out), branchimm::csv_body(b.out));
}

TEST(Cli, EventLog) {
  const auto dir = scratch("events");
  fs::create_directories(dir);
  const auto log = dir / "events.tsv";
  ASSERT_EQ(run("simulate --replicas 3 --event-log " + log.string() + " " + data("small_moments.json")).status, 0);
  std::istringstream in(slurp(log));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (line[0] == '#') continue;
    ++n;
    EXPECT_TRUE(line.find("\tB\t-") != std::string::npos || line.find("\tD\t-") != std::string::npos) << line;
  }
  EXPECT_GT(n, 10u);
  fs::remove_all(dir);
}

TEST(Cli, FourierCovWritesTwoTables) {
  const auto dir = scratch("fourier");
  ASSERT_EQ(run("fourier-cov --check --out " + dir.string() + " " + config("torus_covariance.json")).status, 0);
  const auto lag = branchimm::csv_body(slurp(dir / "fourier_cov_lag.csv"));
  const auto spec = branchimm::csv_body(slurp(dir / "fourier_cov_spectrum.csv"));
  EXPECT_EQ(lag.rfind("u_0,m2_tilde\n0,1.577", 0), 0u) << lag.substr(0, 40);
  EXPECT_EQ(spec.rfind("theta_0,symbol,m2_hat\n0,1,2\n", 0), 0u) << spec.substr(0, 40);
  fs::remove_all(dir);
}

TEST(Cli, ExampleConfigsRun) {
  EXPECT_EQ(run("invariant --check " + config("invariant.json")).status, 0);
  EXPECT_EQ(run("clt-check --check " + config("local_clt.json")).status, 0);
  EXPECT_EQ(run("finite-moments --check --replicas 2000 " + config("finite3.json")).status, 0);
  EXPECT_EQ(run("env-series --check " + config("env_series.json")).status, 0);
  EXPECT_EQ(run("env-spectral --check " + config("env_spectral.json")).status, 0);
  EXPECT_EQ(run("env-two-state --check --replicas 3000 " + config("env_two_state.json")).status, 0);
  EXPECT_EQ(run("env-spatial --check --replicas 200 " + config("env_spatial.json")).status, 0);
  EXPECT_EQ(run("moments " + config("moments.json")).status, 0);
}
