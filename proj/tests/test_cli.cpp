#include <gtest/gtest.h>

#include "json.hpp"
#include "nsdfm/panel_io.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace nsdfm;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "nsdfm_cli_test";

int run(const std::string& args) {
  const std::string cmd = std::string(NSDFM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

std::string dir(const std::string& name) { return (kRoot / name).string(); }

// Simulated panel and its fit are shared by most cases.
class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    ASSERT_EQ(run("simulate --n 30 --T 120 --q 2 --r 4 --d 1 --seed 7 --output-dir " + dir("sim")), 0);
    ASSERT_EQ(run("fit --input " + dir("sim") + "/panel.csv --q 2 --r 4 --d 1 --output-dir " + dir("fit")), 0);
  }
  static void TearDownTestSuite() { fs::remove_all(kRoot); }
};

}  // namespace

TEST_F(Cli, SimulateSameSeedIdentical) {
  ASSERT_EQ(run("simulate --n 30 --T 120 --q 2 --r 4 --d 1 --seed 7 --output-dir " + dir("sim_again")), 0);
  for (const char* f : {"panel.csv", "metadata.csv", "truth/factors.csv", "truth/lambda.csv", "truth/xi.csv"}) {
    EXPECT_EQ(slurp(kRoot / "sim" / f), slurp(kRoot / "sim_again" / f)) << f;
  }
  EXPECT_EQ(read_json(kRoot / "sim/manifest.json"), read_json(kRoot / "sim_again/manifest.json"));
}

TEST_F(Cli, FitManifestEchoesSettings) {
  const json m = read_json(kRoot / "fit/manifest.json");
  EXPECT_EQ(m["dimensions"]["q"], 2);
  EXPECT_EQ(m["dimensions"]["r"], 4);
  EXPECT_EQ(m["dimensions"]["d"], 1);
  EXPECT_EQ(m["dimensions"]["n"], 30);
  EXPECT_EQ(m["dimensions"]["T"], 120);
  EXPECT_TRUE(m.contains("settings"));
  EXPECT_TRUE(m["em"].contains("loglik_path"));
}

TEST_F(Cli, FitDeterministicApartFromTimestamp) {
  ASSERT_EQ(run("fit --input " + dir("sim") + "/panel.csv --q 2 --r 4 --d 1 --output-dir " + dir("fit_again")), 0);
  json a = read_json(kRoot / "fit/manifest.json"), b = read_json(kRoot / "fit_again/manifest.json");
  a.erase("created");
  b.erase("created");
  EXPECT_EQ(a, b);
  for (const char* f : {"factors.csv", "lambda.csv", "trends.csv", "cycles.csv", "mse_trace.csv"}) {
    EXPECT_EQ(slurp(kRoot / "fit" / f), slurp(kRoot / "fit_again" / f)) << f;
  }
}

TEST_F(Cli, MseTraceOrdered) {
  const Table t = read_table_csv((kRoot / "fit/mse_trace.csv").string(), true);
  ASSERT_EQ(t.values.rows(), 120);
  for (Eigen::Index i = 0; i < t.values.rows(); ++i) {
    EXPECT_LE(t.values(i, 3), t.values(i, 2) + 1e-12) << i;
    EXPECT_LE(t.values(i, 2), t.values(i, 1) + 1e-12) << i;
  }
}

TEST_F(Cli, PerVariableAdditiveIdentity) {
  int files = 0;
  for (const auto& entry : fs::directory_iterator(kRoot / "fit/per_variable")) {
    const Matrix v = read_table_csv(entry.path().string(), true).values;
    const Vector sum = v.col(1) + v.col(2) + v.col(3) + v.col(4) + v.col(5);
    EXPECT_LT((sum - v.col(0)).cwiseAbs().maxCoeff(), 1e-8) << entry.path();
    ++files;
  }
  EXPECT_EQ(files, 30);
}

TEST_F(Cli, ReportEmitsOnlyEnabledArtifacts) {
  ASSERT_EQ(run("report --fit-dir " + dir("fit") + " --no-cycles --no-per-variable --no-spectra --no-mse-trace"
                " --output-dir " + dir("rep")),
            0);
  EXPECT_TRUE(fs::exists(kRoot / "rep/factors.csv"));
  EXPECT_TRUE(fs::exists(kRoot / "rep/trends.csv"));
  EXPECT_FALSE(fs::exists(kRoot / "rep/cycles.csv"));
  EXPECT_FALSE(fs::exists(kRoot / "rep/spectra.csv"));
  EXPECT_FALSE(fs::exists(kRoot / "rep/mse_trace.csv"));
  EXPECT_FALSE(fs::exists(kRoot / "rep/per_variable"));
}

TEST_F(Cli, DecomposeReloadMatchesFit) {
  ASSERT_EQ(run("decompose --fit-dir " + dir("fit") + " --output-dir " + dir("dec")), 0);
  const Matrix a = read_table_csv((kRoot / "fit/trends.csv").string(), true).values;
  const Matrix b = read_table_csv((kRoot / "dec/trends.csv").string(), true).values;
  ASSERT_EQ(a.rows(), b.rows());
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-8 * (1.0 + a.cwiseAbs().maxCoeff()));
}

TEST_F(Cli, TiedSeriesShareCommonComponent) {
  ASSERT_EQ(run("fit --input " + dir("sim") + "/panel.csv --q 2 --r 4 --d 1 --tie g=s001,s002 --output-dir " +
                dir("tie")),
            0);
  EXPECT_EQ(slurp(kRoot / "tie/common/s001.csv"), slurp(kRoot / "tie/common/s002.csv"));
  EXPECT_NE(slurp(kRoot / "tie/common/s001.csv"), slurp(kRoot / "tie/common/s003.csv"));
}

TEST_F(Cli, SelectFindsThreeShocks) {
  ASSERT_EQ(run("simulate --n 100 --T 230 --q 3 --r 6 --d 2 --seed 5 --output-dir " + dir("sim3")), 0);
  ASSERT_EQ(run("select --input " + dir("sim3") + "/panel.csv --output-dir " + dir("sel3")), 0);
  const json s = read_json(kRoot / "sel3/selection.json");
  EXPECT_EQ(s["q_hat"], 3);
  EXPECT_TRUE(fs::exists(kRoot / "sel3/variance_shares.csv"));
  EXPECT_FALSE(fs::exists(kRoot / "sel3/factors.csv"));
}

TEST_F(Cli, UnknownSubcommandIsUsageError) {
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run(""), 2);
}

TEST_F(Cli, MissingInputWritesErrorReport) {
  EXPECT_EQ(run("fit --input " + dir("nope.csv") + " --output-dir " + dir("err")), 3);
  const json e = read_json(kRoot / "err/error.json");
  EXPECT_EQ(e["command"], "fit");
  EXPECT_EQ(e["stage"], "io");
  EXPECT_EQ(e["exit_code"], 3);
  EXPECT_FALSE(e["message"].get<std::string>().empty());
}

TEST_F(Cli, UnknownConfigKeyRejected) {
  std::ofstream(kRoot / "bad.ini") << "[model]\nqq = 1\n";
  EXPECT_EQ(run("--config " + dir("bad.ini") + " simulate --output-dir " + dir("bad")), 3);
}

TEST_F(Cli, OutputDirFlagBeatsEnvironment) {
  ::setenv("NSDFM_OUTPUT_DIR", dir("env_out").c_str(), 1);
  const int flag_code = run("simulate --n 10 --T 40 --output-dir " + dir("flag_out"));
  const int env_code = run("simulate --n 10 --T 40");
  ::unsetenv("NSDFM_OUTPUT_DIR");
  EXPECT_EQ(flag_code, 0);
  EXPECT_EQ(env_code, 0);
  EXPECT_TRUE(fs::exists(kRoot / "flag_out/panel.csv"));
  EXPECT_TRUE(fs::exists(kRoot / "env_out/panel.csv"));
}
