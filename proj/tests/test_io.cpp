#include <gtest/gtest.h>

#include "nsdfm/panel_io.hpp"
#include "nsdfm/pipeline.hpp"
#include "test_util.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace nsdfm;
namespace fs = std::filesystem;

namespace {

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("nsdfm_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write(const std::string& name, const std::string& text) const {
    const fs::path p = dir_ / name;
    std::ofstream(p) << text;
    return p.string();
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

 private:
  fs::path dir_;
};

}  // namespace

TEST_F(TempDir, ThreeByFourPanel) {
  const std::string p = write("p.csv",
                              "date,a,b,c\n"
                              "1960Q1,1,2,3\n"
                              "1960Q2,4,5,6\n"
                              "1960Q3,7,8,9\n"
                              "1960Q4,10,11,12\n");
  const PanelData panel = read_panel_csv(p);
  ASSERT_EQ(panel.n(), 3);
  ASSERT_EQ(panel.T(), 4);
  EXPECT_EQ(panel.ids, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(panel.x(1, 2), 8.0);
  EXPECT_EQ(panel.x(2, 3), 12.0);
  EXPECT_NO_THROW(check_gapless_quarters(panel.dates));
}

TEST(Dates, QuarterlyAndIso) {
  const DateKey q = parse_date("1960Q3");
  EXPECT_TRUE(q.quarterly);
  EXPECT_EQ(q.quarter_index(), 4 * 1960 + 2);
  EXPECT_EQ(quarter_label(q.quarter_index()), "1960Q3");
  const DateKey d = parse_date("2001-11-05");
  EXPECT_EQ(d.quarter_index(), 4 * 2001 + 3);
  EXPECT_EQ(parse_date("2001-02").month_index(), 12 * 2001 + 1);
  EXPECT_THROW(parse_date("1960Q5"), IoError);
  EXPECT_THROW(parse_date("19x0-01-01"), IoError);
}

TEST(Dates, GapDetected) {
  EXPECT_THROW(check_gapless_quarters({"1960Q1", "1960Q2", "1960Q4"}), IoError);
  EXPECT_NO_THROW(check_gapless_quarters({"1960Q4", "1961Q1"}));
}

TEST_F(TempDir, RoundTripFifteenDigits) {
  std::mt19937_64 rng(1);
  PanelData p;
  p.ids = {"x1", "x2"};
  p.x = testutil::randn(2, 6, rng) * 1234.5678;
  p.x(0, 0) = 1.0 / 3.0;
  p.x(1, 1) = -2.5e-17;
  for (int t = 0; t < 6; ++t) p.dates.push_back(quarter_label(4 * 1990 + t));
  write_panel_csv(path("rt.csv"), p);
  const PanelData back = read_panel_csv(path("rt.csv"));
  EXPECT_EQ(back.ids, p.ids);
  EXPECT_EQ(back.dates, p.dates);
  for (Eigen::Index i = 0; i < 2; ++i)
    for (Eigen::Index t = 0; t < 6; ++t) EXPECT_NEAR(back.x(i, t), p.x(i, t), 1e-14 * std::abs(p.x(i, t)));
}

TEST_F(TempDir, MissingCellNamesRowAndColumn) {
  const std::string p = write("m.csv", "date,a,b\n1960Q1,1,2\n1960Q2,3,\n");
  try {
    read_panel_csv(p);
    FAIL();
  } catch (const IoError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("row 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("column 3"), std::string::npos) << msg;
  }
}

TEST_F(TempDir, NonMonotoneDates) {
  EXPECT_THROW(read_panel_csv(write("d.csv", "date,a\n1960Q2,1\n1960Q1,2\n")), IoError);
  EXPECT_THROW(read_panel_csv(write("e.csv", "date,a\n1960Q1,1\n1960Q1,2\n")), IoError);
}

TEST_F(TempDir, NonNumericCell) {
  EXPECT_THROW(read_panel_csv(write("n.csv", "date,a\n1960Q1,1.5x\n")), IoError);
}

TEST_F(TempDir, MissingFile) { EXPECT_THROW(read_panel_csv(path("absent.csv")), IoError); }

TEST_F(TempDir, MetadataRoundTrip) {
  std::vector<SeriesMeta> meta(2);
  meta[0].id = "gdp";
  meta[0].transform = Transform::log;
  meta[0].tie_group = "gdo";
  meta[0].rho_mode = RhoMode::force_0;
  meta[1].id = "ip";
  meta[1].detrend_mode = DetrendMode::force_trend;
  meta[1].frequency = Frequency::monthly;
  meta[1].sa = false;
  meta[1].winsorize_mad = 5.0;
  write_metadata_csv(path("meta.csv"), meta);
  const auto back = read_metadata_csv(path("meta.csv"));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].id, "gdp");
  EXPECT_EQ(back[0].transform, Transform::log);
  EXPECT_EQ(back[0].tie_group, std::optional<std::string>("gdo"));
  EXPECT_EQ(back[0].rho_mode, RhoMode::force_0);
  EXPECT_EQ(back[1].detrend_mode, DetrendMode::force_trend);
  EXPECT_EQ(back[1].frequency, Frequency::monthly);
  EXPECT_FALSE(back[1].sa);
  EXPECT_EQ(back[1].winsorize_mad, 5.0);
  EXPECT_FALSE(back[1].tie_group.has_value());
}

TEST_F(TempDir, MetadataOptionalColumnsAndBadCode) {
  const auto meta = read_metadata_csv(write("m.csv", "id\nfoo\nbar\n"));
  ASSERT_EQ(meta.size(), 2u);
  EXPECT_EQ(meta[1].transform, Transform::none);
  EXPECT_THROW(read_metadata_csv(write("b.csv", "id,transform\nfoo,7\n")), IoError);
}

TEST_F(TempDir, ConfigParsesSections) {
  const std::string p = write("run.ini",
                              "[input]\ndata = panel.csv\nfrequency = monthly\n"
                              "[model]\nq = 3\nr = 6\ntol_share = 2.5\n"
                              "[em]\ntol = 1e-7\nmax_iter = 50\n"
                              "[ties]\ngdo = gdp, gdi\n"
                              "[output]\ndir = out\nspectra = false\n"
                              "[simulate]\nn = 20\nseed = 9\n");
  const RunConfig cfg = load_config(p);
  EXPECT_EQ(cfg.input, "panel.csv");
  EXPECT_EQ(cfg.frequency, Frequency::monthly);
  EXPECT_EQ(cfg.q, 3);
  EXPECT_EQ(cfg.r, 6);
  EXPECT_EQ(cfg.tol_share, 2.5);
  EXPECT_EQ(cfg.settings.em_tol, 1e-7);
  EXPECT_EQ(cfg.settings.em_max_iter, 50);
  ASSERT_EQ(cfg.ties.count("gdo"), 1u);
  EXPECT_EQ(cfg.ties.at("gdo"), (std::vector<std::string>{"gdp", "gdi"}));
  EXPECT_EQ(cfg.output_dir, "out");
  EXPECT_FALSE(cfg.emit.spectra);
  EXPECT_TRUE(cfg.emit.factors);
  EXPECT_EQ(cfg.dgp.n, 20);
  EXPECT_EQ(cfg.dgp.seed, 9u);
}

TEST_F(TempDir, ConfigUnknownKeyIsIoError) {
  try {
    load_config(write("bad.ini", "[model]\nqq = 3\n"));
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), Stage::io);
    EXPECT_NE(std::string(e.what()).find("qq"), std::string::npos);
  }
  EXPECT_THROW(load_config(write("bad2.ini", "[nonsense]\nx = 1\n")), StageError);
}

TEST_F(TempDir, OutputDirFromEnvironment) {
  RunConfig cfg;
  ::setenv("NSDFM_OUTPUT_DIR", "/tmp/elsewhere", 1);
  apply_environment(cfg);
  ::unsetenv("NSDFM_OUTPUT_DIR");
  EXPECT_EQ(cfg.output_dir, "/tmp/elsewhere");
}

TEST(FormatNumber, FifteenSignificantDigits) {
  EXPECT_EQ(format_number(1.0 / 3.0), "0.333333333333333");
  EXPECT_EQ(format_number(2.0), "2");
}
