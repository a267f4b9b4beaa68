#include "fixtures.hpp"

#include "pstarmax/forecast.hpp"
#include "pstarmax/io.hpp"

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>

namespace pstarmax {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("pstarmax_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  [[nodiscard]] std::string path(const std::string& name) const { return (dir_ / name).string(); }

  Outcome run(const std::string& args) const {
    const std::string cmd = std::string(PSTARMAX_CLI) + " " + args + " > " + path("stdout") + " 2> " + path("stderr");
    const int status = std::system(cmd.c_str());
    Outcome o;
    o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    o.out = io::read_text(path("stdout"));
    o.err = io::read_text(path("stderr"));
    return o;
  }

  void write(const std::string& name, const std::string& text) const { io::write_text(path(name), text); }

  void write_model(const testing::Scenario& sc) const {
    write("model.json", io::to_json(sc.spec).dump());
    write("theta.json", io::to_json(sc.theta).dump());
    std::ostringstream w;
    io::write_weights_csv(w, sc.w);
    write("w.csv", w.str());
  }

  fs::path dir_;
};

TEST_F(Cli, BuildAndValidateGrid) {
  const auto built = run("weights build --kind grid4nn --n 3 --out " + path("w.csv"));
  ASSERT_EQ(built.code, 0) << built.err;
  const auto v = run("weights validate " + path("w.csv"));
  EXPECT_EQ(v.code, 0) << v.out;
  EXPECT_TRUE(nlohmann::json::parse(v.out).at("ok").get<bool>());
  std::ostringstream lib;
  io::write_weights_csv(lib, build_grid_4nn({3}));
  EXPECT_EQ(io::read_text(path("w.csv")), lib.str());
}

TEST_F(Cli, ValidateRejectsBrokenWeights) {
  write("w.csv", "order,row,col,weight\n0,0,0,1\n0,1,1,1\n1,0,1,0.5\n1,1,0,1\n");
  const auto v = run("weights validate " + path("w.csv"));
  EXPECT_EQ(v.code, 1);
  EXPECT_FALSE(nlohmann::json::parse(v.out).at("ok").get<bool>());
}

TEST_F(Cli, ShortPanelIsAPreconditionError) {
  const auto sc = testing::reference_linear(3);
  write_model(sc);
  write("y.csv", "t,location,value\n0,1,1\n0,2,1\n0,3,1\n0,4,1\n0,5,1\n0,6,1\n0,7,1\n0,8,1\n0,9,1\n");
  const auto o = run("fit --model " + path("model.json") + " --weights " + path("w.csv") + " --data " + path("y.csv"));
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("insufficient observations"), std::string::npos) << o.err;
  EXPECT_EQ(nlohmann::json::parse(o.err).at("error").at("exit_code"), 2);
}

TEST_F(Cli, SimulateNeedsSeed) {
  const auto sc = testing::reference_linear(3);
  write_model(sc);
  const auto o = run("simulate --model " + path("model.json") + " --weights " + path("w.csv") + " --theta " +
                     path("theta.json") + " --T 10");
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("seed"), std::string::npos);
}

TEST_F(Cli, UsageAndMissingFiles) {
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("weights validate " + path("absent.csv")).code, 2);
}

TEST_F(Cli, ExplosiveParametersAreValidationErrors) {
  auto sc = testing::reference_linear(3);
  sc.theta.alpha = {{0.6, 0.0}};
  sc.theta.beta = {{0.6, 0.0}};
  write_model(sc);
  const auto o = run("simulate --model " + path("model.json") + " --weights " + path("w.csv") + " --theta " +
                     path("theta.json") + " --T 10 --seed 1");
  EXPECT_EQ(o.code, 1);
}

TEST_F(Cli, OutputsMatchLibraryCalls) {
  const auto sc = testing::reference_linear(3);
  write_model(sc);
  const auto sim = run("simulate --model " + path("model.json") + " --weights " + path("w.csv") + " --theta " +
                       path("theta.json") + " --T 200 --seed 17 --out " + path("y.csv"));
  ASSERT_EQ(sim.code, 0) << sim.err;
  SimulationConfig cfg;
  cfg.T = 200;
  cfg.seed = 17;
  const auto lib = simulate_path(sc.theta, sc.spec, sc.w, nullptr, cfg);
  std::ostringstream y;
  io::write_panel_csv(y, lib.counts.values());
  ASSERT_EQ(io::read_text(path("y.csv")), y.str());

  const auto f = run("fit --model " + path("model.json") + " --weights " + path("w.csv") + " --data " + path("y.csv"));
  ASSERT_EQ(f.code, 0) << f.err;
  const auto lib_fit = fit(sc.spec, sc.w, lib.counts, nullptr);
  EXPECT_EQ(f.out, io::to_json(lib_fit).dump(2) + "\n");

  write("fit.json", f.out);
  const auto t = run("test --fit " + path("fit.json") + " --param beta[1][0]");
  ASSERT_EQ(t.code, 0) << t.err;
  const auto wr = single_param_test(lib_fit, 3);
  EXPECT_EQ(nlohmann::json::parse(t.out), io::to_json(wr));

  const auto fc = run("forecast --fit " + path("fit.json") + " --weights " + path("w.csv") + " --data " +
                      path("y.csv") + " --test-split 150 --out " + path("f.csv") + " --metrics-out " + path("m.json"));
  ASSERT_EQ(fc.code, 0) << fc.err;
  const auto rf = rolling_forecast(lib_fit, sc.w, lib.counts, nullptr, 150);
  const auto metrics = io::read_json(path("m.json"));
  EXPECT_EQ(metrics.at("mspe").get<double>(),
            mspe(lib.counts.values().rightCols(rf.lambda.cols()), rf.lambda));
  EXPECT_EQ(metrics.at("cells").get<Index>(), 9 * 51);
}

TEST_F(Cli, SimulateFitRoundTrip) {
  const auto sc = testing::reference_linear(9);
  write_model(sc);
  const Eigen::VectorXd truth = pack(sc.theta);
  int covered = 0, total = 0;
  for (int seed = 1; seed <= 20; ++seed) {
    const auto sim = run("simulate --model " + path("model.json") + " --weights " + path("w.csv") + " --theta " +
                         path("theta.json") + " --T 500 --seed " + std::to_string(seed) + " --out " + path("y.csv"));
    ASSERT_EQ(sim.code, 0) << sim.err;
    const auto f = run("fit --model " + path("model.json") + " --weights " + path("w.csv") + " --data " +
                       path("y.csv") + " --out " + path("fit.json"));
    ASSERT_EQ(f.code, 0) << f.err;
    const auto res = io::fit_result_from_json(io::read_json(path("fit.json")));
    EXPECT_TRUE(res.converged) << "seed " << seed << ": " << res.message;
    for (Index k = 0; k < truth.size(); ++k, ++total)
      covered += std::abs(res.theta[k] - truth[k]) <= 3.0 * res.std_errors[k] ? 1 : 0;
  }
  EXPECT_GE(covered, 0.9 * total) << covered << " of " << total;
}

TEST_F(Cli, StudyRunWritesReport) {
  write("plan.json", R"({"preset": "size", "grid": 3, "replicates": 3, "T": [60]})");
  EXPECT_EQ(run("study run " + path("plan.json") + " --out " + path("report")).code, 2);
  const auto o = run("study run " + path("plan.json") + " --out " + path("report") + " --seed 4");
  ASSERT_EQ(o.code, 0) << o.err;
  for (const char* f : {"plan.json", "report.json", "fits.csv", "tests.csv"}) EXPECT_TRUE(fs::exists(dir_ / "report" / f)) << f;
  const auto report = io::read_json(path("report/report.json"));
  EXPECT_EQ(report.at("plan").at("seed"), 4);
}

}  // namespace
}  // namespace pstarmax
