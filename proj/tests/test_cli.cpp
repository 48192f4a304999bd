#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "superres/cli.hpp"

using superres::cli::json;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "superres");
  std::vector<const char*> argv;
  for (auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = superres::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("superres_cli_" + name)).string();
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

// Parse the CSV after the "#" header lines into rows of strings keyed by column name.
std::vector<std::map<std::string, std::string>> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> cols;
  std::vector<std::map<std::string, std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    if (cols.empty()) {
      cols = cells;
      continue;
    }
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < cols.size() && i < cells.size(); ++i) row[cols[i]] = cells[i];
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

TEST(Cli, IdealFisherCurveApproachesOne) {
  const auto r = run({"fisher-curve", "--x-grid", "1e-4:2.5:30:log"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("# superres 0.1.0\n# config: ", 0), 0u);
  const auto rows = parse_csv(r.out);
  ASSERT_EQ(rows.size(), 30u);
  EXPECT_NEAR(std::stod(rows.front().at("mean_w2F")), 1.0, 1e-7);
  EXPECT_EQ(rows.front().at("std_w2F"), "0");
  EXPECT_EQ(rows.front().at("n_samples"), "1");
  EXPECT_NEAR(std::stod(rows.back().at("mean_w2F")), superres::fisher_ideal_closed_form(1, 2.5).w2F, 1e-12);
}

TEST(Cli, RandomEnsembleDipsAtSmallSeparation) {
  const auto r = run({"fisher-curve", "--model", "random", "--target-offdiag", "0.0017", "--samples", "40",
                      "--x-grid", "1e-4,0.05,0.3"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = parse_csv(r.out);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_LT(std::stod(rows[0].at("mean_w2F")), 0.05);
  EXPECT_GT(std::stod(rows[2].at("mean_w2F")), std::stod(rows[0].at("mean_w2F")));
  EXPECT_EQ(rows[0].at("n_samples"), "40");
}

TEST(Cli, UniformSmallSeparationFollowsWeakLaw) {
  const auto r = run({"fisher-curve", "--model", "uniform", "--r2", "0.017", "--x-grid", "1e-4"});
  ASSERT_EQ(r.code, 0) << r.err;
  const double w2f = std::stod(parse_csv(r.out).front().at("mean_w2F"));
  const double law = 1e-8 * (1 - 8 * 0.017) * (1 - 8 * 0.017) / 0.017;
  EXPECT_NEAR(w2f / law, 1.0, 0.1);
}

TEST(Cli, IdealDminSweep) {
  const auto r = run({"dmin", "--n-photons", "1:1e6:7:log"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = parse_csv(r.out);
  ASSERT_EQ(rows.size(), 7u);
  for (const auto& row : rows) {
    const double n = std::stod(row.at("N"));
    EXPECT_NEAR(std::stod(row.at("dmin_analytic")), 0.5 / std::sqrt(n), 1e-15);
    if (n >= 100) {
      EXPECT_NEAR(std::stod(row.at("dmin_over_2w")) * 2 * std::sqrt(n), 1.0, 1e-3);
    }
    EXPECT_EQ(row.at("status"), "ok");
  }
}

TEST(Cli, CrosstalkSweepFollowsSquareRootTrend) {
  const auto r = run({"dmin", "--model", "uniform", "--r2", "1.7e-4,1.7e-3,1.7e-2", "--n-photons", "1e4"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = parse_csv(r.out);
  ASSERT_EQ(rows.size(), 3u);
  // Ten-fold |r|^2 should scale d_min by about 10^(1/4).
  const double a = std::stod(rows[0].at("dmin_over_2w")), b = std::stod(rows[1].at("dmin_over_2w"));
  EXPECT_NEAR(b / a, std::pow(10.0, 0.25), 0.15);
}

TEST(Cli, MleVerifyDeterministicAndWarns) {
  const std::vector<std::string> args{"mle-verify", "--trials", "50", "--null-trials", "20", "--format", "json"};
  const auto a = run(args), b = run(args);
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.err.find("100 trials"), std::string::npos);
  const auto doc = json::parse(a.out);
  EXPECT_EQ(doc.at("warnings").size(), 1u);
  EXPECT_GT(doc.at("report").at("ratio").get<double>(), 0.0);
}

TEST(Cli, MleVerifyRatioNearOne) {
  const auto r = run({"mle-verify", "--trials", "300", "--null-trials", "0", "--format", "json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = json::parse(r.out).at("report");
  EXPECT_NEAR(rep.at("ratio").get<double>(), 1.0, 4 * rep.at("ratio_stderr").get<double>());
  EXPECT_TRUE(r.err.empty());
}

TEST(Cli, ConfigReplayIsByteIdentical) {
  const auto first = temp_path("first.csv"), second = temp_path("second.csv");
  ASSERT_EQ(run({"dmin", "--model", "uniform", "--r2", "0.0017", "--n-photons", "1e2,1e4", "--out", first}).code, 0);
  ASSERT_EQ(run({"dmin", "--config", first, "--out", second}).code, 0);
  EXPECT_EQ(slurp(first), slurp(second));
  EXPECT_FALSE(slurp(first).empty());
}

TEST(Cli, JsonMirrorsCsv) {
  const auto csv = run({"fisher-curve", "--x-grid", "0.3"});
  const auto js = run({"fisher-curve", "--x-grid", "0.3", "--format", "json"});
  ASSERT_EQ(js.code, 0);
  const auto doc = json::parse(js.out);
  const auto& cols = doc.at("columns");
  const auto it = std::find(cols.begin(), cols.end(), "mean_w2F");
  ASSERT_NE(it, cols.end());
  const double from_json = doc.at("rows").at(0).at(it - cols.begin()).get<double>();
  EXPECT_EQ(from_json, std::stod(parse_csv(csv.out).front().at("mean_w2F")));
}

TEST(Cli, AuditIdentity) {
  const auto path = temp_path("identity.txt");
  superres::store_matrix(superres::identity_crosstalk(9), path);
  const auto r = run({"audit-matrix", path});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto doc = json::parse(r.out);
  EXPECT_EQ(doc.at("stats").at("avg_offdiag").get<double>(), 0.0);
  EXPECT_TRUE(doc.at("crossover").at("demux_beats_direct_imaging").get<bool>());
  EXPECT_TRUE(doc.at("small_d").at("ideal_like").get<bool>());
  EXPECT_TRUE(doc.at("crossover_n_vs_direct_imaging").is_null());
}

TEST(Cli, AuditUniform) {
  const auto path = temp_path("uniform.txt");
  superres::store_matrix(superres::uniform_crosstalk(9, std::sqrt(0.0017)), path);
  const auto r = run({"audit-matrix", path, "--n-photons", "1e4"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto doc = json::parse(r.out);
  EXPECT_NEAR(doc.at("stats").at("avg_offdiag").get<double>(), 0.0017, 1e-15);
  EXPECT_TRUE(doc.at("matrix").at("non_unitary").get<bool>());
  const auto& row = doc.at("dmin_table").at(0);
  // Loss-free weak-crosstalk law gives 0.0287; exact FI lands a few percent higher.
  EXPECT_NEAR(2 * row.at("dmin_over_2w").get<double>(), 0.0287, 0.0287 * 0.06);
  EXPECT_TRUE(doc.at("crossover").at("demux_beats_direct_imaging").get<bool>());
}

TEST(Cli, AuditStrongCrosstalkFlagged) {
  const auto path = temp_path("strong.txt");
  superres::store_matrix(superres::uniform_crosstalk(9, std::sqrt(0.05)), path);
  const auto r = run({"audit-matrix", path});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto doc = json::parse(r.out);
  EXPECT_FALSE(doc.at("crossover").at("demux_beats_direct_imaging").get<bool>());
  EXPECT_GT(doc.at("crossover").at("ratio").get<double>(), 0.125);
}

TEST(Cli, AuditRejectsOversizedCutoff) {
  const auto path = temp_path("small.txt");
  superres::store_matrix(superres::identity_crosstalk(4), path);
  EXPECT_EQ(run({"audit-matrix", path, "--q-measured", "2"}).code, 2);
}

TEST(Cli, CalibrateMu) {
  const auto r = run({"calibrate-mu", "--target-offdiag", "0.0017", "--samples", "100"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto doc = json::parse(r.out);
  EXPECT_GT(doc.at("mu").get<double>(), 0.0);
  EXPECT_LT(std::abs(doc.at("verification").at("relative_error").get<double>()), 0.05);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"fisher-curve", "--model", "bogus"}).code, 2);
  EXPECT_EQ(run({"fisher-curve", "--x-grid", "1:0:5:log"}).code, 2);
  EXPECT_EQ(run({"dmin", "--n-photons", "-5"}).code, 2);
  EXPECT_EQ(run({"fisher-curve", "--model", "uniform", "--r2", "0.5"}).code, 2);
  EXPECT_EQ(run({"audit-matrix", temp_path("missing.txt")}).code, 2);
  EXPECT_EQ(run({"calibrate-mu", "--target-offdiag", "0.2", "--samples", "5"}).code, 2);
  // Allowed by the range check but above the ensemble's saturation near 1/D.
  EXPECT_EQ(run({"calibrate-mu", "--target-offdiag", "0.124", "--samples", "5"}).code, 3);
  EXPECT_EQ(run({"--version"}).code, 0);
  EXPECT_EQ(run({"dmin", "--help"}).code, 0);
}

TEST(Cli, BinaryExitCodes) {
  const std::string bin = SUPERRES_CLI_PATH;
  const auto status = [&](const std::string& args) {
    const int raw = std::system((bin + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  };
  EXPECT_EQ(status("--version"), 0);
  EXPECT_EQ(status("fisher-curve --x-grid 0.1"), 0);
  EXPECT_EQ(status("fisher-curve --x-grid nope"), 2);
  EXPECT_EQ(status("mle-verify --x-true 1e-9 --trials 5"), 2);
  EXPECT_EQ(status("calibrate-mu --target-offdiag 0.124 --samples 5"), 3);
}
