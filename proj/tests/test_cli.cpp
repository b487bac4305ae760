#include "flatcmc/config.hpp"
#include "flatcmc/csv.hpp"
#include "flatcmc/errors.hpp"
#include "flatcmc/scenarios.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <sstream>

namespace flatcmc {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("flatcmc-test-" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(FLATCMC_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

ScenarioConfig config_from_text(const std::string& text) { return ScenarioConfig::from_file(parse_config(text), ""); }

// --- config -------------------------------------------------------------------

TEST(Config, KeyValueLines) {
  const KeyValueBlock b = parse_key_value("# comment\n  dim = 3  \nsteps=400 # trailing\n\nname = a b\n");
  EXPECT_EQ(b.size(), 3u);
  EXPECT_EQ(b.at("dim"), "3");
  EXPECT_EQ(b.at("steps"), "400");
  EXPECT_EQ(b.at("name"), "a b");
  EXPECT_THROW(parse_key_value("dim = 3\ndim = 4\n"), ConfigError);
  EXPECT_THROW(parse_key_value("just words\n"), ConfigError);
  EXPECT_THROW(parse_key_value(" = 3\n"), ConfigError);
  EXPECT_THROW(parse_key_value("[s]\na = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("[]\n"), ConfigError);
}

TEST(Config, SectionsOverrideTopLevel) {
  const ConfigFile f = parse_config("scenario = cone-flow\ndim = 3\nsteps = 10\n[cone-flow]\ndim = 4\n[riccati]\ndim = 2\n");
  const ScenarioConfig c = ScenarioConfig::from_file(f, "");
  EXPECT_EQ(c.name(), "cone-flow");
  EXPECT_EQ(c.get_int("dim", 0), 4);
  EXPECT_FALSE(c.has("scenario"));
  const ScenarioConfig r = ScenarioConfig::from_file(f, "riccati");
  EXPECT_EQ(r.name(), "riccati");
  EXPECT_EQ(r.get_int("dim", 0), 2);
  EXPECT_EQ(r.get_int("steps", 0), 10);
  EXPECT_THROW(ScenarioConfig::from_file(parse_config("dim = 3\n"), ""), ConfigError);
}

TEST(Config, TypedGetters) {
  const ScenarioConfig c("x", {{"a", "2.5"}, {"b", "7"}, {"c", "yes"}, {"d", "1, 2 3,4"}, {"e", "3.5"},
                               {"f", "maybe"}, {"g", "1e400"}, {"h", "+4"}, {"unused", "0"}});
  EXPECT_EQ(c.get_double("a", 0.0), 2.5);
  EXPECT_EQ(c.get_int("b", 0), 7);
  EXPECT_TRUE(c.get_bool("c", false));
  EXPECT_EQ(c.get_doubles("d", {}), std::vector<double>({1, 2, 3, 4}));
  EXPECT_THROW(c.get_int("e", 0), ConfigError);
  EXPECT_THROW(c.get_bool("f", false), ConfigError);
  EXPECT_THROW(c.get_double("g", 0.0), ConfigError);
  EXPECT_EQ(c.get_double("h", 0.0), 4.0);
  EXPECT_EQ(c.get_double("missing", -1.0), -1.0);
  EXPECT_EQ(c.unused_keys(), std::vector<std::string>({"unused"}));
}

// --- csv ----------------------------------------------------------------------

TEST(Csv, FormatDoubleRoundTrips) {
  testing::Random rng(77);
  for (int i = 0; i < 2000; ++i) {
    const double x = std::ldexp(rng.uniform(-1.0, 1.0), rng.integer(-1070, 1020));
    EXPECT_EQ(std::strtod(format_double(x).c_str(), nullptr), x) << format_double(x);
  }
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(std::numeric_limits<double>::quiet_NaN()), "nan");
  EXPECT_EQ(format_double(-std::numeric_limits<double>::infinity()), "-inf");
  EXPECT_EQ(std::strtod(format_double(std::numeric_limits<double>::denorm_min()).c_str(), nullptr),
            std::numeric_limits<double>::denorm_min());
}

TEST(Csv, TableRoundTrip) {
  CsvTable t;
  t.header = {"a", "b"};
  t.add_row({1.0, -2.5e-300});
  t.add_row({std::numeric_limits<double>::infinity(), 1.0 / 3.0});
  EXPECT_THROW(t.add_row({1.0}), std::exception);
  const std::string text = to_csv(t);
  EXPECT_EQ(text.substr(0, 4), "a,b\n");
  const CsvTable back = parse_csv(text);
  EXPECT_EQ(back.header, t.header);
  EXPECT_EQ(back.rows, t.rows);
  EXPECT_EQ(back.column_values("b"), std::vector<double>({-2.5e-300, 1.0 / 3.0}));
  EXPECT_THROW(back.column("zz"), std::exception);
}

TEST(Csv, CompareTables) {
  CsvTable a;
  a.header = {"x", "y"};
  a.add_row({1.0, 2.0});
  a.add_row({0.0, 1e-3});
  EXPECT_TRUE(compare_tables(a, a, 1e-10).match);
  CsvTable b = a;
  b.rows[1][1] *= 1.0 + 1e-9;
  const GoldenReport r = compare_tables(b, a, 1e-10);
  EXPECT_FALSE(r.match);
  EXPECT_EQ(r.mismatches, 1u);
  EXPECT_NEAR(r.worst_relative, 1e-9, 1e-12);
  EXPECT_TRUE(compare_tables(b, a, 1e-8).match);
  CsvTable n = a;
  n.rows[0][0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(compare_tables(n, n, 1e-10).match);
  CsvTable h = a;
  h.header[1] = "z";
  EXPECT_THROW(compare_tables(h, a, 1e-10), DomainError);
  CsvTable shorter = a;
  shorter.rows.pop_back();
  EXPECT_THROW(compare_tables(shorter, a, 1e-10), DomainError);
}

// --- scenarios ----------------------------------------------------------------

TEST(Scenarios, Names) {
  EXPECT_EQ(scenario_names(), std::vector<std::string>({"cone-flow", "kasner-flow", "lichnerowicz-sweep", "riccati",
                                                         "bolza-check", "limit-experiment", "graph-check"}));
}

TEST(Scenarios, ConfigErrorsLeaveNoArtifacts) {
  const fs::path out = scratch("bad");
  EXPECT_THROW(prepare_scenario(ScenarioConfig("no-such", {}), out), ConfigError);
  EXPECT_THROW(prepare_scenario(config_from_text("scenario = riccati\nbogus = 1\n"), out), ConfigError);
  EXPECT_THROW(prepare_scenario(config_from_text("scenario = cone-flow\ntau_start = 1\n"), out), ConfigError);
  EXPECT_THROW(prepare_scenario(config_from_text("scenario = cone-flow\ndim = 5\n"), out), ConfigError);
  EXPECT_THROW(prepare_scenario(config_from_text("scenario = limit-experiment\nlambdas = 2 1\n"), out), ConfigError);
  EXPECT_FALSE(fs::exists(out));
}

TEST(Scenarios, SummaryAndExitStatus) {
  const fs::path out = scratch("riccati");
  const RunSummary s = run_scenario(config_from_text("scenario = riccati\n"), out);
  EXPECT_TRUE(s.all_pass());
  EXPECT_EQ(s.exit_status(), kExitPass);
  EXPECT_EQ(s.artifacts, std::vector<std::string>({"riccati.csv"}));
  std::istringstream summary(read_text_file(out / "summary.csv"));
  std::string line;
  ASSERT_TRUE(std::getline(summary, line));
  EXPECT_EQ(line, "name,measured,expected,tolerance,pass");
  std::size_t rows = 0;
  while (std::getline(summary, line)) {
    EXPECT_EQ(line.substr(0, s.checks[rows].name.size() + 1), s.checks[rows].name + ",");
    EXPECT_EQ(line.back(), '1');
    ++rows;
  }
  EXPECT_EQ(rows, s.checks.size());

  RunSummary failing = s;
  failing.checks.push_back(make_check("forced", std::numeric_limits<double>::quiet_NaN(), 0.0, 1.0));
  EXPECT_FALSE(failing.checks.back().pass);
  EXPECT_EQ(failing.exit_status(), kExitNumericalFailure);
}

TEST(Scenarios, ArtifactsAreBitwiseDeterministic) {
  for (const std::string& text :
       {std::string("scenario = cone-flow\ndim = 2\nsteps = 500\nrichardson_steps = 50\n"),
        std::string("scenario = bolza-check\n"), std::string("scenario = lichnerowicz-sweep\n")}) {
    const fs::path a = scratch("det-a"), b = scratch("det-b");
    const RunSummary sa = run_scenario(config_from_text(text), a);
    const RunSummary sb = run_scenario(config_from_text(text), b);
    ASSERT_EQ(sa.artifacts, sb.artifacts);
    for (const auto& name : sa.artifacts) {
      EXPECT_EQ(read_text_file(a / name), read_text_file(b / name)) << text << name;
    }
    EXPECT_EQ(read_text_file(a / "summary.csv"), read_text_file(b / "summary.csv"));
  }
}

TEST(Scenarios, GoldenComparison) {
  const fs::path out = scratch("golden-run"), golden = scratch("golden-dir");
  const RunSummary s = run_scenario(config_from_text("scenario = riccati\n"), out);
  fs::create_directories(golden);
  EXPECT_THROW(check_golden(s, golden, 1e-10), ConfigError);
  fs::copy_file(out / "riccati.csv", golden / "riccati.csv");
  auto checks = check_golden(s, golden, 1e-10);
  ASSERT_EQ(checks.size(), 1u);
  EXPECT_TRUE(checks[0].match);

  CsvTable t = parse_csv(read_text_file(golden / "riccati.csv"));
  t.rows[0].back() = t.rows[0].back() * (1.0 + 1e-9) + 1e-300;
  write_text_file(golden / "riccati.csv", to_csv(t));
  checks = check_golden(s, golden, 1e-10);
  EXPECT_FALSE(checks[0].match);
  EXPECT_FALSE(checks[0].detail.empty());
}

// --- command line -------------------------------------------------------------

TEST(CommandLine, ExitCodes) {
  const fs::path dir = scratch("cli");
  fs::create_directories(dir);
  EXPECT_EQ(run_cli("--list-scenarios"), kExitPass);
  EXPECT_EQ(run_cli(""), kExitConfigError);
  EXPECT_EQ(run_cli("--scenario no-such"), kExitConfigError);
  EXPECT_EQ(run_cli("--config " + (dir / "missing.cfg").string()), kExitConfigError);

  write_text_file(dir / "bad.cfg", "scenario = cone-flow\ntau_start = 1\n");
  EXPECT_EQ(run_cli("--config " + (dir / "bad.cfg").string() + " --out " + (dir / "bad-out").string()),
            kExitConfigError);
  EXPECT_FALSE(fs::exists(dir / "bad-out"));

  write_text_file(dir / "ok.cfg", "scenario = riccati\n");
  EXPECT_EQ(run_cli("--config " + (dir / "ok.cfg").string() + " --out " + (dir / "ok-out").string()), kExitPass);
  EXPECT_TRUE(fs::exists(dir / "ok-out" / "summary.csv"));

  // An unreachable tolerance turns a check into a numerical failure.
  write_text_file(dir / "strict.cfg", "scenario = cone-flow\ndim = 2\nsteps = 200\nrichardson_steps = 0\ndrift_tol = 1e-300\n");
  EXPECT_EQ(run_cli("--config " + (dir / "strict.cfg").string() + " --out " + (dir / "strict-out").string()),
            kExitNumericalFailure);
  EXPECT_TRUE(fs::exists(dir / "strict-out" / "summary.csv"));

  fs::create_directories(dir / "golden");
  CsvTable t = parse_csv(read_text_file(dir / "ok-out" / "riccati.csv"));
  write_text_file(dir / "golden" / "riccati.csv", to_csv(t));
  const std::string golden_run =
      "--config " + (dir / "ok.cfg").string() + " --out " + (dir / "g-out").string() + " --check-golden " +
      (dir / "golden").string();
  EXPECT_EQ(run_cli(golden_run), kExitPass);
  t.rows[0].back() = t.rows[0].back() * 1.5 + 1.0;
  write_text_file(dir / "golden" / "riccati.csv", to_csv(t));
  EXPECT_EQ(run_cli(golden_run), kExitGoldenMismatch);
}

}  // namespace
}  // namespace flatcmc
