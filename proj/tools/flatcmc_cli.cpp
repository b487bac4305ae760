// flatcmc: run one scenario from a key = value config and write CSV artifacts.
// Exit codes: 0 pass, 2 config error, 3 numerical failure, 4 golden mismatch.

#include "flatcmc/config.hpp"
#include "flatcmc/csv.hpp"
#include "flatcmc/errors.hpp"
#include "flatcmc/scenarios.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace {

int run(const std::string& config_path, const std::string& scenario, const std::string& out_dir,
        const std::string& golden_dir) {
  using namespace flatcmc;
  PreparedScenario prepared;
  try {
    const ConfigFile file = config_path.empty() ? ConfigFile{} : parse_config(read_text_file(config_path));
    const ScenarioConfig cfg = ScenarioConfig::from_file(file, scenario);
    std::optional<std::filesystem::path> out;
    if (!out_dir.empty()) out = out_dir;
    prepared = prepare_scenario(cfg, out);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  }

  RunSummary summary;
  try {
    summary = prepared.run();
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure in " << prepared.name << ": " << e.what() << "\n";
    std::cerr << "partial artifacts in " << prepared.output_dir.string() << "\n";
    return kExitNumericalFailure;
  }

  for (const auto& c : summary.checks) {
    std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << " measured=" << format_double(c.measured)
              << " expected=" << format_double(c.expected) << " tol=" << format_double(c.tolerance) << "\n";
  }
  std::cout << "artifacts: " << summary.output_dir.string() << "\n";
  if (!summary.all_pass()) return kExitNumericalFailure;

  if (golden_dir.empty()) return kExitPass;
  std::vector<GoldenCheck> golden;
  try {
    golden = check_golden(summary, golden_dir, prepared.golden_rel_tol);
  } catch (const std::exception& e) {
    std::cerr << "golden check: " << e.what() << "\n";
    return kExitConfigError;
  }
  int status = kExitPass;
  for (const auto& g : golden) {
    std::cout << (g.match ? "GOLDEN OK " : "GOLDEN MISMATCH ") << g.artifact;
    if (!g.detail.empty()) std::cout << ": " << g.detail;
    std::cout << "\n";
    if (!g.match) status = kExitGoldenMismatch;
  }
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flat spacetime CMC scenario runner"};
  std::string config_path, out_dir, scenario, golden_dir;
  bool list = false;
  app.add_option("--config", config_path, "Scenario config (key = value lines)")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "Output directory (overrides output_dir)");
  app.add_option("--scenario", scenario, "Scenario name (overrides the config)");
  app.add_flag("--list-scenarios", list, "Print scenario names and exit");
  app.add_option("--check-golden", golden_dir, "Compare artifacts with same-named files in this directory")
      ->check(CLI::ExistingDirectory);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : flatcmc::kExitConfigError;
  }

  if (list) {
    for (const auto& name : flatcmc::scenario_names()) std::cout << name << "\n";
    return flatcmc::kExitPass;
  }
  if (config_path.empty() && scenario.empty()) {
    std::cerr << "config error: pass --config and/or --scenario (see --help)\n";
    return flatcmc::kExitConfigError;
  }
  return run(config_path, scenario, out_dir, golden_dir);
}
