#pragma once

// Scenario runner behind the command-line tool. Each scenario reads its
// parameters from a ScenarioConfig, writes CSV artifacts into an output
// directory and reports a list of checks, also written as summary.csv.

#include "flatcmc/config.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace flatcmc {

enum ExitCode : int { kExitPass = 0, kExitConfigError = 2, kExitNumericalFailure = 3, kExitGoldenMismatch = 4 };

/// pass = |measured - expected| <= tolerance (NaN fails).
struct CheckRecord {
  std::string name;
  double measured = 0.0;
  double expected = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

CheckRecord make_check(std::string name, double measured, double expected, double tolerance);

struct RunSummary {
  std::string scenario;
  std::filesystem::path output_dir;
  std::vector<CheckRecord> checks;
  /// File names (relative to output_dir) in the order they were written.
  std::vector<std::string> artifacts;

  bool all_pass() const;
  /// kExitPass iff every check passes, else kExitNumericalFailure.
  int exit_status() const;
};

/// name,measured,expected,tolerance,pass with pass written as 1/0.
std::string summary_to_csv(const RunSummary& s);

const std::vector<std::string>& scenario_names();

/// A scenario whose parameters have been read and validated; run() creates
/// the output directory and writes artifacts as they are produced.
struct PreparedScenario {
  std::string name;
  std::filesystem::path output_dir;
  /// `golden_rel_tol` key, used by --check-golden.
  double golden_rel_tol = 1e-10;
  std::function<void(RunSummary&)> body;

  /// Runs the body and writes summary.csv. On a NumericalError the summary
  /// gets a failing `numerical_failure` check, is written, and the error is
  /// rethrown; artifacts written so far stay in place.
  RunSummary run() const;
};

/// Reads and validates every parameter without touching the filesystem.
/// `output_override` wins over the `output_dir` key (default
/// flatcmc-out/<scenario>). Throws ConfigError for unknown scenarios, unknown
/// keys and out-of-range values.
PreparedScenario prepare_scenario(const ScenarioConfig& cfg,
                                  const std::optional<std::filesystem::path>& output_override = std::nullopt);

/// prepare_scenario(cfg, output_override).run().
RunSummary run_scenario(const ScenarioConfig& cfg,
                        const std::optional<std::filesystem::path>& output_override = std::nullopt);

struct GoldenCheck {
  std::string artifact;
  bool match = false;
  std::string detail;
};

/// Compares each artifact of `s` that has a same-named file in `golden_dir`.
/// Throws ConfigError if none does.
std::vector<GoldenCheck> check_golden(const RunSummary& s, const std::filesystem::path& golden_dir, double rel_tol);

}  // namespace flatcmc
