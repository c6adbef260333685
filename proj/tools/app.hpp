#pragma once

// Command implementations behind the covlab executable. Everything here takes
// explicit streams so the commands can be driven in-process by tests.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "covlab/risk.hpp"

namespace covlab::app {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitRuntime = 3,
  kExitVerify = 4,
};

/// One (scenario, n, loss, estimator) combination; becomes one CSV row.
struct Cell {
  std::string scenario_id;
  std::string truth_kind;
  Scenario scenario;
};

struct Config {
  int format_version = 1;
  std::string output_path;
  std::size_t threads = 1;
  std::vector<Cell> cells;
};

/// Evaluates an n rule such as "p^2", "ceil(p^1.5)" or "50*p" at the given p.
/// Supports + - * / ^, parentheses, p, and ceil/floor/round/sqrt.
double eval_n_expression(const std::string& expr, double p);

/// ConfigError with the JSON pointer (and source line when text is given) of
/// the offending value. Every cell is checked with validate_scenario.
Config parse_config(const nlohmann::json& doc, const std::string& source_name = "config",
                    const std::string& source_text = {});
Config load_config(const std::string& path);

/// Line (1-based) of the value at a JSON pointer within valid JSON text; 0 if absent.
std::size_t json_pointer_line(const std::string& text, const std::string& pointer);

const std::vector<std::string>& csv_columns();
std::string csv_header();
std::string csv_escape(const std::string& field);
std::vector<std::string> csv_split(const std::string& line);

struct SimulateOptions {
  std::string config_path;
  std::optional<std::string> out_path;
  std::optional<std::size_t> threads;
  std::optional<std::uint64_t> seed;
};
int cmd_simulate(const SimulateOptions& options, std::ostream& out, std::ostream& err);

struct RatesOptions {
  std::string in_path;
  std::vector<std::string> group;
  std::optional<std::string> out_path;
};
int cmd_rates(const RatesOptions& options, std::ostream& out, std::ostream& err);

struct BoundsOptions {
  std::size_t p = 1;
  std::size_t n = 1;
  double tau1 = 0.5;
  double tau2 = 2.0;
  std::optional<double> c;    // spectral ε scale; default half the admissible maximum
  double c1 = 1.0 / 3.0;      // Assouad perturbation constant
  std::optional<double> tau;  // Frobenius class radius; defaults to tau2
};
int cmd_bounds(const BoundsOptions& options, std::ostream& out, std::ostream& err);

struct VerifyCommandOptions {
  std::string suite = "all";
  std::optional<std::string> report_path;
  std::optional<std::string> inject_fault;
};
int cmd_verify(const VerifyCommandOptions& options, std::ostream& out, std::ostream& err);

/// Full command-line entry point (argument parsing included).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace covlab::app
