// eventium: command-line driver.
//
// Exit codes: 0 success, 1 other failure, 2 invalid input, 3 size budget
// exceeded, 4 oracle mismatch.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "eventium/report.hpp"
#include "eventium/scenario.hpp"

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitValidation = 2;
constexpr int kExitBudget = 3;
constexpr int kExitOracle = 4;

struct Options {
  std::string config;
  std::string out;
  std::string format;
  bool oracle = false;
  std::optional<double> tolerance;
  std::optional<unsigned long long> seed;  // reserved; every computation is deterministic
};

int run(const std::string& command, const Options& opt) {
  eventium::ScenarioConfig cfg = eventium::load_scenario(opt.config);
  const std::string format = opt.format.empty() ? cfg.output_format : opt.format;
  const std::string out_path = opt.out.empty() ? cfg.output_path : opt.out;
  eventium::RunResult res = eventium::run_scenario(cfg, command, format, opt.oracle, opt.tolerance);

  for (const auto& w : res.report.warnings) std::cerr << "warning: " << w << "\n";
  if (out_path.empty() || out_path == "-") {
    std::cout << res.payload;
  } else {
    std::ofstream f(out_path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + out_path + "'");
    f << res.payload;
    std::cout << eventium::summarize(res);
  }
  if (res.oracle_mismatch) {
    std::cerr << "error: oracle deviation " << *res.report.oracle_deviation << " exceeds tolerance " << res.report.oracle_tolerance
              << "\n";
    return kExitOracle;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"eventium: event probabilities on a relational clock"};
  app.require_subcommand(1);
  Options opt;
  for (const auto& name : eventium::subcommands()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", opt.config, "Scenario file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out, "Output file ('-' for stdout)");
    sub->add_option("--format", opt.format, "csv or structured")->check(CLI::IsMember({"csv", "structured"}));
    sub->add_flag("--oracle", opt.oracle, "Also run the microscopic oracle");
    sub->add_option("--tolerance", opt.tolerance, "Oracle tolerance")->check(CLI::PositiveNumber);
    sub->add_option("--seed", opt.seed, "Reserved");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run(command, opt);
  } catch (const eventium::BudgetError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBudget;
  } catch (const eventium::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const eventium::OracleError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOracle;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}
