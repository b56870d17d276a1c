#include "flowfilt/error.hpp"
#include "flowfilt/scenario.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

void print_failures(const flowfilt::ValidationError& e) {
  std::cerr << "validation failed:\n";
  for (const auto& f : e.failures()) std::cerr << "  - " << f << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic particle flow filter harness"};
  app.require_subcommand(1);

  std::string run_path;
  std::string out_dir;
  std::uint64_t seed_override = 0;
  bool quiet = false;
  auto* run_cmd = app.add_subcommand("run", "Run a scenario and write trace CSV + summary");
  run_cmd->add_option("config", run_path, "Scenario JSON")->required();
  auto* out_opt = run_cmd->add_option("--out-dir", out_dir, "Output directory");
  auto* seed_opt = run_cmd->add_option("--seed-override", seed_override, "Replace the scenario seed");
  run_cmd->add_flag("--quiet", quiet, "Do not print the summary");

  std::string validate_path;
  auto* validate_cmd = app.add_subcommand("validate", "Check a scenario without running it");
  validate_cmd->add_option("config", validate_path, "Scenario JSON")->required();

  auto* version_cmd = app.add_subcommand("version", "Print version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  if (version_cmd->parsed()) {
    std::cout << "flowfilt " << flowfilt::kVersion << "\n";
    return 0;
  }

  flowfilt::apply_thread_limit_from_env();
  try {
    if (validate_cmd->parsed()) {
      const auto cfg = flowfilt::load_scenario(validate_path);
      std::cout << cfg.name << ": ok\n";
      return 0;
    }
    auto cfg = flowfilt::load_scenario(run_path);
    if (*seed_opt) {
      cfg.seed = seed_override;
      cfg.integrator.seed = seed_override;
    }
    flowfilt::RunOptions options;
    if (*out_opt) options.out_dir = out_dir;
    options.quiet = quiet;
    const auto summary = flowfilt::run(cfg, options);
    if (!quiet) std::cout << flowfilt::summary_to_json(summary);
    if (!summary.ok) {
      std::cerr << "run failed: " << summary.error << "\n";
      return kExitNumerical;
    }
    return 0;
  } catch (const flowfilt::ValidationError& e) {
    print_failures(e);
    return kExitValidation;
  } catch (const flowfilt::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const flowfilt::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const flowfilt::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
}
