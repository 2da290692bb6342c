// trackguard <generate|train|calibrate|evaluate|predict> --config <path> [--seed N] [--verbose]

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "trackguard/config.hpp"
#include "trackguard/error.hpp"
#include "trackguard/pipeline.hpp"

namespace {

enum ExitCode : int {
  kOk = 0,
  kUnexpected = 1,
  kConfigError = 2,
  kIoError = 3,
  kValidationError = 4,
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Track-circuit anomaly classification with conformal prediction sets"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool verbose = false;
  std::string csv_path;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Run configuration (JSON)")->required();
    cmd->add_option("--seed", seed, "Override the global seed");
    cmd->add_flag("--verbose", verbose, "Print the effective configuration to stderr");
  };
  auto* generate = app.add_subcommand("generate", "Synthesize the labeled signal dataset");
  auto* train = app.add_subcommand("train", "Train the window classifier");
  auto* calibrate = app.add_subcommand("calibrate", "Fit the conformal threshold");
  auto* evaluate = app.add_subcommand("evaluate", "Write the evaluation report bundle");
  auto* predict = app.add_subcommand("predict", "Prediction sets for every window of one CSV");
  for (auto* cmd : {generate, train, calibrate, evaluate, predict}) add_common(cmd);
  predict->add_option("csv", csv_path, "Signal CSV to classify")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    auto config = trackguard::load_config(config_path);
    if (seed) config.set_seed(*seed);
    if (verbose) std::cerr << trackguard::serialize_config(config);

    if (generate->parsed()) {
      std::cout << trackguard::cmd_generate(config).string() << '\n';
    } else if (train->parsed()) {
      const auto out = trackguard::cmd_train(config);
      std::cout << out.model_path.string() << '\n' << out.log_path.string() << '\n';
    } else if (calibrate->parsed()) {
      std::cout << trackguard::cmd_calibrate(config).string() << '\n';
    } else if (evaluate->parsed()) {
      std::cout << trackguard::cmd_evaluate(config).summary_text;
    } else if (predict->parsed()) {
      trackguard::cmd_predict(config, csv_path, std::cout);
    }
  } catch (const trackguard::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const trackguard::IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIoError;
  } catch (const trackguard::ParseError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return kValidationError;
  } catch (const trackguard::VersionError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return kValidationError;
  } catch (const trackguard::DomainError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return kValidationError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUnexpected;
  }
  return kOk;
}
