#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "trackguard/classifier.hpp"
#include "trackguard/evaluation.hpp"
#include "trackguard/preprocess.hpp"
#include "trackguard/signalgen.hpp"

namespace trackguard {

struct DatasetConfig {
  std::size_t records_per_class = 30;
  std::size_t nominal_records = 30;
  // Records of the held-out class, kept out of training and calibration.
  std::size_t holdout_records = 2;

  bool operator==(const DatasetConfig&) const = default;
};

struct ConformalConfig {
  double alpha = 0.01;

  bool operator==(const ConformalConfig&) const = default;
};

struct EvaluationConfig {
  double k = 3.0;
  std::size_t m = 3;  // persistence for the threshold baseline
  std::size_t model_m = 3;
  DetectionMode mode = DetectionMode::ConformalSingleton;

  bool operator==(const EvaluationConfig&) const = default;
};

struct PathsConfig {
  std::string data_dir;
  std::string model_path;
  std::string calib_path;
  std::string report_dir;

  bool operator==(const PathsConfig&) const = default;
};

struct RunConfig {
  std::uint64_t seed = 0;
  GeneratorConfig generator;
  DatasetConfig dataset;
  PreprocessConfig preprocess;
  TrainConfig train;  // train.seed is derived from `seed`
  ConformalConfig conformal;
  EvaluationConfig evaluation;
  PathsConfig paths;
  // Directory relative paths resolve against (the config file's directory).
  std::filesystem::path base_dir;

  void validate() const;
  std::filesystem::path resolve(const std::string& path) const;
  // Applies `seed` to every seeded component.
  void set_seed(std::uint64_t value);

  bool operator==(const RunConfig& other) const;
};

// Parses the JSON config text. Unknown keys and wrong types raise
// ConfigError naming the key; `seed` and every `paths` entry are required,
// everything else falls back to defaults.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
// Every key, defaults included.
std::string serialize_config(const RunConfig& config);

}  // namespace trackguard
