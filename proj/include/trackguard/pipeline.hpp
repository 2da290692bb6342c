#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "trackguard/classifier.hpp"
#include "trackguard/config.hpp"
#include "trackguard/conformal.hpp"
#include "trackguard/evaluation.hpp"
#include "trackguard/signalgen.hpp"

namespace trackguard {

enum class SplitRole { Train, Calibration, Test, Holdout };

struct RecordAssignment {
  ManifestEntry entry;
  SplitRole role = SplitRole::Train;
};

// Stratified, seeded, record-level split: every label's records are
// shuffled and cut by the train/calibration/test fractions, so that windows
// of one record never straddle two splits. Holdout entries keep their role.
std::vector<RecordAssignment> split_records(const DatasetManifest& manifest,
                                            const SplitFractions& fractions, std::uint64_t seed);

std::vector<ManifestEntry> entries_with_role(const std::vector<RecordAssignment>& split,
                                             SplitRole role);

// Preprocessed windows of every entry, ordered by (source_id, start_index).
std::vector<PulseWindow> load_windows(const std::vector<ManifestEntry>& entries,
                                      const std::filesystem::path& data_dir,
                                      const PreprocessConfig& preprocess);

// Output-index targets of `windows` under `model`.
std::vector<Eigen::Index> targets_of(const ClassifierModel& model,
                                     const std::vector<PulseWindow>& windows);

struct ReportBundle {
  ClassifierEvaluation classifier;
  double anomaly_accuracy = 0.0;
  double min_anomaly_diagonal = 0.0;
  CalibrationResult calibration;
  std::vector<ClassCoverage> coverage;
  double marginal_coverage = 0.0;
  double average_set_size = 0.0;
  double in_distribution_empty_rate = 0.0;
  std::size_t holdout_windows = 0;
  double holdout_empty_rate = 0.0;
  EarlinessReport earliness;
  double model_earliness_progressive = 0.0;
  double threshold_earliness_progressive = 0.0;
  std::size_t dominance_checked = 0;
  std::size_t dominance_violations = 0;
  std::string summary_text;
};

// Evaluates the test split and held-out records and writes confusion.csv,
// confusion_normalized.csv, coverage.csv, earliness.csv and summary.txt
// into `report_dir`.
ReportBundle run_report(const DatasetManifest& manifest, const ClassifierModel& model,
                        const CalibrationResult& calib, const RunConfig& config,
                        const std::filesystem::path& report_dir);

std::filesystem::path cmd_generate(const RunConfig& config);
struct TrainOutputs {
  std::filesystem::path model_path;
  std::filesystem::path log_path;
};
TrainOutputs cmd_train(const RunConfig& config);
std::filesystem::path cmd_calibrate(const RunConfig& config);
ReportBundle cmd_evaluate(const RunConfig& config);

struct PredictSummary {
  std::size_t windows = 0;
  std::size_t empty_sets = 0;
  std::size_t singleton_nominal = 0;
  std::size_t singletons = 0;
};

// One line per window: start_index,prediction_set,probabilities, where the
// set lists class names separated by ';' and probabilities follow the
// model's class order. '#' lines carry the class order and a summary.
PredictSummary cmd_predict(const RunConfig& config, const std::filesystem::path& csv_path,
                           std::ostream& out);

}  // namespace trackguard
