#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "trackguard/classifier.hpp"
#include "trackguard/conformal.hpp"
#include "trackguard/preprocess.hpp"
#include "trackguard/signalgen.hpp"

namespace trackguard {

// Rows are true classes, columns predicted classes, both in class_labels order.
struct ConfusionMatrix {
  std::vector<Label> class_labels;
  Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic> counts;

  long total() const { return counts.sum(); }
  double accuracy() const;
  // Accuracy over rows whose class is not `excluded` (predictions may still
  // land in the excluded column).
  double accuracy_excluding(Label excluded) const;
  // Each row divided by its sum; rows without examples are NaN.
  Eigen::MatrixXd normalized() const;
};

ConfusionMatrix confusion_matrix(const std::vector<Label>& class_labels,
                                 const std::vector<Label>& truth,
                                 const std::vector<Label>& predicted);

struct ClassifierEvaluation {
  ConfusionMatrix confusion;
  double accuracy = 0.0;
};

ClassifierEvaluation evaluate_classifier(const ClassifierModel& model,
                                         const std::vector<PulseWindow>& windows);

struct ChannelStats {
  double mean = 0.0;
  double sigma = 0.0;
};

struct NominalStats {
  ChannelStats cat;
  ChannelStats cal;
};

inline constexpr std::size_t kMinNominalLead = 30;

// Mean and population sigma of each channel over the first `lead` samples.
// When `lead` is empty the record's onset index is used (anomaly records).
NominalStats nominal_stats(const SignalRecord& record, std::optional<std::size_t> lead = {});

// Conventional detector: first window (preprocess windowing, raw samples)
// whose mean on either channel leaves nominal mean +- k*sigma for m
// consecutive windows. Returns that run's first window center.
std::optional<std::size_t> threshold_baseline_detect(const SignalRecord& record,
                                                     const NominalStats& stats, double k,
                                                     std::size_t m,
                                                     const PreprocessConfig& windowing);

enum class DetectionMode {
  ConformalSingleton,  // set must be exactly {true class}
  Argmax,              // top-1 prediction must be the true class
};

// First run of m consecutive windows, centered in [onset, critical), that
// identify the record's class. Returns the run's first window center.
std::optional<std::size_t> model_first_detection(const ClassifierModel& model,
                                                 const CalibrationResult& calib,
                                                 const SignalRecord& record, std::size_t m,
                                                 const PreprocessConfig& preprocess,
                                                 DetectionMode mode = DetectionMode::ConformalSingleton);

// Run-start search shared by both detectors: index of the first element of
// the first run of m consecutive true flags.
std::optional<std::size_t> first_run(const std::vector<bool>& flags, std::size_t m);

// 100 * (detection - onset) / (critical - onset), empty when the detection
// is missing or falls outside [onset, critical).
std::optional<double> earliness_percent(std::optional<std::size_t> detection, std::size_t onset,
                                        std::size_t critical);

struct EarlinessRow {
  std::string record_id;
  Label label = kNominal;
  std::string method;  // "model" | "threshold"
  std::optional<std::size_t> first_detection;
  std::optional<double> earliness;
};

struct EarlinessReport {
  std::vector<EarlinessRow> rows;

  // Mean earliness per (method, class); records without a detection before
  // critical count as 100%.
  std::map<std::string, std::map<Label, double>> summary() const;
  // Mean over every row of `method` whose class is in `classes` (all when
  // empty), with the same 100% rule.
  double mean(const std::string& method, const std::vector<Label>& classes = {}) const;
};

bool is_progressive(EnvelopeKind kind);

void write_confusion_csv(const ConfusionMatrix& cm, const std::filesystem::path& path);
void write_normalized_csv(const ConfusionMatrix& cm, const std::filesystem::path& path);
void write_earliness_csv(const EarlinessReport& report, const std::filesystem::path& path);

}  // namespace trackguard
