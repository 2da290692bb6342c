#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace trackguard {

// Split conformal prediction over class probabilities, using the
// "one_minus_true_prob" conformity score. Classes are addressed by their
// column in the probability matrix.

struct CalibrationResult {
  double q_hat = 1.0;
  double alpha = 0.1;
  std::size_t n_cal = 0;
  std::string score_method = "one_minus_true_prob";
  // Set when ceil((n+1)(1-alpha)) > n, in which case q_hat is pinned to 1.
  bool saturated = false;

  bool operator==(const CalibrationResult&) const = default;
};

struct PredictionSet {
  std::vector<Eigen::Index> labels;  // ascending; empty means "unknown"
  Eigen::VectorXd probs;
  double q_hat_used = 1.0;

  bool empty() const { return labels.empty(); }
  bool contains(Eigen::Index label) const;
  std::size_t size() const { return labels.size(); }
};

// 1 - p(true label) for every row of `probs`.
Eigen::VectorXd conformity_scores(const Eigen::MatrixXd& probs,
                                  const std::vector<Eigen::Index>& labels);

// Order statistic rank ceil((n+1)(1-alpha)) used by calibrate (may exceed n).
std::size_t quantile_rank(std::size_t n, double alpha);

CalibrationResult calibrate(const Eigen::VectorXd& scores, double alpha);

PredictionSet predict_set(const Eigen::VectorXd& probs, const CalibrationResult& calib);
std::vector<PredictionSet> predict_sets(const Eigen::MatrixXd& probs,
                                        const CalibrationResult& calib);

double marginal_coverage(const std::vector<PredictionSet>& sets,
                         const std::vector<Eigen::Index>& true_labels);

struct ClassCoverage {
  std::optional<double> coverage;  // undefined when the class has no examples
  std::size_t n = 0;
};

std::vector<ClassCoverage> class_conditional_coverage(const std::vector<PredictionSet>& sets,
                                                      const std::vector<Eigen::Index>& true_labels,
                                                      Eigen::Index num_classes);

double average_set_size(const std::vector<PredictionSet>& sets);
double empty_set_rate(const std::vector<PredictionSet>& sets);

void save_calibration(const CalibrationResult& calib, const std::filesystem::path& path);
CalibrationResult load_calibration(const std::filesystem::path& path);

// class,coverage,n rows followed by "marginal" and "average_set_size"
// summary rows. `class_names[i]` names column i.
void write_coverage_csv(const std::vector<ClassCoverage>& per_class,
                        const std::vector<std::string>& class_names, double marginal,
                        double avg_size, std::size_t n_total, const std::filesystem::path& path);

}  // namespace trackguard
