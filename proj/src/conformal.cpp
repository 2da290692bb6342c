#include "trackguard/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "trackguard/error.hpp"
#include "trackguard/signalgen.hpp"

namespace trackguard {

bool PredictionSet::contains(Eigen::Index label) const {
  return std::binary_search(labels.begin(), labels.end(), label);
}

Eigen::VectorXd conformity_scores(const Eigen::MatrixXd& probs,
                                  const std::vector<Eigen::Index>& labels) {
  if (static_cast<std::size_t>(probs.rows()) != labels.size()) {
    throw DomainError("probability rows and label count differ");
  }
  Eigen::VectorXd scores(probs.rows());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const auto y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= probs.cols()) {
      throw DomainError("label " + std::to_string(y) + " out of range");
    }
    scores[i] = std::clamp(1.0 - probs(i, y), 0.0, 1.0);
  }
  return scores;
}

std::size_t quantile_rank(std::size_t n, double alpha) {
  const double level = static_cast<double>(n + 1) * (1.0 - alpha);
  // absorb representation error in (1 - alpha) so exact products stay exact
  const double k = std::ceil(level - 1e-9 * static_cast<double>(n + 1));
  return static_cast<std::size_t>(std::max(1.0, k));
}

CalibrationResult calibrate(const Eigen::VectorXd& scores, double alpha) {
  if (scores.size() == 0) throw DomainError("calibration needs at least one score");
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0, 1)");
  if ((scores.array() < 0.0).any() || (scores.array() > 1.0).any() || !scores.allFinite()) {
    throw DomainError("scores must lie in [0, 1]");
  }
  CalibrationResult result;
  result.alpha = alpha;
  result.n_cal = static_cast<std::size_t>(scores.size());
  const std::size_t k = quantile_rank(result.n_cal, alpha);
  if (k > result.n_cal) {
    result.q_hat = 1.0;
    result.saturated = true;
    return result;
  }
  std::vector<double> s(scores.data(), scores.data() + scores.size());
  const auto kth = s.begin() + static_cast<std::ptrdiff_t>(k - 1);
  std::nth_element(s.begin(), kth, s.end());
  result.q_hat = *kth;
  return result;
}

PredictionSet predict_set(const Eigen::VectorXd& probs, const CalibrationResult& calib) {
  PredictionSet set;
  set.probs = probs;
  set.q_hat_used = calib.q_hat;
  const double threshold = 1.0 - calib.q_hat;
  for (Eigen::Index y = 0; y < probs.size(); ++y) {
    if (calib.q_hat >= 1.0 || probs[y] >= threshold) set.labels.push_back(y);
  }
  return set;
}

std::vector<PredictionSet> predict_sets(const Eigen::MatrixXd& probs,
                                        const CalibrationResult& calib) {
  std::vector<PredictionSet> sets;
  sets.reserve(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    sets.push_back(predict_set(probs.row(i).transpose(), calib));
  }
  return sets;
}

double marginal_coverage(const std::vector<PredictionSet>& sets,
                         const std::vector<Eigen::Index>& true_labels) {
  if (sets.size() != true_labels.size()) throw DomainError("sets and labels differ in length");
  if (sets.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) hits += sets[i].contains(true_labels[i]);
  return static_cast<double>(hits) / static_cast<double>(sets.size());
}

std::vector<ClassCoverage> class_conditional_coverage(const std::vector<PredictionSet>& sets,
                                                      const std::vector<Eigen::Index>& true_labels,
                                                      Eigen::Index num_classes) {
  if (sets.size() != true_labels.size()) throw DomainError("sets and labels differ in length");
  std::vector<std::size_t> hits(static_cast<std::size_t>(num_classes), 0);
  std::vector<ClassCoverage> out(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const auto y = true_labels[i];
    if (y < 0 || y >= num_classes) throw DomainError("label out of range");
    ++out[static_cast<std::size_t>(y)].n;
    hits[static_cast<std::size_t>(y)] += sets[i].contains(y);
  }
  for (std::size_t c = 0; c < out.size(); ++c) {
    if (out[c].n > 0) {
      out[c].coverage = static_cast<double>(hits[c]) / static_cast<double>(out[c].n);
    }
  }
  return out;
}

double average_set_size(const std::vector<PredictionSet>& sets) {
  if (sets.empty()) return 0.0;
  std::size_t total = 0;
  for (const auto& s : sets) total += s.size();
  return static_cast<double>(total) / static_cast<double>(sets.size());
}

double empty_set_rate(const std::vector<PredictionSet>& sets) {
  if (sets.empty()) return 0.0;
  const auto empties = std::count_if(sets.begin(), sets.end(), [](const auto& s) { return s.empty(); });
  return static_cast<double>(empties) / static_cast<double>(sets.size());
}

void save_calibration(const CalibrationResult& calib, const std::filesystem::path& path) {
  nlohmann::ordered_json doc;
  doc["format"] = "trackguard-calibration v1";
  doc["alpha"] = calib.alpha;
  doc["n_cal"] = calib.n_cal;
  doc["q_hat"] = calib.q_hat;
  doc["score_method"] = calib.score_method;
  doc["saturated"] = calib.saturated;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write calibration " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("failed writing calibration " + path.string());
}

CalibrationResult load_calibration(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open calibration " + path.string());
  const std::string where = path.string();
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(where, 0, std::string("corrupt calibration file: ") + ex.what());
  }
  auto get = [&](const char* name) -> const nlohmann::json& {
    if (!doc.is_object() || !doc.contains(name)) {
      throw ParseError(where, 0, std::string("missing field '") + name + "'");
    }
    return doc.at(name);
  };
  CalibrationResult calib;
  try {
    if (get("format").get<std::string>() != "trackguard-calibration v1") {
      throw VersionError(where + ": unsupported calibration format");
    }
    calib.alpha = get("alpha").get<double>();
    calib.n_cal = get("n_cal").get<std::size_t>();
    calib.q_hat = get("q_hat").get<double>();
    calib.score_method = get("score_method").get<std::string>();
    calib.saturated = get("saturated").get<bool>();
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(where, 0, ex.what());
  }
  if (calib.score_method != "one_minus_true_prob") {
    throw ParseError(where, 0, "unsupported score_method " + calib.score_method);
  }
  if (!(calib.q_hat >= 0.0 && calib.q_hat <= 1.0) || !(calib.alpha > 0.0 && calib.alpha < 1.0)) {
    throw ParseError(where, 0, "q_hat or alpha out of range");
  }
  return calib;
}

void write_coverage_csv(const std::vector<ClassCoverage>& per_class,
                        const std::vector<std::string>& class_names, double marginal,
                        double avg_size, std::size_t n_total, const std::filesystem::path& path) {
  if (per_class.size() != class_names.size()) throw DomainError("class names do not match");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "class,coverage,n\n";
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    out << class_names[c] << ',';
    if (per_class[c].coverage) out << format_double(*per_class[c].coverage);
    out << ',' << per_class[c].n << '\n';
  }
  out << "marginal," << format_double(marginal) << ',' << n_total << '\n';
  out << "average_set_size," << format_double(avg_size) << ',' << n_total << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace trackguard
