#include "trackguard/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "trackguard/error.hpp"

namespace trackguard {

double ConfusionMatrix::accuracy() const {
  const long n = total();
  return n == 0 ? 0.0 : static_cast<double>(counts.trace()) / static_cast<double>(n);
}

double ConfusionMatrix::accuracy_excluding(Label excluded) const {
  long hits = 0;
  long n = 0;
  for (std::size_t r = 0; r < class_labels.size(); ++r) {
    if (class_labels[r] == excluded) continue;
    const auto i = static_cast<Eigen::Index>(r);
    hits += counts(i, i);
    n += counts.row(i).sum();
  }
  return n == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(n);
}

Eigen::MatrixXd ConfusionMatrix::normalized() const {
  Eigen::MatrixXd out = counts.cast<double>();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double sum = out.row(r).sum();
    if (sum > 0) {
      out.row(r) /= sum;
    } else {
      out.row(r).setConstant(std::numeric_limits<double>::quiet_NaN());
    }
  }
  return out;
}

ConfusionMatrix confusion_matrix(const std::vector<Label>& class_labels,
                                 const std::vector<Label>& truth,
                                 const std::vector<Label>& predicted) {
  if (truth.size() != predicted.size()) throw DomainError("truth and predictions differ in length");
  ConfusionMatrix cm;
  cm.class_labels = class_labels;
  const auto k = static_cast<Eigen::Index>(class_labels.size());
  cm.counts.setZero(k, k);
  auto index = [&](Label label) {
    for (std::size_t i = 0; i < class_labels.size(); ++i) {
      if (class_labels[i] == label) return static_cast<Eigen::Index>(i);
    }
    throw DomainError("label " + label_name(label) + " is not an evaluated class");
  };
  for (std::size_t i = 0; i < truth.size(); ++i) ++cm.counts(index(truth[i]), index(predicted[i]));
  return cm;
}

ClassifierEvaluation evaluate_classifier(const ClassifierModel& model,
                                         const std::vector<PulseWindow>& windows) {
  if (windows.empty()) throw DomainError("test set is empty");
  const Eigen::MatrixXd probs = predict_proba(model, windows);
  std::vector<Label> truth, predicted;
  truth.reserve(windows.size());
  predicted.reserve(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    truth.push_back(windows[i].label);
    predicted.push_back(
        model.class_labels[static_cast<std::size_t>(argmax(probs.row(static_cast<Eigen::Index>(i))))]);
  }
  ClassifierEvaluation eval;
  eval.confusion = confusion_matrix(model.class_labels, truth, predicted);
  eval.accuracy = eval.confusion.accuracy();
  return eval;
}

namespace {

ChannelStats channel_stats(const Eigen::VectorXd& channel, std::size_t lead) {
  const auto head = channel.head(static_cast<Eigen::Index>(lead));
  ChannelStats s;
  s.mean = head.mean();
  s.sigma = std::sqrt((head.array() - s.mean).square().mean());
  return s;
}

}  // namespace

NominalStats nominal_stats(const SignalRecord& record, std::optional<std::size_t> lead) {
  std::size_t n = 0;
  if (lead) {
    n = *lead;
  } else if (record.phases) {
    n = record.phases->onset_index;
  } else {
    throw ConfigError("nominal record needs an explicit nominal lead length");
  }
  if (n < kMinNominalLead) {
    throw ConfigError("nominal lead of " + std::to_string(n) + " samples is shorter than " +
                      std::to_string(kMinNominalLead));
  }
  if (n > static_cast<std::size_t>(record.size())) throw DomainError("nominal lead exceeds record");
  return {channel_stats(record.cat, n), channel_stats(record.cal, n)};
}

std::optional<std::size_t> first_run(const std::vector<bool>& flags, std::size_t m) {
  if (m == 0) throw DomainError("persistence count m must be >= 1");
  std::size_t run = 0;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    run = flags[i] ? run + 1 : 0;
    if (run == m) return i + 1 - m;
  }
  return std::nullopt;
}

std::optional<std::size_t> threshold_baseline_detect(const SignalRecord& record,
                                                     const NominalStats& stats, double k,
                                                     std::size_t m,
                                                     const PreprocessConfig& windowing) {
  const auto windows = slide_windows(record, windowing);
  std::vector<bool> outside;
  outside.reserve(windows.size());
  for (const auto& w : windows) {
    const bool cat = std::abs(w.cat.mean() - stats.cat.mean) > k * stats.cat.sigma;
    const bool cal = std::abs(w.cal.mean() - stats.cal.mean) > k * stats.cal.sigma;
    outside.push_back(cat || cal);
  }
  const auto start = first_run(outside, m);
  if (!start) return std::nullopt;
  return windows[*start].center_index();
}

std::optional<std::size_t> model_first_detection(const ClassifierModel& model,
                                                 const CalibrationResult& calib,
                                                 const SignalRecord& record, std::size_t m,
                                                 const PreprocessConfig& preprocess,
                                                 DetectionMode mode) {
  if (!record.phases) return std::nullopt;
  const auto target = model.index_of(record.label);
  if (target < 0) throw DomainError("model was not trained on class " + label_name(record.label));
  const auto& ph = *record.phases;

  std::vector<PulseWindow> scanned;
  for (auto& w : preprocess_record(record, preprocess)) {
    const auto c = w.center_index();
    if (c >= ph.onset_index && c < ph.critical_index) scanned.push_back(std::move(w));
  }
  if (scanned.empty()) return std::nullopt;
  const Eigen::MatrixXd probs = predict_proba(model, scanned);
  std::vector<bool> hit;
  hit.reserve(scanned.size());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    if (mode == DetectionMode::Argmax) {
      hit.push_back(argmax(probs.row(i)) == target);
    } else {
      const auto set = predict_set(probs.row(i).transpose(), calib);
      hit.push_back(set.size() == 1 && set.labels.front() == target);
    }
  }
  const auto start = first_run(hit, m);
  if (!start) return std::nullopt;
  return scanned[*start].center_index();
}

std::optional<double> earliness_percent(std::optional<std::size_t> detection, std::size_t onset,
                                        std::size_t critical) {
  if (onset >= critical) throw DomainError("onset must precede critical");
  if (!detection || *detection < onset || *detection >= critical) return std::nullopt;
  return 100.0 * static_cast<double>(*detection - onset) / static_cast<double>(critical - onset);
}

std::map<std::string, std::map<Label, double>> EarlinessReport::summary() const {
  std::map<std::string, std::map<Label, std::pair<double, std::size_t>>> acc;
  for (const auto& r : rows) {
    auto& slot = acc[r.method][r.label];
    slot.first += r.earliness.value_or(100.0);
    ++slot.second;
  }
  std::map<std::string, std::map<Label, double>> out;
  for (const auto& [method, per_class] : acc) {
    for (const auto& [label, sum_n] : per_class) {
      out[method][label] = sum_n.first / static_cast<double>(sum_n.second);
    }
  }
  return out;
}

double EarlinessReport::mean(const std::string& method, const std::vector<Label>& classes) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.method != method) continue;
    if (!classes.empty() && std::find(classes.begin(), classes.end(), r.label) == classes.end()) {
      continue;
    }
    sum += r.earliness.value_or(100.0);
    ++n;
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(n);
}

bool is_progressive(EnvelopeKind kind) {
  return kind == EnvelopeKind::ProgressiveLinear || kind == EnvelopeKind::ProgressiveExponential;
}

void write_confusion_csv(const ConfusionMatrix& cm, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "true\\predicted";
  for (const auto l : cm.class_labels) out << ',' << label_name(l);
  out << '\n';
  for (Eigen::Index r = 0; r < cm.counts.rows(); ++r) {
    out << label_name(cm.class_labels[static_cast<std::size_t>(r)]);
    for (Eigen::Index c = 0; c < cm.counts.cols(); ++c) out << ',' << cm.counts(r, c);
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

void write_normalized_csv(const ConfusionMatrix& cm, const std::filesystem::path& path) {
  const Eigen::MatrixXd norm = cm.normalized();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "true\\predicted";
  for (const auto l : cm.class_labels) out << ',' << label_name(l);
  out << '\n';
  for (Eigen::Index r = 0; r < norm.rows(); ++r) {
    out << label_name(cm.class_labels[static_cast<std::size_t>(r)]);
    for (Eigen::Index c = 0; c < norm.cols(); ++c) {
      out << ',';
      if (!std::isnan(norm(r, c))) out << format_double(norm(r, c));
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

void write_earliness_csv(const EarlinessReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "record_id,class,method,first_detection_index,earliness_percent\n";
  for (const auto& r : report.rows) {
    out << r.record_id << ',' << label_name(r.label) << ',' << r.method << ',';
    if (r.first_detection) out << *r.first_detection;
    out << ',';
    if (r.earliness) out << format_double(*r.earliness);
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace trackguard
