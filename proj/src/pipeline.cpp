#include "trackguard/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include "trackguard/error.hpp"

namespace trackguard {

namespace fs = std::filesystem;

namespace {

// Salts for the streams derived from the global seed.
constexpr Label kSplitStream = 101;
constexpr Label kHoldoutStream = 103;

fs::path manifest_path(const RunConfig& config) {
  return config.resolve(config.paths.data_dir) / "manifest.json";
}

fs::path training_log_path(const fs::path& model_path) {
  return model_path.parent_path() / (model_path.stem().string() + "_training_log.csv");
}

void ensure_parent(const fs::path& path) {
  if (!path.has_parent_path()) return;
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create directory " + path.parent_path().string());
}

// Exclusive lock file inside a directory for the lifetime of the object.
class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& dir) : path_(dir / ".trackguard.lock") {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string());
    FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) throw IoError("output directory is locked by another run: " + path_.string());
    std::fclose(f);
  }
  ~DirectoryLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  fs::path path_;
};

std::vector<Label> model_classes(const DatasetManifest& manifest) {
  std::vector<Label> labels;
  for (const auto& e : manifest.records) {
    if (!e.holdout) labels.push_back(e.label);
  }
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  return labels;
}

}  // namespace

std::vector<RecordAssignment> split_records(const DatasetManifest& manifest,
                                            const SplitFractions& fractions, std::uint64_t seed) {
  std::map<Label, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    if (!manifest.records[i].holdout) by_label[manifest.records[i].label].push_back(i);
  }
  std::vector<RecordAssignment> out(manifest.records.size());
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    out[i].entry = manifest.records[i];
    out[i].role = manifest.records[i].holdout ? SplitRole::Holdout : SplitRole::Train;
  }
  std::mt19937_64 rng(record_seed(seed, kSplitStream, 0));
  for (auto& [label, idx] : by_label) {
    for (std::size_t i = idx.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(idx[i - 1], idx[pick(rng)]);
    }
    const std::size_t n = idx.size();
    auto n_cal = static_cast<std::size_t>(std::llround(static_cast<double>(n) * fractions.calibration));
    auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * fractions.test));
    if (n >= 3) {
      n_cal = std::max<std::size_t>(n_cal, 1);
      n_test = std::max<std::size_t>(n_test, 1);
    }
    while (n_cal + n_test >= n && n_cal + n_test > 0) {
      (n_cal >= n_test ? n_cal : n_test) -= 1;
    }
    for (std::size_t j = 0; j < n; ++j) {
      auto& role = out[idx[j]].role;
      if (j < n_cal) {
        role = SplitRole::Calibration;
      } else if (j < n_cal + n_test) {
        role = SplitRole::Test;
      } else {
        role = SplitRole::Train;
      }
    }
  }
  return out;
}

std::vector<ManifestEntry> entries_with_role(const std::vector<RecordAssignment>& split,
                                             SplitRole role) {
  std::vector<ManifestEntry> entries;
  for (const auto& a : split) {
    if (a.role == role) entries.push_back(a.entry);
  }
  return entries;
}

std::vector<PulseWindow> load_windows(const std::vector<ManifestEntry>& entries,
                                      const fs::path& data_dir, const PreprocessConfig& preprocess) {
  auto sorted = entries;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.id() < b.id(); });
  std::vector<PulseWindow> windows;
  for (const auto& e : sorted) {
    const auto record = read_csv(data_dir / e.path);
    auto w = preprocess_record(record, preprocess, e.id());
    windows.insert(windows.end(), std::make_move_iterator(w.begin()),
                   std::make_move_iterator(w.end()));
  }
  return windows;
}

std::vector<Eigen::Index> targets_of(const ClassifierModel& model,
                                     const std::vector<PulseWindow>& windows) {
  std::vector<Eigen::Index> targets;
  targets.reserve(windows.size());
  for (const auto& w : windows) {
    const auto idx = model.index_of(w.label);
    if (idx < 0) throw DomainError("label " + label_name(w.label) + " is not a model class");
    targets.push_back(idx);
  }
  return targets;
}

fs::path cmd_generate(const RunConfig& config) {
  config.validate();
  const fs::path data_dir = config.resolve(config.paths.data_dir);
  DirectoryLock lock(data_dir);
  DatasetManifest manifest = generate_nominal_records(config.generator, config.dataset.nominal_records,
                                                      config.seed, data_dir);
  const auto anomalies = generate_dataset(config.generator, default_classes(),
                                          config.dataset.records_per_class, config.seed, data_dir);
  manifest.records.insert(manifest.records.end(), anomalies.records.begin(),
                          anomalies.records.end());
  if (config.dataset.holdout_records > 0) {
    auto held = generate_dataset(config.generator, {anomaly_class(kHeldOutClass)},
                                 config.dataset.holdout_records,
                                 record_seed(config.seed, kHoldoutStream, 0), data_dir);
    for (auto& e : held.records) {
      e.holdout = true;
      manifest.records.push_back(std::move(e));
    }
  }
  const fs::path path = manifest_path(config);
  write_manifest(manifest, path);
  return path;
}

TrainOutputs cmd_train(const RunConfig& config) {
  config.validate();
  const fs::path data_dir = config.resolve(config.paths.data_dir);
  const auto manifest = read_manifest(manifest_path(config));
  const auto split = split_records(manifest, config.train.split, config.seed);
  const auto train_windows =
      load_windows(entries_with_role(split, SplitRole::Train), data_dir, config.preprocess);
  const auto holdout_windows =
      load_windows(entries_with_role(split, SplitRole::Calibration), data_dir, config.preprocess);

  const auto result = train(train_windows, model_classes(manifest), config.train, &holdout_windows);
  TrainOutputs out;
  out.model_path = config.resolve(config.paths.model_path);
  out.log_path = training_log_path(out.model_path);
  ensure_parent(out.model_path);
  save_model(result.model, out.model_path);
  write_training_log(result.log, out.log_path);
  return out;
}

fs::path cmd_calibrate(const RunConfig& config) {
  config.validate();
  const fs::path data_dir = config.resolve(config.paths.data_dir);
  const auto manifest = read_manifest(manifest_path(config));
  const auto model = load_model(config.resolve(config.paths.model_path));
  const auto split = split_records(manifest, config.train.split, config.seed);
  const auto windows =
      load_windows(entries_with_role(split, SplitRole::Calibration), data_dir, config.preprocess);
  if (windows.empty()) throw ConfigError("calibration split is empty");
  const auto scores = conformity_scores(predict_proba(model, windows), targets_of(model, windows));
  const auto calib = calibrate(scores, config.conformal.alpha);
  const fs::path path = config.resolve(config.paths.calib_path);
  ensure_parent(path);
  save_calibration(calib, path);
  return path;
}

ReportBundle run_report(const DatasetManifest& manifest, const ClassifierModel& model,
                        const CalibrationResult& calib, const RunConfig& config,
                        const fs::path& report_dir) {
  const fs::path data_dir = config.resolve(config.paths.data_dir);
  const auto split = split_records(manifest, config.train.split, config.seed);
  const auto test_entries = entries_with_role(split, SplitRole::Test);
  const auto test_windows = load_windows(test_entries, data_dir, config.preprocess);
  if (test_windows.empty()) throw ConfigError("test split is empty");

  ReportBundle bundle;
  bundle.calibration = calib;
  bundle.classifier = evaluate_classifier(model, test_windows);
  bundle.anomaly_accuracy = bundle.classifier.confusion.accuracy_excluding(kNominal);
  const Eigen::MatrixXd norm = bundle.classifier.confusion.normalized();
  bundle.min_anomaly_diagonal = 1.0;
  for (std::size_t c = 0; c < model.class_labels.size(); ++c) {
    const auto i = static_cast<Eigen::Index>(c);
    if (model.class_labels[c] == kNominal || std::isnan(norm(i, i))) continue;
    bundle.min_anomaly_diagonal = std::min(bundle.min_anomaly_diagonal, norm(i, i));
  }

  const Eigen::MatrixXd probs = predict_proba(model, test_windows);
  const auto targets = targets_of(model, test_windows);
  const auto sets = predict_sets(probs, calib);
  bundle.coverage = class_conditional_coverage(sets, targets, model.num_classes());
  bundle.marginal_coverage = marginal_coverage(sets, targets);
  bundle.average_set_size = average_set_size(sets);
  bundle.in_distribution_empty_rate = empty_set_rate(sets);

  std::vector<PulseWindow> novel;
  for (auto& w : load_windows(entries_with_role(split, SplitRole::Holdout), data_dir,
                              config.preprocess)) {
    if (w.label != kNominal) novel.push_back(std::move(w));
  }
  bundle.holdout_windows = novel.size();
  if (!novel.empty()) bundle.holdout_empty_rate = empty_set_rate(predict_sets(predict_proba(model, novel), calib));

  auto sorted_entries = test_entries;
  std::sort(sorted_entries.begin(), sorted_entries.end(),
            [](const auto& a, const auto& b) { return a.id() < b.id(); });
  std::vector<Label> progressive;
  for (const auto& cls : anomaly_catalog()) {
    if (is_progressive(cls.envelope_kind)) progressive.push_back(cls.id);
  }
  for (const auto& e : sorted_entries) {
    if (e.label == kNominal || !e.phases) continue;
    const auto record = read_csv(data_dir / e.path);
    const auto& ph = *record.phases;
    const auto base = threshold_baseline_detect(record, nominal_stats(record), config.evaluation.k,
                                                config.evaluation.m, config.preprocess);
    const auto mine = model_first_detection(model, calib, record, config.evaluation.model_m,
                                            config.preprocess, config.evaluation.mode);
    const auto base_pct = earliness_percent(base, ph.onset_index, ph.critical_index);
    const auto mine_pct = earliness_percent(mine, ph.onset_index, ph.critical_index);
    bundle.earliness.rows.push_back({e.id(), e.label, "model", mine, mine_pct});
    bundle.earliness.rows.push_back({e.id(), e.label, "threshold", base, base_pct});
    if (base_pct && mine_pct) {
      ++bundle.dominance_checked;
      if (*mine_pct > *base_pct) ++bundle.dominance_violations;
    }
  }
  bundle.model_earliness_progressive = bundle.earliness.mean("model", progressive);
  bundle.threshold_earliness_progressive = bundle.earliness.mean("threshold", progressive);

  std::vector<std::string> names;
  for (const auto l : model.class_labels) names.push_back(label_name(l));
  double min_cov = 1.0;
  for (const auto& c : bundle.coverage) {
    if (c.coverage) min_cov = std::min(min_cov, *c.coverage);
  }

  std::ostringstream s;
  s << "trackguard evaluation summary v1\n";
  s << "test_windows=" << test_windows.size() << '\n';
  s << "accuracy=" << format_double(bundle.classifier.accuracy) << '\n';
  s << "anomaly_accuracy=" << format_double(bundle.anomaly_accuracy) << '\n';
  s << "min_anomaly_diagonal=" << format_double(bundle.min_anomaly_diagonal) << '\n';
  s << "alpha=" << format_double(calib.alpha) << '\n';
  s << "n_cal=" << calib.n_cal << '\n';
  s << "q_hat=" << format_double(calib.q_hat) << '\n';
  s << "marginal_coverage=" << format_double(bundle.marginal_coverage) << '\n';
  s << "min_class_coverage=" << format_double(min_cov) << '\n';
  s << "average_set_size=" << format_double(bundle.average_set_size) << '\n';
  s << "in_distribution_empty_rate=" << format_double(bundle.in_distribution_empty_rate) << '\n';
  s << "holdout_windows=" << bundle.holdout_windows << '\n';
  s << "holdout_empty_rate=" << format_double(bundle.holdout_empty_rate) << '\n';
  s << "model_earliness_progressive=" << format_double(bundle.model_earliness_progressive) << '\n';
  s << "threshold_earliness_progressive=" << format_double(bundle.threshold_earliness_progressive)
    << '\n';
  s << "dominance_checked=" << bundle.dominance_checked << '\n';
  s << "dominance_violations=" << bundle.dominance_violations << '\n';
  bundle.summary_text = s.str();

  write_confusion_csv(bundle.classifier.confusion, report_dir / "confusion.csv");
  write_normalized_csv(bundle.classifier.confusion, report_dir / "confusion_normalized.csv");
  write_coverage_csv(bundle.coverage, names, bundle.marginal_coverage, bundle.average_set_size,
                     sets.size(), report_dir / "coverage.csv");
  write_earliness_csv(bundle.earliness, report_dir / "earliness.csv");
  std::ofstream summary(report_dir / "summary.txt", std::ios::binary);
  if (!summary) throw IoError("cannot write " + (report_dir / "summary.txt").string());
  summary << bundle.summary_text;
  if (!summary) throw IoError("failed writing summary");
  return bundle;
}

ReportBundle cmd_evaluate(const RunConfig& config) {
  config.validate();
  const auto manifest = read_manifest(manifest_path(config));
  const auto model = load_model(config.resolve(config.paths.model_path));
  const auto calib = load_calibration(config.resolve(config.paths.calib_path));
  const fs::path report_dir = config.resolve(config.paths.report_dir);
  DirectoryLock lock(report_dir);
  return run_report(manifest, model, calib, config, report_dir);
}

PredictSummary cmd_predict(const RunConfig& config, const fs::path& csv_path, std::ostream& out) {
  config.validate();
  const auto model = load_model(config.resolve(config.paths.model_path));
  const auto calib = load_calibration(config.resolve(config.paths.calib_path));
  const auto record = read_csv(csv_path);
  const auto windows = preprocess_record(record, config.preprocess, csv_path.stem().string());
  const Eigen::MatrixXd probs = predict_proba(model, windows);

  out << "# classes=";
  for (std::size_t c = 0; c < model.class_labels.size(); ++c) {
    out << (c ? ";" : "") << label_name(model.class_labels[c]);
  }
  out << "\nstart_index,prediction_set,probabilities\n";

  PredictSummary summary;
  const auto nominal_idx = model.index_of(kNominal);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const auto set = predict_set(probs.row(row).transpose(), calib);
    ++summary.windows;
    if (set.empty()) ++summary.empty_sets;
    if (set.size() == 1) {
      ++summary.singletons;
      if (set.labels.front() == nominal_idx) ++summary.singleton_nominal;
    }
    out << windows[i].start_index << ',';
    for (std::size_t j = 0; j < set.labels.size(); ++j) {
      out << (j ? ";" : "") << label_name(model.class_labels[static_cast<std::size_t>(set.labels[j])]);
    }
    out << ',';
    for (Eigen::Index c = 0; c < probs.cols(); ++c) {
      out << (c ? ";" : "") << format_double(probs(row, c));
    }
    out << '\n';
  }
  const double n = summary.windows ? static_cast<double>(summary.windows) : 1.0;
  out << "# summary windows=" << summary.windows << " empty_sets=" << summary.empty_sets
      << " empty_fraction=" << format_double(static_cast<double>(summary.empty_sets) / n)
      << " singletons=" << summary.singletons
      << " singleton_nominal_fraction=" << format_double(static_cast<double>(summary.singleton_nominal) / n)
      << '\n';
  return summary;
}

}  // namespace trackguard
