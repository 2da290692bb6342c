#include "trackguard/preprocess.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace trackguard {

void PreprocessConfig::validate() const {
  if (window_len == 0) throw ConfigError("preprocess.window_len must be positive");
  if (stride < 1 || stride > window_len) {
    throw ConfigError("preprocess.stride must lie in [1, window_len]");
  }
}

std::size_t window_count(std::size_t length, std::size_t window_len, std::size_t stride) {
  if (window_len == 0 || stride == 0 || length < window_len) return 0;
  return (length - window_len) / stride + 1;
}

namespace {

bool in_anomaly_span(std::size_t index, const AnomalyPhases& phases) {
  return index >= phases.onset_index && index < phases.critical_index;
}

}  // namespace

std::vector<PulseWindow> slide_windows(const SignalRecord& record, const PreprocessConfig& config,
                                       const std::string& source_id) {
  config.validate();
  const auto length = static_cast<std::size_t>(record.size());
  if (config.window_len > length) {
    throw DomainError("window_len " + std::to_string(config.window_len) +
                      " exceeds record length " + std::to_string(length));
  }
  const std::size_t count = window_count(length, config.window_len, config.stride);
  const auto len = static_cast<Eigen::Index>(config.window_len);

  std::vector<PulseWindow> windows;
  windows.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    PulseWindow window;
    window.start_index = w * config.stride;
    const auto start = static_cast<Eigen::Index>(window.start_index);
    window.cat = record.cat.segment(start, len);
    window.cal = record.cal.segment(start, len);
    window.source_id = source_id;

    if (record.phases) {
      const auto& ph = *record.phases;
      const std::size_t center = window.center_index();
      bool anomalous = false;
      if (config.label_rule == LabelRule::CenterPhase) {
        anomalous = in_anomaly_span(center, ph);
      } else {
        const std::size_t lo = std::max(window.start_index, ph.onset_index);
        const std::size_t hi = std::min(window.start_index + config.window_len, ph.critical_index);
        anomalous = hi > lo && 2 * (hi - lo) > config.window_len;
      }
      if (anomalous) {
        window.label = record.label;
        const double span = static_cast<double>(ph.critical_index - ph.onset_index);
        const double offset = static_cast<double>(center) - static_cast<double>(ph.onset_index);
        window.stage_fraction = std::clamp(offset / span, 0.0, 1.0);
      }
    }
    windows.push_back(std::move(window));
  }
  return windows;
}

PulseWindow normalize(const PulseWindow& window) {
  PulseWindow out = window;
  out.cat = standardize(window.cat);
  out.cal = standardize(window.cal);
  return out;
}

std::vector<PulseWindow> preprocess_record(const SignalRecord& record,
                                           const PreprocessConfig& config,
                                           const std::string& source_id) {
  SignalRecord smoothed = record;
  smoothed.cat = denoise(record.cat, config.smooth_radius);
  smoothed.cal = denoise(record.cal, config.smooth_radius);
  auto windows = slide_windows(smoothed, config, source_id);
  for (auto& w : windows) w = normalize(w);
  return windows;
}

Eigen::RowVectorXd flatten(const PulseWindow& window) {
  Eigen::RowVectorXd row(window.cat.size() + window.cal.size());
  row << window.cat.transpose(), window.cal.transpose();
  return row;
}

Eigen::MatrixXd stack_windows(const std::vector<PulseWindow>& windows) {
  if (windows.empty()) return {};
  const Eigen::Index dim = windows.front().cat.size() + windows.front().cal.size();
  Eigen::MatrixXd batch(static_cast<Eigen::Index>(windows.size()), dim);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (windows[i].cat.size() + windows[i].cal.size() != dim) {
      throw DomainError("windows of unequal length cannot be stacked");
    }
    batch.row(static_cast<Eigen::Index>(i)) = flatten(windows[i]);
  }
  return batch;
}

void write_windows_csv(const std::vector<PulseWindow>& windows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const Eigen::Index len = windows.empty() ? 0 : windows.front().cat.size();
  out << "source_id,start_index,label,stage_fraction";
  for (Eigen::Index i = 0; i < len; ++i) out << ",cat_" << i;
  for (Eigen::Index i = 0; i < len; ++i) out << ",cal_" << i;
  out << '\n';
  for (const auto& w : windows) {
    if (w.cat.size() != len || w.cal.size() != len) {
      throw DomainError("windows of unequal length cannot share a dump");
    }
    if (w.source_id.find(',') != std::string::npos) {
      throw DomainError("source_id must not contain ','");
    }
    out << w.source_id << ',' << w.start_index << ',' << label_name(w.label) << ',';
    if (w.stage_fraction) out << format_double(*w.stage_fraction);
    for (Eigen::Index i = 0; i < len; ++i) out << ',' << format_double(w.cat[i]);
    for (Eigen::Index i = 0; i < len; ++i) out << ',' << format_double(w.cal[i]);
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<PulseWindow> read_windows_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string where = path.string();

  auto split = [](const std::string& line) {
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    if (!line.empty() && line.back() == ',') cols.emplace_back();
    return cols;
  };
  auto to_double = [&](const std::string& s, std::size_t line_no) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
      throw ParseError(where, line_no, "bad number '" + s + "'");
    }
    return v;
  };

  std::string line;
  if (!std::getline(in, line)) throw ParseError(where, 1, "missing header");
  const auto header = split(line);
  if (header.size() < 4 || header[0] != "source_id" || (header.size() - 4) % 2 != 0) {
    throw ParseError(where, 1, "unexpected header");
  }
  const auto len = static_cast<Eigen::Index>((header.size() - 4) / 2);

  std::vector<PulseWindow> windows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cols = split(line);
    if (cols.size() != header.size()) {
      throw ParseError(where, line_no, "expected " + std::to_string(header.size()) +
                                           " columns, found " + std::to_string(cols.size()));
    }
    PulseWindow w;
    w.source_id = cols[0];
    w.start_index = static_cast<std::size_t>(to_double(cols[1], line_no));
    w.label = cols[2] == "nominal" ? kNominal : static_cast<Label>(to_double(cols[2], line_no));
    if (!cols[3].empty()) w.stage_fraction = to_double(cols[3], line_no);
    w.cat.resize(len);
    w.cal.resize(len);
    for (Eigen::Index i = 0; i < len; ++i) {
      w.cat[i] = to_double(cols[static_cast<std::size_t>(4 + i)], line_no);
      w.cal[i] = to_double(cols[static_cast<std::size_t>(4 + len + i)], line_no);
    }
    windows.push_back(std::move(w));
  }
  return windows;
}

}  // namespace trackguard
