#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "trackguard/error.hpp"
#include "trackguard/signalgen.hpp"

namespace trackguard {

enum class LabelRule { CenterPhase, MajorityPhase };

struct PreprocessConfig {
  std::size_t window_len = 128;
  std::size_t stride = 16;
  std::size_t smooth_radius = 2;
  LabelRule label_rule = LabelRule::CenterPhase;

  void validate() const;
  bool operator==(const PreprocessConfig&) const = default;
};

struct PulseWindow {
  Eigen::VectorXd cat;
  Eigen::VectorXd cal;
  std::string source_id;
  std::size_t start_index = 0;
  Label label = kNominal;
  std::optional<double> stage_fraction;  // present iff label != kNominal

  std::size_t center_index() const { return start_index + static_cast<std::size_t>(cat.size()) / 2; }
};

// Centered moving average of width 2*radius+1. The kernel shrinks to the
// available samples at both edges, so the output keeps the input length.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> denoise(
    const Eigen::MatrixBase<Derived>& channel, std::size_t radius) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = channel.size();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(n);
  if (radius == 0) {
    out = channel;
    return out;
  }
  const auto r = static_cast<Eigen::Index>(radius);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, i - r);
    const Eigen::Index hi = std::min<Eigen::Index>(n - 1, i + r);
    out[i] = channel.segment(lo, hi - lo + 1).mean();
  }
  return out;
}

// Zero mean, unit population standard deviation. Channels whose spread is
// negligible relative to their magnitude map to all zeros.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> standardize(
    const Eigen::MatrixBase<Derived>& channel) {
  using Scalar = typename Derived::Scalar;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const Eigen::Index n = channel.size();
  if (n == 0) return Vector();
  const Scalar mean = channel.mean();
  Vector centered = channel.array() - mean;
  const Scalar sd = std::sqrt(centered.squaredNorm() / static_cast<Scalar>(n));
  const Scalar magnitude = std::max<Scalar>(Scalar(1), channel.cwiseAbs().maxCoeff());
  if (!(sd > Scalar(1e-12) * magnitude)) return Vector::Zero(n);
  return centered / sd;
}

// floor((length - window_len) / stride) + 1, or 0 when the record is shorter.
std::size_t window_count(std::size_t length, std::size_t window_len, std::size_t stride);

// Raw, labeled slices of `record` in start order.
std::vector<PulseWindow> slide_windows(const SignalRecord& record, const PreprocessConfig& config,
                                       const std::string& source_id = {});

PulseWindow normalize(const PulseWindow& window);

// denoise -> slide_windows -> normalize, the full path from a record to
// classifier inputs.
std::vector<PulseWindow> preprocess_record(const SignalRecord& record,
                                           const PreprocessConfig& config,
                                           const std::string& source_id = {});

// [cat | cal] as one row, the layout the classifier consumes.
Eigen::RowVectorXd flatten(const PulseWindow& window);
Eigen::MatrixXd stack_windows(const std::vector<PulseWindow>& windows);

// Windowed dataset dump, one row per window:
// source_id,start_index,label,stage_fraction,cat_0..cat_{L-1},cal_0..cal_{L-1}
void write_windows_csv(const std::vector<PulseWindow>& windows, const std::filesystem::path& path);
std::vector<PulseWindow> read_windows_csv(const std::filesystem::path& path);

}  // namespace trackguard
