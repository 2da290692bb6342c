#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace trackguard {

// Class label as stored in files and models. 0 is the nominal state,
// anomaly use cases carry their catalog id 1..11.
using Label = int;
inline constexpr Label kNominal = 0;

std::string label_name(Label label);

enum class Channel { Upstream, Downstream, Both };  // CAT, CAL, both receivers

enum class EnvelopeKind { ProgressiveLinear, ProgressiveExponential, Intermittent, Step };

std::string_view to_string(Channel channel);
std::string_view to_string(EnvelopeKind kind);

struct AnomalyClass {
  Label id = 0;
  std::string description;
  Channel affected_channel = Channel::Both;
  EnvelopeKind envelope_kind = EnvelopeKind::ProgressiveLinear;
  // Period, in samples, of the weak modulation ripple the fault superimposes
  // on the affected receiver(s) from onset onwards.
  double signature_period = 20.0;
};

// The eleven anomaly use cases, ordered by id.
const std::vector<AnomalyClass>& anomaly_catalog();
// Catalog entry for `id`; throws DomainError for ids outside 1..11.
const AnomalyClass& anomaly_class(Label id);
// Classes generated by default: the catalog without the intermittent
// RA/sensor case (id 6), which stays available as a held-out novelty class.
std::vector<AnomalyClass> default_classes();
inline constexpr Label kHeldOutClass = 6;

struct EnvelopeParams {
  double severity_max = 0.3;
  double early_flatness = 3.0;
  // Progress fraction at which a Step envelope drops.
  double step_fraction = 0.85;
};

// Amplitude multiplier at anomaly progress t in [0, 1]. Only Intermittent
// draws from `rng`.
double degradation_envelope(EnvelopeKind kind, double t, const EnvelopeParams& params,
                            std::mt19937_64& rng);

struct GeneratorConfig {
  double carrier_freq = 9500.0;  // Hz, metadata only
  int sample_rate = 50;
  double nominal_amplitude = 1.0;
  double noise_sigma = 0.02;
  std::size_t nominal_lead_samples = 600;
  std::size_t anomaly_samples = 3000;
  std::size_t nominal_tail_samples = 400;
  double severity_max = 0.3;
  double early_flatness = 3.0;
  double step_fraction = 0.85;
  double signature_amplitude = 0.019;
  // Intermittent dropouts hold for blocks of this many samples.
  std::size_t dropout_block = 25;

  EnvelopeParams envelope_params() const { return {severity_max, early_flatness, step_fraction}; }
  std::size_t total_samples() const {
    return nominal_lead_samples + anomaly_samples + nominal_tail_samples;
  }
  // Throws ConfigError naming the offending field.
  void validate() const;

  bool operator==(const GeneratorConfig&) const = default;
};

struct AnomalyPhases {
  std::size_t onset_index = 0;
  std::size_t critical_index = 0;
  std::size_t recovery_index = 0;

  bool operator==(const AnomalyPhases&) const = default;
};

struct SignalRecord {
  int sample_rate = 0;
  Eigen::VectorXd cat;
  Eigen::VectorXd cal;
  Label label = kNominal;
  std::optional<AnomalyPhases> phases;  // absent iff label == kNominal
  std::uint64_t seed = 0;

  Eigen::Index size() const { return cat.size(); }
  // Throws DomainError when an invariant is broken.
  void validate() const;

  bool operator==(const SignalRecord& other) const;
};

// Deterministic for fixed (cls, config, seed). An empty `cls` yields a
// nominal record.
SignalRecord generate_record(const std::optional<AnomalyClass>& cls, const GeneratorConfig& config,
                             std::uint64_t seed);
SignalRecord generate_record(Label label, const GeneratorConfig& config, std::uint64_t seed);

// Seed for the index-th record of `label` derived from a dataset seed.
std::uint64_t record_seed(std::uint64_t dataset_seed, Label label, std::size_t index);

struct ManifestEntry {
  std::string path;  // relative to the manifest's directory
  Label label = kNominal;
  std::uint64_t seed = 0;
  std::optional<AnomalyPhases> phases;
  bool holdout = false;

  std::string id() const;  // file stem
  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> records;

  bool operator==(const DatasetManifest&) const = default;
};

// Writes records_per_class CSVs for every class in `classes` under `out_dir`
// and returns their manifest entries in generation order. Classes with id 0
// are not accepted here; nominal records come from generate_nominal_records.
DatasetManifest generate_dataset(const GeneratorConfig& config,
                                 const std::vector<AnomalyClass>& classes,
                                 std::size_t records_per_class, std::uint64_t seed,
                                 const std::filesystem::path& out_dir);
DatasetManifest generate_nominal_records(const GeneratorConfig& config, std::size_t count,
                                         std::uint64_t seed, const std::filesystem::path& out_dir);

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

void write_csv(const SignalRecord& record, const std::filesystem::path& path);
SignalRecord read_csv(const std::filesystem::path& path);

// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

}  // namespace trackguard
