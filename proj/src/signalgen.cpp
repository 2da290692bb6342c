#include "trackguard/signalgen.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <system_error>

#include <json.hpp>

#include "trackguard/error.hpp"

namespace trackguard {

namespace fs = std::filesystem;

std::string label_name(Label label) {
  return label == kNominal ? std::string("nominal") : std::to_string(label);
}

std::string_view to_string(Channel channel) {
  switch (channel) {
    case Channel::Upstream:
      return "CAT";
    case Channel::Downstream:
      return "CAL";
    case Channel::Both:
      return "both";
  }
  return "?";
}

std::string_view to_string(EnvelopeKind kind) {
  switch (kind) {
    case EnvelopeKind::ProgressiveLinear:
      return "progressive_linear";
    case EnvelopeKind::ProgressiveExponential:
      return "progressive_exponential";
    case EnvelopeKind::Intermittent:
      return "intermittent";
    case EnvelopeKind::Step:
      return "step";
  }
  return "?";
}

const std::vector<AnomalyClass>& anomaly_catalog() {
  using enum Channel;
  using enum EnvelopeKind;
  // Ripple periods only need to be distinct among classes that share a
  // receiver; 9.5 on CAT is reserved for the held-out class.
  static const std::vector<AnomalyClass> catalog = {
      {1, "Decrease of the ballast resistance simulated with a 1-ohm resistance", Both,
       ProgressiveLinear, 36.0},
      {2, "Degradation of the LC downstream contact", Downstream, ProgressiveExponential, 36.0},
      {3, "Degradation of the LC upstream contact", Upstream, ProgressiveExponential, 36.0},
      {4, "Degradation of the track transformer contact", Both, ProgressiveExponential, 20.0},
      {5, "Degradation of the wheel-rail contact", Both, ProgressiveExponential, 13.0},
      {6,
       "Intermittent degradation of the railway bonding between the remote amplifier (RA) and "
       "the sensor",
       Upstream, Intermittent, 9.5},
      {7,
       "Progressive degradation of the railway bonding between the remote amplifier (RA) and "
       "the receiver",
       Downstream, ProgressiveExponential, 20.0},
      {8,
       "Intermittent degradation of the railway bonding between the remote amplifier (RA) and "
       "the receiver",
       Downstream, Intermittent, 13.0},
      {9,
       "Progressive degradation of the railway bonding between the remote amplifier (RA) and "
       "the sensor",
       Upstream, ProgressiveExponential, 20.0},
      {10, "Broken rail downstream", Downstream, Step, 9.5},
      {11, "Broken rail upstream", Upstream, Step, 13.0},
  };
  return catalog;
}

const AnomalyClass& anomaly_class(Label id) {
  const auto& catalog = anomaly_catalog();
  if (id < 1 || id > static_cast<Label>(catalog.size())) {
    throw DomainError("unknown anomaly class id " + std::to_string(id));
  }
  return catalog[static_cast<std::size_t>(id - 1)];
}

std::vector<AnomalyClass> default_classes() {
  std::vector<AnomalyClass> classes;
  for (const auto& cls : anomaly_catalog()) {
    if (cls.id != kHeldOutClass) classes.push_back(cls);
  }
  return classes;
}

double degradation_envelope(EnvelopeKind kind, double t, const EnvelopeParams& params,
                            std::mt19937_64& rng) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw DomainError("envelope progress t must lie in [0, 1], got " + format_double(t));
  }
  if (!(params.severity_max > 0.0 && params.severity_max <= 1.0) || !(params.early_flatness >= 1.0)) {
    throw DomainError("invalid envelope parameters");
  }
  const double s = params.severity_max;
  switch (kind) {
    case EnvelopeKind::ProgressiveLinear:
      return 1.0 - s * t;
    case EnvelopeKind::ProgressiveExponential:
      return 1.0 - s * std::pow(t, params.early_flatness);
    case EnvelopeKind::Intermittent: {
      // Dropout probability grows like the exponential profile.
      std::bernoulli_distribution dropout(std::pow(t, params.early_flatness));
      return dropout(rng) ? 1.0 - s : 1.0;
    }
    case EnvelopeKind::Step:
      return t >= params.step_fraction ? 1.0 - s : 1.0;
  }
  return 1.0;
}

void GeneratorConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("generator." + what); };
  if (!(carrier_freq >= 8200.0 && carrier_freq <= 11000.0)) {
    fail("carrier_freq must lie in [8200, 11000] Hz");
  }
  if (sample_rate <= 0) fail("sample_rate must be positive");
  if (!(nominal_amplitude > 0.0) || !std::isfinite(nominal_amplitude)) {
    fail("nominal_amplitude must be positive");
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) fail("noise_sigma must be >= 0");
  if (nominal_lead_samples == 0) fail("nominal_lead_samples must be positive");
  if (anomaly_samples == 0) fail("anomaly_samples must be positive");
  if (nominal_tail_samples == 0) fail("nominal_tail_samples must be positive");
  if (!(severity_max > 0.0 && severity_max <= 1.0)) fail("severity_max must lie in (0, 1]");
  if (!(early_flatness >= 1.0)) fail("early_flatness must be >= 1");
  if (!(step_fraction > 0.0 && step_fraction <= 1.0)) fail("step_fraction must lie in (0, 1]");
  if (!(signature_amplitude >= 0.0) || !std::isfinite(signature_amplitude)) {
    fail("signature_amplitude must be >= 0");
  }
  if (dropout_block == 0) fail("dropout_block must be positive");
}

void SignalRecord::validate() const {
  if (sample_rate <= 0) throw DomainError("record sample_rate must be positive");
  if (cat.size() == 0 || cat.size() != cal.size()) {
    throw DomainError("record channels must be non-empty and of equal length");
  }
  if (!cat.allFinite() || !cal.allFinite()) throw DomainError("record holds non-finite samples");
  if (label == kNominal) {
    if (phases) throw DomainError("nominal record must not carry phase indices");
    return;
  }
  if (label < 1 || label > 11) throw DomainError("record label out of range");
  if (!phases) throw DomainError("anomaly record requires phase indices");
  const auto n = static_cast<std::size_t>(size());
  if (!(phases->onset_index < phases->critical_index &&
        phases->critical_index <= phases->recovery_index && phases->recovery_index <= n)) {
    throw DomainError("record phase indices out of order");
  }
}

bool SignalRecord::operator==(const SignalRecord& other) const {
  return sample_rate == other.sample_rate && label == other.label && phases == other.phases &&
         seed == other.seed && cat.size() == other.cat.size() && cal.size() == other.cal.size() &&
         cat == other.cat && cal == other.cal;
}

SignalRecord generate_record(const std::optional<AnomalyClass>& cls, const GeneratorConfig& config,
                             std::uint64_t seed) {
  config.validate();
  const std::size_t n = config.total_samples();
  const std::size_t onset = config.nominal_lead_samples;
  const std::size_t critical = onset + config.anomaly_samples;

  SignalRecord record;
  record.sample_rate = config.sample_rate;
  record.seed = seed;
  record.cat.resize(static_cast<Eigen::Index>(n));
  record.cal.resize(static_cast<Eigen::Index>(n));
  if (cls) {
    record.label = cls->id;
    record.phases = AnomalyPhases{onset, critical, critical};
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double phase = phase_dist(rng);
  const EnvelopeParams params = config.envelope_params();
  const bool hits_cat = cls && cls->affected_channel != Channel::Downstream;
  const bool hits_cal = cls && cls->affected_channel != Channel::Upstream;

  const bool blocky = cls && cls->envelope_kind == EnvelopeKind::Intermittent;
  double scale = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    double cat = config.nominal_amplitude;
    double cal = config.nominal_amplitude;
    if (cls && i >= onset && i < critical) {
      const double elapsed = static_cast<double>(i - onset);
      const double t = elapsed / static_cast<double>(config.anomaly_samples);
      if (!blocky || (i - onset) % config.dropout_block == 0) {
        scale = degradation_envelope(cls->envelope_kind, t, params, rng);
      }
      const double ripple =
          config.signature_amplitude *
          std::sin(2.0 * std::numbers::pi * elapsed / cls->signature_period + phase);
      if (hits_cat) cat = cat * scale + ripple;
      if (hits_cal) cal = cal * scale + ripple;
    }
    const auto idx = static_cast<Eigen::Index>(i);
    record.cat[idx] = cat + config.noise_sigma * noise(rng);
    record.cal[idx] = cal + config.noise_sigma * noise(rng);
  }
  return record;
}

SignalRecord generate_record(Label label, const GeneratorConfig& config, std::uint64_t seed) {
  if (label == kNominal) return generate_record(std::nullopt, config, seed);
  return generate_record(anomaly_class(label), config, seed);
}

std::uint64_t record_seed(std::uint64_t dataset_seed, Label label, std::size_t index) {
  // splitmix64 finaliser over the combined key
  std::uint64_t z = dataset_seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(label) + 1) +
                    0xBF58476D1CE4E5B9ULL * (static_cast<std::uint64_t>(index) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string ManifestEntry::id() const { return fs::path(path).stem().string(); }

namespace {

std::string record_file_name(Label label, std::size_t index) {
  char buf[48];
  if (label == kNominal) {
    std::snprintf(buf, sizeof buf, "nominal_r%03zu.csv", index);
  } else {
    std::snprintf(buf, sizeof buf, "anomaly%02d_r%03zu.csv", label, index);
  }
  return buf;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

ManifestEntry emit_record(const SignalRecord& record, std::size_t index, const fs::path& out_dir) {
  ManifestEntry entry;
  entry.path = record_file_name(record.label, index);
  entry.label = record.label;
  entry.seed = record.seed;
  entry.phases = record.phases;
  write_csv(record, out_dir / entry.path);
  return entry;
}

}  // namespace

DatasetManifest generate_dataset(const GeneratorConfig& config,
                                 const std::vector<AnomalyClass>& classes,
                                 std::size_t records_per_class, std::uint64_t seed,
                                 const fs::path& out_dir) {
  if (records_per_class == 0) throw DomainError("records_per_class must be >= 1");
  config.validate();
  DatasetManifest manifest;
  if (classes.empty()) return manifest;
  ensure_dir(out_dir);
  for (const auto& cls : classes) {
    if (cls.id == kNominal) throw DomainError("generate_dataset takes anomaly classes only");
    for (std::size_t r = 0; r < records_per_class; ++r) {
      const auto record = generate_record(cls, config, record_seed(seed, cls.id, r));
      manifest.records.push_back(emit_record(record, r, out_dir));
    }
  }
  return manifest;
}

DatasetManifest generate_nominal_records(const GeneratorConfig& config, std::size_t count,
                                         std::uint64_t seed, const fs::path& out_dir) {
  config.validate();
  DatasetManifest manifest;
  if (count == 0) return manifest;
  ensure_dir(out_dir);
  for (std::size_t r = 0; r < count; ++r) {
    const auto record = generate_record(std::nullopt, config, record_seed(seed, kNominal, r));
    manifest.records.push_back(emit_record(record, r, out_dir));
  }
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
  nlohmann::ordered_json doc;
  doc["format"] = "trackguard-manifest v1";
  auto& records = doc["records"] = nlohmann::ordered_json::array();
  for (const auto& e : manifest.records) {
    nlohmann::ordered_json row;
    row["path"] = e.path;
    row["label"] = e.label;
    row["seed"] = e.seed;
    if (e.phases) {
      row["onset_index"] = e.phases->onset_index;
      row["critical_index"] = e.phases->critical_index;
      row["recovery_index"] = e.phases->recovery_index;
    }
    row["holdout"] = e.holdout;
    records.push_back(std::move(row));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("failed writing manifest " + path.string());
}

DatasetManifest read_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest " + path.string());
  DatasetManifest manifest;
  try {
    const auto doc = nlohmann::json::parse(in);
    if (doc.at("format").get<std::string>() != "trackguard-manifest v1") {
      throw VersionError(path.string() + ": unsupported manifest format");
    }
    for (const auto& row : doc.at("records")) {
      ManifestEntry e;
      e.path = row.at("path").get<std::string>();
      e.label = row.at("label").get<Label>();
      e.seed = row.at("seed").get<std::uint64_t>();
      if (row.contains("onset_index")) {
        e.phases = AnomalyPhases{row.at("onset_index").get<std::size_t>(),
                                 row.at("critical_index").get<std::size_t>(),
                                 row.at("recovery_index").get<std::size_t>()};
      }
      e.holdout = row.value("holdout", false);
      manifest.records.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(path.string(), 0, ex.what());
  }
  return manifest;
}

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

void write_csv(const SignalRecord& record, const fs::path& path) {
  record.validate();
  std::string text;
  text.reserve(static_cast<std::size_t>(record.size()) * 48 + 128);
  text += "# trackguard-csv v1\n";
  text += "label=" + label_name(record.label);
  text += ";sample_rate=" + std::to_string(record.sample_rate);
  text += ";seed=" + std::to_string(record.seed);
  if (record.phases) {
    text += ";onset_index=" + std::to_string(record.phases->onset_index);
    text += ";critical_index=" + std::to_string(record.phases->critical_index);
    text += ";recovery_index=" + std::to_string(record.phases->recovery_index);
  }
  text += "\nindex,cat,cal\n";
  for (Eigen::Index i = 0; i < record.size(); ++i) {
    text += std::to_string(i);
    text += ',';
    text += format_double(record.cat[i]);
    text += ',';
    text += format_double(record.cal[i]);
    text += '\n';
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

namespace {

template <typename T>
bool parse_number(std::string_view text, T& value) {
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, value);
  return res.ec == std::errc() && res.ptr == end;
}

}  // namespace

SignalRecord read_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string where = path.string();
  std::string line;
  std::size_t line_no = 0;

  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };

  if (!next_line() || line != "# trackguard-csv v1") {
    throw ParseError(where, 1, "expected header '# trackguard-csv v1'");
  }
  if (!next_line()) throw ParseError(where, 2, "missing metadata line");

  SignalRecord record;
  bool have_label = false;
  bool have_rate = false;
  bool have_seed = false;
  std::optional<std::size_t> onset, critical, recovery;
  std::string_view meta(line);
  while (!meta.empty()) {
    const auto semi = meta.find(';');
    const auto field = meta.substr(0, semi);
    meta = semi == std::string_view::npos ? std::string_view() : meta.substr(semi + 1);
    const auto eq = field.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError(where, 2, "metadata field '" + std::string(field) + "' lacks '='");
    }
    const auto key = field.substr(0, eq);
    const auto value = field.substr(eq + 1);
    auto bad = [&]() {
      throw ParseError(where, 2, "bad value for '" + std::string(key) + "'");
    };
    if (key == "label") {
      if (value == "nominal") {
        record.label = kNominal;
      } else if (!parse_number(value, record.label) || record.label < 1 || record.label > 11) {
        bad();
      }
      have_label = true;
    } else if (key == "sample_rate") {
      if (!parse_number(value, record.sample_rate)) bad();
      have_rate = true;
    } else if (key == "seed") {
      if (!parse_number(value, record.seed)) bad();
      have_seed = true;
    } else if (key == "onset_index" || key == "critical_index" || key == "recovery_index") {
      std::size_t idx = 0;
      if (!parse_number(value, idx)) bad();
      (key == "onset_index" ? onset : key == "critical_index" ? critical : recovery) = idx;
    } else {
      throw ParseError(where, 2, "unknown metadata key '" + std::string(key) + "'");
    }
  }
  if (!have_label) throw ParseError(where, 2, "missing 'label'");
  if (!have_rate) throw ParseError(where, 2, "missing 'sample_rate'");
  if (!have_seed) throw ParseError(where, 2, "missing 'seed'");
  if (record.label == kNominal) {
    if (onset || critical || recovery) {
      throw ParseError(where, 2, "nominal record must not carry phase indices");
    }
  } else {
    if (!onset) throw ParseError(where, 2, "missing 'onset_index'");
    if (!critical) throw ParseError(where, 2, "missing 'critical_index'");
    if (!recovery) throw ParseError(where, 2, "missing 'recovery_index'");
    record.phases = AnomalyPhases{*onset, *critical, *recovery};
  }

  if (!next_line() || line != "index,cat,cal") {
    throw ParseError(where, 3, "expected column header 'index,cat,cal'");
  }

  std::vector<double> cat, cal;
  while (next_line()) {
    if (line.empty()) continue;
    std::string_view row(line);
    std::string_view cols[3];
    std::size_t count = 0;
    while (true) {
      const auto comma = row.find(',');
      if (count < 3) cols[count] = row.substr(0, comma);
      ++count;
      if (comma == std::string_view::npos) break;
      row = row.substr(comma + 1);
    }
    if (count != 3) {
      throw ParseError(where, line_no, "expected 3 columns, found " + std::to_string(count));
    }
    std::size_t idx = 0;
    if (!parse_number(cols[0], idx) || idx != cat.size()) {
      throw ParseError(where, line_no, "bad or out-of-sequence sample index");
    }
    double a = 0.0, b = 0.0;
    if (!parse_number(cols[1], a) || !parse_number(cols[2], b)) {
      throw ParseError(where, line_no, "unparseable amplitude");
    }
    if (!std::isfinite(a) || !std::isfinite(b)) {
      throw ParseError(where, line_no, "non-finite amplitude");
    }
    cat.push_back(a);
    cal.push_back(b);
  }
  record.cat = Eigen::Map<const Eigen::VectorXd>(cat.data(), static_cast<Eigen::Index>(cat.size()));
  record.cal = Eigen::Map<const Eigen::VectorXd>(cal.data(), static_cast<Eigen::Index>(cal.size()));
  try {
    record.validate();
  } catch (const DomainError& ex) {
    throw ParseError(where, 0, ex.what());
  }
  return record;
}

}  // namespace trackguard
