#include "trackguard/signalgen.hpp"

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "trackguard/error.hpp"

namespace trackguard {
namespace {

using testing::TempDir;

double segment_mean(const Eigen::VectorXd& v, std::size_t from, std::size_t to) {
  return v.segment(static_cast<Eigen::Index>(from), static_cast<Eigen::Index>(to - from)).mean();
}

// Welch statistic for two independent samples.
double welch_t(const std::vector<double>& a, const std::vector<double>& b) {
  auto moments = [](const std::vector<double>& x) {
    double m = 0.0;
    for (double v : x) m += v;
    m /= static_cast<double>(x.size());
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return std::pair{m, s / static_cast<double>(x.size() - 1)};
  };
  const auto [ma, va] = moments(a);
  const auto [mb, vb] = moments(b);
  return (ma - mb) /
         std::sqrt(va / static_cast<double>(a.size()) + vb / static_cast<double>(b.size()));
}

TEST(Envelope, LinearEndpoints) {
  std::mt19937_64 rng(1);
  EnvelopeParams p{0.5, 3.0, 0.85};
  EXPECT_EQ(degradation_envelope(EnvelopeKind::ProgressiveLinear, 0.0, p, rng), 1.0);
  EXPECT_EQ(degradation_envelope(EnvelopeKind::ProgressiveLinear, 1.0, p, rng), 0.5);
}

TEST(Envelope, ExponentialClosedForm) {
  std::mt19937_64 rng(1);
  EnvelopeParams p{0.5, 3.0, 0.85};
  const double expected = 1.0 - 0.5 * 0.5 * 0.5 * 0.5;
  EXPECT_EQ(expected, 0.9375);
  EXPECT_DOUBLE_EQ(degradation_envelope(EnvelopeKind::ProgressiveExponential, 0.5, p, rng),
                   expected);
}

TEST(Envelope, EveryKindIsIdentityAtZero) {
  std::mt19937_64 rng(3);
  EnvelopeParams p;
  for (auto kind : {EnvelopeKind::ProgressiveLinear, EnvelopeKind::ProgressiveExponential,
                    EnvelopeKind::Intermittent, EnvelopeKind::Step}) {
    for (int i = 0; i < 100; ++i) EXPECT_EQ(degradation_envelope(kind, 0.0, p, rng), 1.0);
  }
}

TEST(Envelope, RejectsProgressOutsideUnitInterval) {
  std::mt19937_64 rng(1);
  EnvelopeParams p;
  EXPECT_THROW(degradation_envelope(EnvelopeKind::ProgressiveLinear, -0.01, p, rng), DomainError);
  EXPECT_THROW(degradation_envelope(EnvelopeKind::Step, 1.01, p, rng), DomainError);
  EXPECT_THROW(degradation_envelope(EnvelopeKind::Intermittent, std::nan(""), p, rng), DomainError);
}

TEST(Envelope, ProgressiveKindsAreMonotoneOnGrid) {
  std::mt19937_64 rng(1);
  EnvelopeParams p;
  for (auto kind : {EnvelopeKind::ProgressiveLinear, EnvelopeKind::ProgressiveExponential}) {
    double prev = degradation_envelope(kind, 0.0, p, rng);
    for (int i = 1; i < 1000; ++i) {
      const double t = static_cast<double>(i) / 999.0;
      const double v = degradation_envelope(kind, t, p, rng);
      EXPECT_LE(v, prev) << to_string(kind) << " at t=" << t;
      prev = v;
    }
    EXPECT_DOUBLE_EQ(prev, 1.0 - p.severity_max);
  }
}

TEST(Envelope, IntermittentDropoutRateGrowsWithProgress) {
  std::mt19937_64 rng(11);
  EnvelopeParams p;
  auto rate = [&](double t) {
    int drops = 0;
    for (int i = 0; i < 20000; ++i) {
      const double v = degradation_envelope(EnvelopeKind::Intermittent, t, p, rng);
      EXPECT_TRUE(v == 1.0 || v == 1.0 - p.severity_max);
      drops += v < 1.0;
    }
    return drops / 20000.0;
  };
  const double low = rate(0.2);
  const double mid = rate(0.6);
  const double high = rate(1.0);
  EXPECT_LT(low, mid);
  EXPECT_LT(mid, high);
  EXPECT_EQ(high, 1.0);
}

TEST(Catalog, ChannelMapping) {
  EXPECT_EQ(anomaly_catalog().size(), 11u);
  for (Label id : {3, 11, 6, 9}) EXPECT_EQ(anomaly_class(id).affected_channel, Channel::Upstream);
  for (Label id : {2, 10, 7, 8}) EXPECT_EQ(anomaly_class(id).affected_channel, Channel::Downstream);
  for (Label id : {1, 4, 5}) EXPECT_EQ(anomaly_class(id).affected_channel, Channel::Both);
  EXPECT_THROW(anomaly_class(0), DomainError);
  EXPECT_THROW(anomaly_class(12), DomainError);

  const auto defaults = default_classes();
  EXPECT_EQ(defaults.size(), 10u);
  for (const auto& c : defaults) EXPECT_NE(c.id, kHeldOutClass);
}

TEST(GenerateRecord, NominalMeanWithinThreeStandardErrors) {
  GeneratorConfig cfg;
  const auto r = generate_record(kNominal, cfg, 7);
  EXPECT_FALSE(r.phases.has_value());
  const double n = static_cast<double>(r.size());
  const double tol = 3.0 * cfg.noise_sigma / std::sqrt(n);
  EXPECT_NEAR(r.cat.mean(), cfg.nominal_amplitude, tol);
  EXPECT_NEAR(r.cal.mean(), cfg.nominal_amplitude, tol);
}

TEST(GenerateRecord, PhasesAtSegmentBoundaries) {
  GeneratorConfig cfg;
  const auto r = generate_record(4, cfg, 1);
  ASSERT_TRUE(r.phases.has_value());
  EXPECT_EQ(r.phases->onset_index, cfg.nominal_lead_samples);
  EXPECT_EQ(r.phases->critical_index, cfg.nominal_lead_samples + cfg.anomaly_samples);
  EXPECT_EQ(static_cast<std::size_t>(r.size()), cfg.total_samples());
  EXPECT_NO_THROW(r.validate());
}

TEST(GenerateRecord, BrokenRailDownstreamHitsOnlyCal) {
  GeneratorConfig cfg;
  const auto r = generate_record(10, cfg, 1);
  const auto& ph = *r.phases;
  const std::size_t lead = ph.onset_index;
  const double sigma = cfg.noise_sigma;

  const double cal_lead = segment_mean(r.cal, 0, lead);
  const auto broken = ph.onset_index + static_cast<std::size_t>(
                                           std::ceil(cfg.step_fraction * cfg.anomaly_samples));
  const double cal_broken = segment_mean(r.cal, broken, ph.critical_index);
  EXPECT_LT(cal_broken, cal_lead - 0.5 * cfg.severity_max * cfg.nominal_amplitude);

  const double cat_lead = segment_mean(r.cat, 0, lead);
  const double cat_span = segment_mean(r.cat, ph.onset_index, ph.critical_index);
  const double se = sigma * std::sqrt(1.0 / static_cast<double>(lead) +
                                      1.0 / static_cast<double>(cfg.anomaly_samples));
  EXPECT_NEAR(cat_span, cat_lead, 4.0 * se);
}

TEST(GenerateRecord, UpstreamContactHitsOnlyCat) {
  GeneratorConfig cfg;
  const auto r = generate_record(3, cfg, 1);
  const auto& ph = *r.phases;
  const std::size_t lead = ph.onset_index;
  const std::size_t late = ph.onset_index + cfg.anomaly_samples * 9 / 10;
  EXPECT_LT(segment_mean(r.cat, late, ph.critical_index), segment_mean(r.cat, 0, lead) - 0.1);

  const double se = cfg.noise_sigma * std::sqrt(1.0 / static_cast<double>(lead) +
                                                1.0 / static_cast<double>(cfg.anomaly_samples));
  EXPECT_NEAR(segment_mean(r.cal, ph.onset_index, ph.critical_index),
              segment_mean(r.cal, 0, lead), 4.0 * se);
}

TEST(GenerateRecord, DeterministicBitForBit) {
  GeneratorConfig cfg;
  for (Label id : {0, 1, 6, 8, 11}) {
    const auto a = generate_record(id, cfg, 99);
    const auto b = generate_record(id, cfg, 99);
    EXPECT_TRUE(a == b) << id;
    const auto c = generate_record(id, cfg, 100);
    EXPECT_FALSE(a == c) << id;
  }
}

TEST(GenerateRecord, UnaffectedChannelStatisticallyNominal) {
  GeneratorConfig cfg;
  for (const auto& cls : anomaly_catalog()) {
    if (cls.affected_channel == Channel::Both) continue;
    std::vector<double> lead;
    std::vector<double> span;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto r = generate_record(cls, cfg, 1000 + seed);
      const auto& ch = cls.affected_channel == Channel::Upstream ? r.cal : r.cat;
      const auto& ph = *r.phases;
      for (std::size_t i = 0; i < ph.onset_index; ++i) lead.push_back(ch[static_cast<Eigen::Index>(i)]);
      for (std::size_t i = ph.onset_index; i < ph.critical_index; ++i) {
        span.push_back(ch[static_cast<Eigen::Index>(i)]);
      }
    }
    // two-sided p > 0.01 under the normal approximation (large samples)
    EXPECT_LT(std::abs(welch_t(span, lead)), 2.5758) << "class " << cls.id;
  }
}

TEST(GenerateRecord, EarlyStageMeanDeviationBelowNoise) {
  GeneratorConfig cfg;
  cfg.noise_sigma = 0.0;
  const double sigma = GeneratorConfig{}.noise_sigma;
  EXPECT_LT(cfg.signature_amplitude, sigma);
  const std::size_t early = cfg.anomaly_samples / 20;
  for (const auto& cls : anomaly_catalog()) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto r = generate_record(cls, cfg, seed);
      const auto on = r.phases->onset_index;
      for (const auto* ch : {&r.cat, &r.cal}) {
        worst = std::max(worst, std::abs(segment_mean(*ch, on, on + early) - cfg.nominal_amplitude));
      }
    }
    EXPECT_LT(worst, sigma) << "class " << cls.id;
  }
}

TEST(GenerateRecord, EarlyStageEvadesThreeSigmaMeanDetector) {
  GeneratorConfig cfg;
  const std::size_t early = cfg.anomaly_samples / 20;
  const std::size_t len = 32;
  const std::size_t stride = 8;
  for (const auto& cls : anomaly_catalog()) {
    int windows = 0;
    int fired = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto r = generate_record(cls, cfg, 500 + seed);
      const auto on = r.phases->onset_index;
      for (const auto* ch : {&r.cat, &r.cal}) {
        const auto lead = ch->head(static_cast<Eigen::Index>(on));
        const double mu = lead.mean();
        const double sd = std::sqrt((lead.array() - mu).square().mean());
        for (std::size_t s = on; s + len <= on + early; s += stride) {
          ++windows;
          fired += std::abs(segment_mean(*ch, s, s + len) - mu) > 3.0 * sd;
        }
      }
    }
    EXPECT_LT(static_cast<double>(fired) / windows, 0.10) << "class " << cls.id;
  }
}

TEST(GeneratorConfig, ValidationNamesField) {
  GeneratorConfig cfg;
  cfg.severity_max = 0.0;
  try {
    cfg.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("severity_max"), std::string::npos);
  }
  cfg = GeneratorConfig{};
  cfg.noise_sigma = -1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = GeneratorConfig{};
  cfg.noise_sigma = 0.0;
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Csv, RoundTripIsExact) {
  TempDir dir;
  GeneratorConfig cfg;
  for (Label id : {0, 2, 6, 10}) {
    const auto r = generate_record(id, cfg, 31 + static_cast<std::uint64_t>(id));
    const auto path = dir / ("r" + std::to_string(id) + ".csv");
    write_csv(r, path);
    EXPECT_TRUE(read_csv(path) == r) << id;
  }
}

TEST(Csv, FormatDoubleRoundTrips) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int i = 0; i < 10000; ++i) {
    const double v = u(rng);
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.1), "0.1");
}

TEST(Csv, HeaderLayout) {
  TempDir dir;
  GeneratorConfig cfg;
  write_csv(generate_record(3, cfg, 8), dir / "a.csv");
  std::istringstream in(testing::slurp(dir / "a.csv"));
  std::string l1, l2, l3;
  std::getline(in, l1);
  std::getline(in, l2);
  std::getline(in, l3);
  EXPECT_EQ(l1, "# trackguard-csv v1");
  EXPECT_EQ(l2, "label=3;sample_rate=50;seed=8;onset_index=600;critical_index=3600;recovery_index=3600");
  EXPECT_EQ(l3, "index,cat,cal");
}

std::string replace_line(const std::string& text, std::size_t line_no, const std::string& with) {
  std::istringstream in(text);
  std::ostringstream out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) out << (n == line_no ? with : line) << '\n';
  return out.str();
}

TEST(Csv, RaggedRowReportsLineNumber) {
  TempDir dir;
  write_csv(generate_record(kNominal, GeneratorConfig{}, 1), dir / "a.csv");
  testing::spit(dir / "b.csv", replace_line(testing::slurp(dir / "a.csv"), 12, "8,1.0,1.0,1.0"));
  try {
    read_csv(dir / "b.csv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 12u);
  }
}

TEST(Csv, NonFiniteAmplitudeRejected) {
  TempDir dir;
  write_csv(generate_record(kNominal, GeneratorConfig{}, 1), dir / "a.csv");
  testing::spit(dir / "b.csv", replace_line(testing::slurp(dir / "a.csv"), 20, "16,nan,1.0"));
  try {
    read_csv(dir / "b.csv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 20u);
  }
}

TEST(Csv, MissingOnsetForAnomalyRejected) {
  TempDir dir;
  write_csv(generate_record(2, GeneratorConfig{}, 1), dir / "a.csv");
  testing::spit(dir / "b.csv",
                replace_line(testing::slurp(dir / "a.csv"), 2,
                             "label=2;sample_rate=50;seed=1;critical_index=3600;recovery_index=3600"));
  try {
    read_csv(dir / "b.csv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("onset_index"), std::string::npos);
  }
}

TEST(Csv, BadHeaderRejected) {
  TempDir dir;
  testing::spit(dir / "a.csv", "index,cat,cal\n0,1,1\n");
  EXPECT_THROW(read_csv(dir / "a.csv"), ParseError);
  EXPECT_THROW(read_csv(dir / "missing.csv"), IoError);
}

TEST(Dataset, CountsAndManifest) {
  TempDir dir;
  GeneratorConfig cfg;
  const auto m = generate_dataset(cfg, default_classes(), 3, 42, dir.path());
  EXPECT_EQ(m.records.size(), 30u);
  std::set<std::string> paths;
  std::map<Label, int> per_class;
  for (const auto& e : m.records) {
    paths.insert(e.path);
    ++per_class[e.label];
    EXPECT_TRUE(std::filesystem::exists(dir / e.path));
    ASSERT_TRUE(e.phases.has_value());
  }
  EXPECT_EQ(paths.size(), 30u);
  for (const auto& [label, n] : per_class) EXPECT_EQ(n, 3) << label;

  write_manifest(m, dir / "manifest.json");
  EXPECT_TRUE(read_manifest(dir / "manifest.json") == m);
}

TEST(Dataset, ByteIdenticalAcrossCalls) {
  TempDir a;
  TempDir b;
  GeneratorConfig cfg;
  const auto ma = generate_dataset(cfg, default_classes(), 2, 42, a.path());
  const auto mb = generate_dataset(cfg, default_classes(), 2, 42, b.path());
  ASSERT_TRUE(ma == mb);
  for (const auto& e : ma.records) {
    EXPECT_EQ(testing::slurp(a / e.path), testing::slurp(b / e.path)) << e.path;
  }
}

TEST(Dataset, EdgeCases) {
  TempDir dir;
  GeneratorConfig cfg;
  EXPECT_TRUE(generate_dataset(cfg, {}, 3, 42, dir.path()).records.empty());
  EXPECT_THROW(generate_dataset(cfg, default_classes(), 0, 42, dir.path()), DomainError);
}

TEST(Dataset, RecordSeedsAreDistinct) {
  std::set<std::uint64_t> seen;
  for (Label l = 0; l <= 11; ++l) {
    for (std::size_t i = 0; i < 50; ++i) seen.insert(record_seed(42, l, i));
  }
  EXPECT_EQ(seen.size(), 12u * 50u);
}

}  // namespace
}  // namespace trackguard
