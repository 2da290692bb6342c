#include "trackguard/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "trackguard/error.hpp"

namespace trackguard {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

void RunConfig::validate() const {
  generator.validate();
  preprocess.validate();
  train.validate();
  if (!(conformal.alpha > 0.0 && conformal.alpha < 1.0)) {
    throw ConfigError("conformal.alpha must lie in (0, 1)");
  }
  if (!(evaluation.k > 0.0)) throw ConfigError("evaluation.k must be positive");
  if (evaluation.m == 0) throw ConfigError("evaluation.m must be >= 1");
  if (evaluation.model_m == 0) throw ConfigError("evaluation.model_m must be >= 1");
  if (dataset.records_per_class == 0) throw ConfigError("dataset.records_per_class must be >= 1");
  if (preprocess.window_len > generator.total_samples()) {
    throw ConfigError("preprocess.window_len exceeds the generated record length");
  }
  const std::pair<const char*, const std::string*> paths_list[] = {
      {"paths.data_dir", &paths.data_dir},
      {"paths.model_path", &paths.model_path},
      {"paths.calib_path", &paths.calib_path},
      {"paths.report_dir", &paths.report_dir}};
  for (const auto& [name, value] : paths_list) {
    if (value->empty()) throw ConfigError(std::string(name) + " must not be empty");
  }
}

std::filesystem::path RunConfig::resolve(const std::string& path) const {
  std::filesystem::path p(path);
  return p.is_absolute() ? p : base_dir / p;
}

void RunConfig::set_seed(std::uint64_t value) {
  seed = value;
  train.seed = value;
}

bool RunConfig::operator==(const RunConfig& other) const {
  return seed == other.seed && generator == other.generator && dataset == other.dataset &&
         preprocess == other.preprocess && train == other.train && conformal == other.conformal &&
         evaluation == other.evaluation && paths == other.paths;
}

namespace {

// Reads one JSON object, remembering which keys were consumed so leftovers
// can be reported as typos.
class Section {
 public:
  Section(const Json& obj, std::string prefix) : obj_(obj), prefix_(std::move(prefix)) {
    if (!obj_.is_object()) throw ConfigError(name("") + " must be an object");
  }

  template <typename T>
  void optional(const char* key, T& out, const char* type) {
    seen_.insert(key);
    if (!obj_.contains(key)) return;
    read(key, out, type);
  }

  template <typename T>
  void required(const char* key, T& out, const char* type) {
    seen_.insert(key);
    if (!obj_.contains(key)) {
      throw ConfigError("missing config key '" + name(key) + "' (expected " + type + ")");
    }
    read(key, out, type);
  }

  const Json* child(const char* key) {
    seen_.insert(key);
    return obj_.contains(key) ? &obj_.at(key) : nullptr;
  }

  std::string name(const std::string& key) const {
    if (prefix_.empty()) return key.empty() ? "<root>" : key;
    return key.empty() ? prefix_ : prefix_ + "." + key;
  }

  void reject_unknown() const {
    for (const auto& item : obj_.items()) {
      if (!seen_.count(item.key())) throw ConfigError("unknown config key '" + name(item.key()) + "'");
    }
  }

 private:
  template <typename T>
  void read(const char* key, T& out, const char* type) {
    const Json& v = obj_.at(key);
    bool ok = false;
    if constexpr (std::is_same_v<T, bool>) {
      ok = v.is_boolean();
    } else if constexpr (std::is_same_v<T, std::string>) {
      ok = v.is_string();
    } else if constexpr (std::is_floating_point_v<T>) {
      ok = v.is_number();
    } else if constexpr (std::is_unsigned_v<T>) {
      ok = v.is_number_unsigned();
    } else if constexpr (std::is_integral_v<T>) {
      ok = v.is_number_integer();
    } else {
      ok = v.is_array();
    }
    if (!ok) throw ConfigError("config key '" + name(key) + "' must be " + type);
    try {
      out = v.get<T>();
    } catch (const Json::exception&) {
      throw ConfigError("config key '" + name(key) + "' must be " + type);
    }
  }

  const Json& obj_;
  std::string prefix_;
  std::set<std::string> seen_;
};

template <typename Fn>
void with_section(Section& parent, const char* key, Fn&& fn) {
  if (const Json* obj = parent.child(key)) {
    Section s(*obj, parent.name(key));
    fn(s);
    s.reject_unknown();
  }
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::exception& ex) {
    throw ConfigError(std::string("config is not valid JSON: ") + ex.what());
  }
  RunConfig cfg;
  Section root(doc, "");
  std::uint64_t seed = 0;
  root.required("seed", seed, "a non-negative integer");

  with_section(root, "generator", [&](Section& s) {
    auto& g = cfg.generator;
    s.optional("carrier_freq", g.carrier_freq, "a number");
    s.optional("sample_rate", g.sample_rate, "an integer");
    s.optional("nominal_amplitude", g.nominal_amplitude, "a number");
    s.optional("noise_sigma", g.noise_sigma, "a number");
    s.optional("nominal_lead_samples", g.nominal_lead_samples, "a non-negative integer");
    s.optional("anomaly_samples", g.anomaly_samples, "a non-negative integer");
    s.optional("nominal_tail_samples", g.nominal_tail_samples, "a non-negative integer");
    s.optional("severity_max", g.severity_max, "a number");
    s.optional("early_flatness", g.early_flatness, "a number");
    s.optional("step_fraction", g.step_fraction, "a number");
    s.optional("signature_amplitude", g.signature_amplitude, "a number");
    s.optional("dropout_block", g.dropout_block, "a non-negative integer");
  });
  with_section(root, "dataset", [&](Section& s) {
    s.optional("records_per_class", cfg.dataset.records_per_class, "a non-negative integer");
    s.optional("nominal_records", cfg.dataset.nominal_records, "a non-negative integer");
    s.optional("holdout_records", cfg.dataset.holdout_records, "a non-negative integer");
  });
  with_section(root, "preprocess", [&](Section& s) {
    auto& p = cfg.preprocess;
    s.optional("window_len", p.window_len, "a non-negative integer");
    s.optional("stride", p.stride, "a non-negative integer");
    s.optional("smooth_radius", p.smooth_radius, "a non-negative integer");
    std::string rule = p.label_rule == LabelRule::CenterPhase ? "center" : "majority";
    s.optional("label_rule", rule, "\"center\" or \"majority\"");
    if (rule == "center") {
      p.label_rule = LabelRule::CenterPhase;
    } else if (rule == "majority") {
      p.label_rule = LabelRule::MajorityPhase;
    } else {
      throw ConfigError("config key 'preprocess.label_rule' must be \"center\" or \"majority\"");
    }
  });
  with_section(root, "train", [&](Section& s) {
    auto& t = cfg.train;
    s.optional("learning_rate", t.learning_rate, "a number");
    s.optional("batch_size", t.batch_size, "a non-negative integer");
    s.optional("epochs", t.epochs, "a non-negative integer");
    s.optional("l2", t.l2, "a number");
    s.optional("hidden", t.hidden, "an array of positive integers");
    with_section(s, "split", [&](Section& sp) {
      sp.optional("train", t.split.train, "a number");
      sp.optional("calibration", t.split.calibration, "a number");
      sp.optional("test", t.split.test, "a number");
    });
  });
  with_section(root, "conformal", [&](Section& s) {
    s.optional("alpha", cfg.conformal.alpha, "a number");
  });
  with_section(root, "evaluation", [&](Section& s) {
    auto& e = cfg.evaluation;
    s.optional("k", e.k, "a number");
    s.optional("m", e.m, "a non-negative integer");
    s.optional("model_m", e.model_m, "a non-negative integer");
    std::string mode = e.mode == DetectionMode::ConformalSingleton ? "singleton" : "argmax";
    s.optional("mode", mode, "\"singleton\" or \"argmax\"");
    if (mode == "singleton") {
      e.mode = DetectionMode::ConformalSingleton;
    } else if (mode == "argmax") {
      e.mode = DetectionMode::Argmax;
    } else {
      throw ConfigError("config key 'evaluation.mode' must be \"singleton\" or \"argmax\"");
    }
  });
  const Json* paths = root.child("paths");
  if (!paths) throw ConfigError("missing config key 'paths' (expected an object)");
  {
    Section s(*paths, "paths");
    s.required("data_dir", cfg.paths.data_dir, "a string");
    s.required("model_path", cfg.paths.model_path, "a string");
    s.required("calib_path", cfg.paths.calib_path, "a string");
    s.required("report_dir", cfg.paths.report_dir, "a string");
    s.reject_unknown();
  }
  root.reject_unknown();

  cfg.set_seed(seed);
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig cfg = parse_config(ss.str());
  cfg.base_dir = path.parent_path();
  return cfg;
}

std::string serialize_config(const RunConfig& c) {
  OrderedJson doc;
  doc["seed"] = c.seed;
  auto& g = doc["generator"];
  g["carrier_freq"] = c.generator.carrier_freq;
  g["sample_rate"] = c.generator.sample_rate;
  g["nominal_amplitude"] = c.generator.nominal_amplitude;
  g["noise_sigma"] = c.generator.noise_sigma;
  g["nominal_lead_samples"] = c.generator.nominal_lead_samples;
  g["anomaly_samples"] = c.generator.anomaly_samples;
  g["nominal_tail_samples"] = c.generator.nominal_tail_samples;
  g["severity_max"] = c.generator.severity_max;
  g["early_flatness"] = c.generator.early_flatness;
  g["step_fraction"] = c.generator.step_fraction;
  g["signature_amplitude"] = c.generator.signature_amplitude;
  g["dropout_block"] = c.generator.dropout_block;
  auto& d = doc["dataset"];
  d["records_per_class"] = c.dataset.records_per_class;
  d["nominal_records"] = c.dataset.nominal_records;
  d["holdout_records"] = c.dataset.holdout_records;
  auto& p = doc["preprocess"];
  p["window_len"] = c.preprocess.window_len;
  p["stride"] = c.preprocess.stride;
  p["smooth_radius"] = c.preprocess.smooth_radius;
  p["label_rule"] = c.preprocess.label_rule == LabelRule::CenterPhase ? "center" : "majority";
  auto& t = doc["train"];
  t["learning_rate"] = c.train.learning_rate;
  t["batch_size"] = c.train.batch_size;
  t["epochs"] = c.train.epochs;
  t["l2"] = c.train.l2;
  t["hidden"] = c.train.hidden;
  t["split"]["train"] = c.train.split.train;
  t["split"]["calibration"] = c.train.split.calibration;
  t["split"]["test"] = c.train.split.test;
  doc["conformal"]["alpha"] = c.conformal.alpha;
  auto& e = doc["evaluation"];
  e["k"] = c.evaluation.k;
  e["m"] = c.evaluation.m;
  e["model_m"] = c.evaluation.model_m;
  e["mode"] = c.evaluation.mode == DetectionMode::ConformalSingleton ? "singleton" : "argmax";
  auto& paths = doc["paths"];
  paths["data_dir"] = c.paths.data_dir;
  paths["model_path"] = c.paths.model_path;
  paths["calib_path"] = c.paths.calib_path;
  paths["report_dir"] = c.paths.report_dir;
  return doc.dump(2) + "\n";
}

}  // namespace trackguard
