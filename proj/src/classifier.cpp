#include "trackguard/classifier.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include <json.hpp>

namespace trackguard {

Eigen::MatrixXd predict_proba(const ClassifierModel& model,
                              const std::vector<PulseWindow>& windows) {
  if (windows.empty()) return Eigen::MatrixXd(0, model.num_classes());
  return softmax_rows(forward(model, stack_windows(windows)));
}

Eigen::VectorXd predict_proba(const ClassifierModel& model, const PulseWindow& window) {
  return softmax(forward(model, flatten(window)).row(0));
}

Label predict(const ClassifierModel& model, const PulseWindow& window) {
  return model.class_labels[static_cast<std::size_t>(argmax(predict_proba(model, window)))];
}

ClassifierModel make_model(Eigen::Index input_dim, const std::vector<Label>& class_labels,
                           const std::vector<Eigen::Index>& hidden, std::uint64_t seed) {
  ClassifierModel model;
  model.input_dim = input_dim;
  model.class_labels = class_labels;
  model.rng_seed = seed;

  std::mt19937_64 rng(seed);
  Eigen::Index fan_in = input_dim;
  auto add_layer = [&](Eigen::Index out, Activation activation) {
    DenseLayer<double> layer;
    layer.activation = activation;
    layer.weights.resize(fan_in, out);
    layer.bias = Eigen::RowVectorXd::Zero(out);
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-limit, limit);
    // column-major fill order is part of the determinism contract
    for (Eigen::Index c = 0; c < out; ++c) {
      for (Eigen::Index r = 0; r < fan_in; ++r) layer.weights(r, c) = dist(rng);
    }
    model.layers.push_back(std::move(layer));
    fan_in = out;
  };
  for (const auto width : hidden) {
    if (width <= 0) throw ConfigError("train.hidden widths must be positive");
    add_layer(width, Activation::ReLU);
  }
  add_layer(static_cast<Eigen::Index>(class_labels.size()), Activation::Identity);
  model.validate();
  return model;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train.learning_rate must be a finite value >= 0");
  }
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (!(l2 >= 0.0)) throw ConfigError("train.l2 must be >= 0");
  if (!(split.train > 0 && split.calibration > 0 && split.test > 0) ||
      std::abs(split.train + split.calibration + split.test - 1.0) > 1e-9) {
    throw ConfigError("train.split fractions must be positive and sum to 1");
  }
  for (const auto w : hidden) {
    if (w <= 0) throw ConfigError("train.hidden widths must be positive");
  }
}

double accuracy(const ClassifierModel& model, const Eigen::MatrixXd& inputs,
                const std::vector<Eigen::Index>& targets) {
  if (inputs.rows() == 0) return 0.0;
  const Eigen::MatrixXd logits = forward(model, inputs);
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    if (argmax(logits.row(i)) == targets[static_cast<std::size_t>(i)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(inputs.rows());
}

TrainingLog train_from(ClassifierModel& model, const Eigen::MatrixXd& inputs,
                       const std::vector<Eigen::Index>& targets, const TrainConfig& config,
                       const Eigen::MatrixXd* holdout_inputs,
                       const std::vector<Eigen::Index>* holdout_targets) {
  config.validate();
  const auto n = static_cast<std::size_t>(inputs.rows());
  if (n == 0 || n != targets.size()) throw DomainError("training set is empty or mislabeled");

  // Separate stream from initialisation so that changing epochs does not
  // perturb the starting weights.
  std::mt19937_64 rng(config.seed ^ 0x5DEECE66DULL);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainingLog log;
  Eigen::MatrixXd batch;
  std::vector<Eigen::Index> batch_targets;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = n - 1; i > 0; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i);
      std::swap(order[i], order[pick(rng)]);
    }
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      batch.resize(static_cast<Eigen::Index>(stop - start), inputs.cols());
      batch_targets.resize(stop - start);
      for (std::size_t j = start; j < stop; ++j) {
        batch.row(static_cast<Eigen::Index>(j - start)) =
            inputs.row(static_cast<Eigen::Index>(order[j]));
        batch_targets[j - start] = targets[order[j]];
      }
      const auto step = loss_and_gradients(model, batch, batch_targets, config.l2);
      loss_sum += step.loss * static_cast<double>(stop - start);
      for (std::size_t k = 0; k < model.layers.size(); ++k) {
        model.layers[k].weights -= config.learning_rate * step.grads[k].weights;
        model.layers[k].bias -= config.learning_rate * step.grads[k].bias;
      }
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(n);
    if (holdout_inputs && holdout_targets && holdout_inputs->rows() > 0) {
      stats.holdout_accuracy = accuracy(model, *holdout_inputs, *holdout_targets);
    }
    log.epochs.push_back(stats);
  }
  model.validate();
  return log;
}

namespace {

std::vector<Eigen::Index> target_indices(const ClassifierModel& model,
                                         const std::vector<PulseWindow>& windows) {
  std::vector<Eigen::Index> targets;
  targets.reserve(windows.size());
  for (const auto& w : windows) {
    const auto idx = model.index_of(w.label);
    if (idx < 0) throw DomainError("window label " + label_name(w.label) + " is not a model class");
    targets.push_back(idx);
  }
  return targets;
}

}  // namespace

TrainResult train(const std::vector<PulseWindow>& windows, std::vector<Label> classes,
                  const TrainConfig& config, const std::vector<PulseWindow>* holdout) {
  config.validate();
  if (windows.empty()) throw ConfigError("training set is empty");
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.size() < 2) throw ConfigError("training needs at least two classes");
  std::set<Label> seen;
  for (const auto& w : windows) seen.insert(w.label);
  for (const auto label : classes) {
    if (!seen.count(label)) {
      throw ConfigError("class " + label_name(label) + " has no training windows");
    }
  }

  const Eigen::MatrixXd inputs = stack_windows(windows);
  TrainResult result;
  result.model = make_model(inputs.cols(), classes, config.hidden, config.seed);
  const auto targets = target_indices(result.model, windows);
  if (holdout && !holdout->empty()) {
    const Eigen::MatrixXd h_inputs = stack_windows(*holdout);
    const auto h_targets = target_indices(result.model, *holdout);
    result.log = train_from(result.model, inputs, targets, config, &h_inputs, &h_targets);
  } else {
    result.log = train_from(result.model, inputs, targets, config);
  }
  return result;
}

void write_training_log(const TrainingLog& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,train_loss,holdout_accuracy\n";
  for (const auto& e : log.epochs) {
    out << e.epoch << ',' << format_double(e.train_loss) << ',';
    if (e.holdout_accuracy) out << format_double(*e.holdout_accuracy);
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

namespace {

using Json = nlohmann::ordered_json;

std::string_view activation_name(Activation a) {
  return a == Activation::ReLU ? "relu" : "identity";
}

const nlohmann::json& field(const nlohmann::json& obj, const std::string& name,
                            const std::string& where) {
  if (!obj.is_object() || !obj.contains(name)) {
    throw ParseError(where, 0, "missing field '" + name + "'");
  }
  return obj.at(name);
}

template <typename T>
T field_as(const nlohmann::json& obj, const std::string& name, const std::string& where) {
  try {
    return field(obj, name, where).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError(where, 0, "field '" + name + "' has the wrong type");
  }
}

}  // namespace

void save_model(const ClassifierModel& model, const std::filesystem::path& path) {
  model.validate();
  Json doc;
  doc["format"] = "trackguard-model";
  doc["version"] = model.version;
  doc["input_dim"] = model.input_dim;
  doc["class_labels"] = model.class_labels;
  doc["rng_seed"] = model.rng_seed;
  auto& layers = doc["layers"] = Json::array();
  for (const auto& layer : model.layers) {
    Json l;
    l["type"] = "dense";
    l["in"] = layer.in();
    l["out"] = layer.out();
    l["activation"] = activation_name(layer.activation);
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(layer.weights.size()));
    for (Eigen::Index r = 0; r < layer.in(); ++r) {
      for (Eigen::Index c = 0; c < layer.out(); ++c) w.push_back(layer.weights(r, c));
    }
    l["weights"] = std::move(w);
    l["bias"] = std::vector<double>(layer.bias.data(), layer.bias.data() + layer.bias.size());
    layers.push_back(std::move(l));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write model " + path.string());
  out << doc.dump(1) << '\n';
  if (!out) throw IoError("failed writing model " + path.string());
}

ClassifierModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model " + path.string());
  const std::string where = path.string();
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(where, 0, std::string("corrupt model file: ") + ex.what());
  }
  if (field_as<std::string>(doc, "format", where) != "trackguard-model") {
    throw ParseError(where, 0, "field 'format' is not trackguard-model");
  }
  const int version = field_as<int>(doc, "version", where);
  if (version != kModelFormatVersion) {
    throw VersionError(where + ": model format version " + std::to_string(version) +
                       " is not supported (expected " + std::to_string(kModelFormatVersion) + ")");
  }
  ClassifierModel model;
  model.version = version;
  model.input_dim = field_as<Eigen::Index>(doc, "input_dim", where);
  model.class_labels = field_as<std::vector<Label>>(doc, "class_labels", where);
  model.rng_seed = field_as<std::uint64_t>(doc, "rng_seed", where);
  const auto& layers = field(doc, "layers", where);
  if (!layers.is_array()) throw ParseError(where, 0, "field 'layers' must be an array");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& l = layers[k];
    const std::string prefix = "layers[" + std::to_string(k) + "].";
    auto sub = [&](const std::string& name) { return prefix + name; };
    if (!l.is_object()) throw ParseError(where, 0, "field '" + prefix + "' must be an object");
    auto get = [&](const std::string& name) -> const nlohmann::json& {
      if (!l.contains(name)) throw ParseError(where, 0, "missing field '" + sub(name) + "'");
      return l.at(name);
    };
    DenseLayer<double> layer;
    std::vector<double> w, b;
    Eigen::Index rows = 0, cols = 0;
    std::string act;
    try {
      rows = get("in").get<Eigen::Index>();
      cols = get("out").get<Eigen::Index>();
      act = get("activation").get<std::string>();
      w = get("weights").get<std::vector<double>>();
      b = get("bias").get<std::vector<double>>();
    } catch (const nlohmann::json::exception&) {
      throw ParseError(where, 0, "field in '" + prefix + "' has the wrong type");
    }
    if (act == "relu") {
      layer.activation = Activation::ReLU;
    } else if (act == "identity") {
      layer.activation = Activation::Identity;
    } else {
      throw ParseError(where, 0, "field '" + sub("activation") + "' has unknown value " + act);
    }
    if (rows <= 0 || cols <= 0 || w.size() != static_cast<std::size_t>(rows * cols)) {
      throw ParseError(where, 0, "field '" + sub("weights") + "' does not match in x out");
    }
    if (b.size() != static_cast<std::size_t>(cols)) {
      throw ParseError(where, 0, "field '" + sub("bias") + "' does not match out");
    }
    layer.weights.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        layer.weights(r, c) = w[static_cast<std::size_t>(r * cols + c)];
      }
    }
    layer.bias = Eigen::Map<const Eigen::RowVectorXd>(b.data(), cols);
    model.layers.push_back(std::move(layer));
  }
  try {
    model.validate();
  } catch (const DomainError& ex) {
    throw ParseError(where, 0, ex.what());
  }
  return model;
}

}  // namespace trackguard
