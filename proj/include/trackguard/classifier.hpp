#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "trackguard/error.hpp"
#include "trackguard/preprocess.hpp"
#include "trackguard/signalgen.hpp"

namespace trackguard {

enum class Activation { ReLU, Identity };

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

// y = activation(x * weights + bias) for a row of inputs x.
template <typename Scalar>
struct DenseLayer {
  MatrixX<Scalar> weights;  // in x out
  RowVectorX<Scalar> bias;  // 1 x out
  Activation activation = Activation::Identity;

  Eigen::Index in() const { return weights.rows(); }
  Eigen::Index out() const { return weights.cols(); }
};

inline constexpr int kModelFormatVersion = 1;

template <typename Scalar>
struct BasicClassifierModel {
  std::vector<DenseLayer<Scalar>> layers;
  // Output index -> class label, strictly increasing so that the lowest
  // output index is also the lowest class id.
  std::vector<Label> class_labels;
  Eigen::Index input_dim = 0;
  std::uint64_t rng_seed = 0;
  int version = kModelFormatVersion;

  Eigen::Index num_classes() const { return static_cast<Eigen::Index>(class_labels.size()); }

  // Output index of `label`, or -1.
  Eigen::Index index_of(Label label) const {
    for (std::size_t i = 0; i < class_labels.size(); ++i) {
      if (class_labels[i] == label) return static_cast<Eigen::Index>(i);
    }
    return -1;
  }

  void validate() const {
    if (layers.empty()) throw DomainError("model has no layers");
    if (class_labels.size() < 2) throw DomainError("model needs at least two classes");
    for (std::size_t i = 1; i < class_labels.size(); ++i) {
      if (class_labels[i] <= class_labels[i - 1]) {
        throw DomainError("model class labels must be strictly increasing");
      }
    }
    Eigen::Index width = input_dim;
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const auto& layer = layers[k];
      if (layer.in() != width || layer.bias.size() != layer.out()) {
        throw DomainError("layer " + std::to_string(k) + " shape does not chain");
      }
      if (!layer.weights.allFinite() || !layer.bias.allFinite()) {
        throw DomainError("layer " + std::to_string(k) + " holds non-finite parameters");
      }
      width = layer.out();
    }
    if (width != num_classes() || layers.back().activation != Activation::Identity) {
      throw DomainError("last layer must map to num_classes with identity activation");
    }
  }

  bool operator==(const BasicClassifierModel& other) const {
    if (class_labels != other.class_labels || input_dim != other.input_dim ||
        rng_seed != other.rng_seed || version != other.version ||
        layers.size() != other.layers.size()) {
      return false;
    }
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const auto& a = layers[k];
      const auto& b = other.layers[k];
      if (a.activation != b.activation || a.weights.rows() != b.weights.rows() ||
          a.weights.cols() != b.weights.cols() || a.weights != b.weights || a.bias != b.bias) {
        return false;
      }
    }
    return true;
  }
};

using ClassifierModel = BasicClassifierModel<double>;

namespace detail {

template <typename Scalar>
MatrixX<Scalar> activate(const MatrixX<Scalar>& z, Activation activation) {
  if (activation == Activation::ReLU) return z.cwiseMax(Scalar(0));
  return z;
}

}  // namespace detail

// Logits, one row per input row.
template <typename Scalar, typename Derived>
MatrixX<Scalar> forward(const BasicClassifierModel<Scalar>& model,
                        const Eigen::MatrixBase<Derived>& batch) {
  if (batch.cols() != model.input_dim) {
    throw DomainError("input dimension " + std::to_string(batch.cols()) + " != model input_dim " +
                      std::to_string(model.input_dim));
  }
  MatrixX<Scalar> x = batch.template cast<Scalar>();
  for (const auto& layer : model.layers) {
    MatrixX<Scalar> z = x * layer.weights;
    z.rowwise() += layer.bias;
    x = detail::activate(z, layer.activation);
  }
  return x;
}

// Max-subtracted softmax of one logit vector.
template <typename Derived>
VectorX<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  const Scalar top = logits.maxCoeff();
  VectorX<Scalar> e = (logits.derived().reshaped().array() - top).exp().matrix();
  return e / e.sum();
}

// Row-wise softmax of a logit matrix.
template <typename Derived>
MatrixX<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> p = logits;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    p.row(i) = softmax(logits.row(i)).transpose();
  }
  return p;
}

// log softmax of one row, computed without forming the probabilities.
template <typename Derived>
RowVectorX<typename Derived::Scalar> log_softmax_row(const Eigen::MatrixBase<Derived>& row) {
  using Scalar = typename Derived::Scalar;
  const Scalar top = row.maxCoeff();
  const Scalar lse = top + std::log((row.array() - top).exp().sum());
  return row.array() - lse;
}

template <typename Scalar>
struct LayerGradient {
  MatrixX<Scalar> weights;
  RowVectorX<Scalar> bias;
};

template <typename Scalar>
struct LossAndGradients {
  Scalar loss = 0;
  std::vector<LayerGradient<Scalar>> grads;  // one per layer
};

// Mean cross-entropy over the batch plus l2/2 * sum of squared weights
// (biases are not decayed). `targets` holds output indices.
template <typename Scalar, typename Derived>
LossAndGradients<Scalar> loss_and_gradients(const BasicClassifierModel<Scalar>& model,
                                            const Eigen::MatrixBase<Derived>& batch,
                                            const std::vector<Eigen::Index>& targets, Scalar l2) {
  const Eigen::Index n = batch.rows();
  if (static_cast<std::size_t>(n) != targets.size()) {
    throw DomainError("batch rows and label count differ");
  }
  if (n == 0) throw DomainError("empty batch");
  for (const auto t : targets) {
    if (t < 0 || t >= model.num_classes()) {
      throw DomainError("label index " + std::to_string(t) + " out of range");
    }
  }
  if (batch.cols() != model.input_dim) throw DomainError("input dimension mismatch");

  const std::size_t depth = model.layers.size();
  std::vector<MatrixX<Scalar>> inputs(depth);  // input to each layer
  std::vector<MatrixX<Scalar>> pre(depth);     // pre-activations
  MatrixX<Scalar> x = batch.template cast<Scalar>();
  for (std::size_t k = 0; k < depth; ++k) {
    const auto& layer = model.layers[k];
    inputs[k] = x;
    pre[k] = x * layer.weights;
    pre[k].rowwise() += layer.bias;
    x = detail::activate(pre[k], layer.activation);
  }

  LossAndGradients<Scalar> out;
  MatrixX<Scalar> delta(n, model.num_classes());
  Scalar nll = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const RowVectorX<Scalar> logp = log_softmax_row(x.row(i));
    nll -= logp[targets[static_cast<std::size_t>(i)]];
    delta.row(i) = logp.array().exp();
    delta(i, targets[static_cast<std::size_t>(i)]) -= Scalar(1);
  }
  delta /= static_cast<Scalar>(n);
  Scalar penalty = 0;
  for (const auto& layer : model.layers) penalty += layer.weights.squaredNorm();
  out.loss = nll / static_cast<Scalar>(n) + l2 * penalty / Scalar(2);

  out.grads.resize(depth);
  for (std::size_t k = depth; k-- > 0;) {
    const auto& layer = model.layers[k];
    if (layer.activation == Activation::ReLU) {
      delta = delta.cwiseProduct((pre[k].array() > Scalar(0)).template cast<Scalar>().matrix());
    }
    out.grads[k].weights = inputs[k].transpose() * delta + l2 * layer.weights;
    out.grads[k].bias = delta.colwise().sum();
    if (k > 0) delta = delta * layer.weights.transpose();
  }
  return out;
}

// Index of the largest entry; exact ties resolve to the lowest index.
template <typename Derived>
Eigen::Index argmax(const Eigen::MatrixBase<Derived>& values) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < values.size(); ++i) {
    if (values(i) > values(best)) best = i;
  }
  return best;
}

// Probabilities, one row per window.
Eigen::MatrixXd predict_proba(const ClassifierModel& model, const std::vector<PulseWindow>& windows);
Eigen::VectorXd predict_proba(const ClassifierModel& model, const PulseWindow& window);
// Class label (not output index) of the most probable class.
Label predict(const ClassifierModel& model, const PulseWindow& window);

struct LayerSpec {
  Eigen::Index out = 0;
  Activation activation = Activation::ReLU;
};

// Seeded He-uniform weights in +-sqrt(6 / fan_in), zero biases. The final
// Identity layer onto the classes is appended after `hidden`.
ClassifierModel make_model(Eigen::Index input_dim, const std::vector<Label>& class_labels,
                           const std::vector<Eigen::Index>& hidden, std::uint64_t seed);

struct SplitFractions {
  double train = 0.6;
  double calibration = 0.2;
  double test = 0.2;

  bool operator==(const SplitFractions&) const = default;
};

struct TrainConfig {
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::size_t epochs = 40;
  std::uint64_t seed = 1;
  double l2 = 3e-3;
  SplitFractions split;
  std::vector<Eigen::Index> hidden = {64, 32};

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> holdout_accuracy;
};

struct TrainingLog {
  std::vector<EpochStats> epochs;
};

struct TrainResult {
  ClassifierModel model;
  TrainingLog log;
};

// Mini-batch gradient descent over `windows`. `classes` fixes the model's
// outputs; every class must own at least one window. Deterministic for a
// fixed config.seed.
TrainResult train(const std::vector<PulseWindow>& windows, std::vector<Label> classes,
                  const TrainConfig& config, const std::vector<PulseWindow>* holdout = nullptr);

// Continues training an existing model (used by tests to start from a
// known initialisation).
TrainingLog train_from(ClassifierModel& model, const Eigen::MatrixXd& inputs,
                       const std::vector<Eigen::Index>& targets, const TrainConfig& config,
                       const Eigen::MatrixXd* holdout_inputs = nullptr,
                       const std::vector<Eigen::Index>* holdout_targets = nullptr);

double accuracy(const ClassifierModel& model, const Eigen::MatrixXd& inputs,
                const std::vector<Eigen::Index>& targets);

void write_training_log(const TrainingLog& log, const std::filesystem::path& path);

void save_model(const ClassifierModel& model, const std::filesystem::path& path);
ClassifierModel load_model(const std::filesystem::path& path);

}  // namespace trackguard
