#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "perfed/dataset.hpp"
#include "perfed/rng.hpp"

namespace perfed::nn {

enum class Activation { relu };

/// Architecture of one client's private dense classifier.
struct ModelSpec {
  int input_dim = 0;
  std::vector<int> hidden_widths;
  int num_classes = 0;
  Activation activation = Activation::relu;

  void validate() const;
  /// input_dim, hidden widths..., num_classes
  std::vector<int> layer_dims() const;
  bool operator==(const ModelSpec&) const = default;
};

struct ArchSpace {
  std::vector<int> depth_choices;
  std::vector<int> width_menu;
};

/// Draws a depth from `space.depth_choices` and that many widths from the menu,
/// returned in ascending order.
ModelSpec sample_architecture(const ArchSpace& space, int input_dim, int num_classes, std::uint64_t seed);

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out

  bool operator==(const DenseLayer& o) const {
    return weight.rows() == o.weight.rows() && weight.cols() == o.weight.cols() && weight == o.weight &&
           bias.size() == o.bias.size() && bias == o.bias;
  }
};

/// Weights of a ReLU multilayer perceptron with a linear output layer. The
/// same structure doubles as a gradient.
struct Params {
  std::vector<DenseLayer> layers;

  int input_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().weight.cols()); }
  int output_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().weight.rows()); }
  std::size_t parameter_count() const;
  bool same_shape(const Params& other) const;
  bool all_finite() const;
  bool operator==(const Params&) const = default;

  Params zeros_like() const;
  static Params zeros(const std::vector<int>& dims);
};

using Gradient = Params;

/// target += scale * delta
void add_scaled(Params& target, const Params& delta, double scale);
void scale_in_place(Params& target, double factor);
double squared_norm(const Params& p);
double distance(const Params& a, const Params& b);

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for every weight and bias.
Params init_layers(const std::vector<int>& dims, Rng& rng);
Params init_params(const ModelSpec& spec, std::uint64_t seed);

/// Rows of `inputs` are samples; returns one output row per input row.
Matrix forward_logits(const Params& params, const Matrix& inputs);

struct ForwardCache {
  // activations[0] is the input, activations[k] the output of layer k-1
  // (post-ReLU for hidden layers, raw for the last).
  std::vector<Matrix> activations;
  const Matrix& output() const { return activations.back(); }
};

ForwardCache forward_cached(const Params& params, const Matrix& inputs);

struct Backward {
  Gradient grad;
  Matrix input_grad;
};

/// Back-propagates dLoss/dOutput through the network.
Backward backward(const Params& params, const ForwardCache& cache, const Matrix& output_grad);

struct LossGrad {
  double loss = 0.0;
  Gradient grad;
};

/// Mean softmax cross-entropy over the rows and its gradient.
LossGrad cross_entropy_loss_grad(const Params& params, const Matrix& features, std::span<const int> labels);
double cross_entropy_loss(const Params& params, const Matrix& features, std::span<const int> labels);

struct TrainOpts {
  double learning_rate = 0.05;
  int epochs = 20;
  int batch_size = 16;
  double prox_mu = 0.0;
  std::optional<Params> prox_anchor;

  static TrainOpts with_epochs(int n) {
    TrainOpts o;
    o.epochs = n;
    return o;
  }
  void validate() const;
};

/// Mini-batch SGD on mean cross-entropy plus (prox_mu/2)||w - anchor||^2.
/// Batch order is drawn from `seed`; throws NumericDivergence on a
/// non-finite loss or parameter.
Params train_classifier(Params params, const LabeledDataset& data, const TrainOpts& opts, std::uint64_t seed);

/// Argmax per row, ties to the lowest class index.
std::vector<int> predict(const Params& params, const Matrix& inputs);
double evaluate_accuracy(const Params& params, const LabeledDataset& data);

/// Central differences of an arbitrary scalar loss, entry by entry.
Gradient finite_diff_grad(const Params& params, const std::function<double(const Params&)>& loss, double epsilon);
/// Central differences of the mean cross-entropy on `batch`.
Gradient finite_diff_grad(const Params& params, const LabeledDataset& batch, double epsilon);

}  // namespace perfed::nn
