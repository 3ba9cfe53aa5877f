#include "perfed/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "perfed/errors.hpp"

namespace perfed::nn {

void ModelSpec::validate() const {
  if (input_dim < 1) throw ContractError("model input_dim must be >= 1");
  if (hidden_widths.empty() || hidden_widths.size() > 3) {
    throw ContractError("model must have 1 to 3 hidden layers");
  }
  for (int w : hidden_widths) {
    if (w < 1) throw ContractError("hidden width must be >= 1");
  }
  if (num_classes < 2) throw ContractError("num_classes must be >= 2");
}

std::vector<int> ModelSpec::layer_dims() const {
  std::vector<int> dims{input_dim};
  dims.insert(dims.end(), hidden_widths.begin(), hidden_widths.end());
  dims.push_back(num_classes);
  return dims;
}

ModelSpec sample_architecture(const ArchSpace& space, int input_dim, int num_classes, std::uint64_t seed) {
  if (space.width_menu.empty()) throw ConfigError("architecture width menu is empty");
  if (space.depth_choices.empty()) throw ConfigError("architecture depth choices are empty");
  for (int d : space.depth_choices) {
    if (d < 1 || d > 3) throw ConfigError("architecture depth choices must lie in {1,2,3}");
  }
  for (int w : space.width_menu) {
    if (w < 1) throw ConfigError("architecture widths must be positive");
  }
  Rng rng = make_rng(seed, "architecture");
  std::uniform_int_distribution<std::size_t> pick_depth(0, space.depth_choices.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_width(0, space.width_menu.size() - 1);
  const int depth = space.depth_choices[pick_depth(rng)];

  ModelSpec spec;
  spec.input_dim = input_dim;
  spec.num_classes = num_classes;
  for (int i = 0; i < depth; ++i) spec.hidden_widths.push_back(space.width_menu[pick_width(rng)]);
  std::sort(spec.hidden_widths.begin(), spec.hidden_widths.end());
  spec.validate();
  return spec;
}

std::size_t Params::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

bool Params::same_shape(const Params& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].weight.rows() != other.layers[i].weight.rows() ||
        layers[i].weight.cols() != other.layers[i].weight.cols() ||
        layers[i].bias.size() != other.layers[i].bias.size()) {
      return false;
    }
  }
  return true;
}

bool Params::all_finite() const {
  return std::all_of(layers.begin(), layers.end(),
                     [](const DenseLayer& l) { return l.weight.allFinite() && l.bias.allFinite(); });
}

Params Params::zeros_like() const {
  Params out;
  out.layers.reserve(layers.size());
  for (const auto& l : layers) {
    out.layers.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
  }
  return out;
}

Params Params::zeros(const std::vector<int>& dims) {
  Params out;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    out.layers.push_back({Matrix::Zero(dims[i + 1], dims[i]), Vector::Zero(dims[i + 1])});
  }
  return out;
}

void add_scaled(Params& target, const Params& delta, double scale) {
  require(target.same_shape(delta), "add_scaled: shape mismatch");
  for (std::size_t i = 0; i < target.layers.size(); ++i) {
    target.layers[i].weight += scale * delta.layers[i].weight;
    target.layers[i].bias += scale * delta.layers[i].bias;
  }
}

void scale_in_place(Params& target, double factor) {
  for (auto& l : target.layers) {
    l.weight *= factor;
    l.bias *= factor;
  }
}

double squared_norm(const Params& p) {
  double s = 0.0;
  for (const auto& l : p.layers) s += l.weight.squaredNorm() + l.bias.squaredNorm();
  return s;
}

double distance(const Params& a, const Params& b) {
  require(a.same_shape(b), "distance: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    s += (a.layers[i].weight - b.layers[i].weight).squaredNorm() + (a.layers[i].bias - b.layers[i].bias).squaredNorm();
  }
  return std::sqrt(s);
}

Params init_layers(const std::vector<int>& dims, Rng& rng) {
  Params out;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[i]));
    std::uniform_real_distribution<double> u(-bound, bound);
    DenseLayer layer{Matrix(dims[i + 1], dims[i]), Vector(dims[i + 1])};
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = u(rng);
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = u(rng);
    out.layers.push_back(std::move(layer));
  }
  return out;
}

Params init_params(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng = make_rng(seed, "init");
  return init_layers(spec.layer_dims(), rng);
}

namespace {

void check_input(const Params& params, const Matrix& inputs) {
  require(!params.layers.empty(), "network has no layers");
  if (inputs.cols() != params.input_dim()) {
    throw ContractError("input dimension " + std::to_string(inputs.cols()) + " does not match network input " +
                        std::to_string(params.input_dim()));
  }
}

Matrix affine(const DenseLayer& layer, const Matrix& x) {
  Matrix z = x * layer.weight.transpose();
  z.rowwise() += layer.bias.transpose();
  return z;
}

}  // namespace

Matrix forward_logits(const Params& params, const Matrix& inputs) {
  check_input(params, inputs);
  Matrix a = inputs;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    a = affine(params.layers[i], a);
    if (i + 1 < params.layers.size()) a = a.cwiseMax(0.0);
  }
  return a;
}

ForwardCache forward_cached(const Params& params, const Matrix& inputs) {
  check_input(params, inputs);
  ForwardCache cache;
  cache.activations.reserve(params.layers.size() + 1);
  cache.activations.push_back(inputs);
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    Matrix z = affine(params.layers[i], cache.activations.back());
    if (i + 1 < params.layers.size()) z = z.cwiseMax(0.0);
    cache.activations.push_back(std::move(z));
  }
  return cache;
}

Backward backward(const Params& params, const ForwardCache& cache, const Matrix& output_grad) {
  require(cache.activations.size() == params.layers.size() + 1, "backward: cache does not match network");
  Backward out;
  out.grad = params.zeros_like();
  Matrix delta = output_grad;
  for (std::size_t k = params.layers.size(); k-- > 0;) {
    const Matrix& in = cache.activations[k];
    out.grad.layers[k].weight = delta.transpose() * in;
    out.grad.layers[k].bias = delta.colwise().sum().transpose();
    Matrix back = delta * params.layers[k].weight;
    if (k > 0) {
      // ReLU: the post-activation is positive exactly where the unit was active.
      back = back.cwiseProduct((in.array() > 0.0).cast<double>().matrix());
    }
    delta = std::move(back);
  }
  out.input_grad = std::move(delta);
  return out;
}

namespace {

// Returns mean loss; fills dlogits with d(mean loss)/d(logits) when non-null.
double softmax_cross_entropy(const Matrix& logits, std::span<const int> labels, Matrix* dlogits) {
  const auto n = logits.rows();
  require(static_cast<std::size_t>(n) == labels.size(), "label count does not match batch size");
  require(n > 0, "cross-entropy on an empty batch");
  double total = 0.0;
  if (dlogits) dlogits->resize(n, logits.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    require(y >= 0 && y < logits.cols(), "label outside the model's class range");
    const double m = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - m).exp().matrix();
    const double sum = e.sum();
    total += std::log(sum) + m - logits(i, y);
    if (dlogits) {
      dlogits->row(i) = e / sum;
      (*dlogits)(i, y) -= 1.0;
    }
  }
  if (dlogits) *dlogits /= static_cast<double>(n);
  return total / static_cast<double>(n);
}

}  // namespace

LossGrad cross_entropy_loss_grad(const Params& params, const Matrix& features, std::span<const int> labels) {
  ForwardCache cache = forward_cached(params, features);
  Matrix dlogits;
  LossGrad out;
  out.loss = softmax_cross_entropy(cache.output(), labels, &dlogits);
  out.grad = backward(params, cache, dlogits).grad;
  return out;
}

double cross_entropy_loss(const Params& params, const Matrix& features, std::span<const int> labels) {
  return softmax_cross_entropy(forward_logits(params, features), labels, nullptr);
}

void TrainOpts::validate() const {
  if (!(learning_rate > 0.0)) throw ContractError("learning_rate must be positive");
  if (epochs < 0) throw ContractError("epochs must be nonnegative");
  if (batch_size < 1) throw ContractError("batch_size must be positive");
  if (!(prox_mu >= 0.0)) throw ContractError("prox_mu must be nonnegative");
  if (prox_mu > 0.0 && !prox_anchor) throw ContractError("prox_mu > 0 requires a prox_anchor");
}

Params train_classifier(Params params, const LabeledDataset& data, const TrainOpts& opts, std::uint64_t seed) {
  opts.validate();
  if (data.empty()) throw ContractError("train_classifier: empty dataset");
  require(data.dim() == params.input_dim(), "train_classifier: dataset dimension does not match model");
  for (int y : data.labels) {
    require(y >= 0 && y < params.output_dim(), "train_classifier: label outside the model's class range");
  }
  const bool prox = opts.prox_mu > 0.0;
  if (prox) require(opts.prox_anchor->same_shape(params), "prox_anchor shape does not match params");

  Rng rng = make_rng(seed, "train");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(opts.batch_size);

  Matrix xb;
  std::vector<int> yb;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      xb.resize(static_cast<Eigen::Index>(end - start), data.features.cols());
      yb.resize(end - start);
      for (std::size_t j = start; j < end; ++j) {
        xb.row(static_cast<Eigen::Index>(j - start)) = data.features.row(static_cast<Eigen::Index>(order[j]));
        yb[j - start] = data.labels[order[j]];
      }
      LossGrad lg = cross_entropy_loss_grad(params, xb, yb);
      if (prox) {
        Params diff = params;
        add_scaled(diff, *opts.prox_anchor, -1.0);
        lg.loss += 0.5 * opts.prox_mu * squared_norm(diff);
        add_scaled(lg.grad, diff, opts.prox_mu);
      }
      if (!std::isfinite(lg.loss)) {
        throw NumericDivergence("non-finite training loss at epoch " + std::to_string(epoch));
      }
      add_scaled(params, lg.grad, -opts.learning_rate);
      if (!params.all_finite()) {
        throw NumericDivergence("non-finite parameters at epoch " + std::to_string(epoch));
      }
    }
  }
  return params;
}

std::vector<int> predict(const Params& params, const Matrix& inputs) {
  const Matrix logits = forward_logits(params, inputs);
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c) {
      if (logits(i, c) > logits(i, best)) best = c;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

double evaluate_accuracy(const Params& params, const LabeledDataset& data) {
  if (data.empty()) throw ContractError("evaluate_accuracy: empty dataset");
  const auto preds = predict(params, data.features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == data.labels[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

Gradient finite_diff_grad(const Params& params, const std::function<double(const Params&)>& loss, double epsilon) {
  require(epsilon > 0.0, "finite_diff_grad: epsilon must be positive");
  Gradient grad = params.zeros_like();
  Params probe = params;
  auto central = [&](double& slot) {
    const double saved = slot;
    slot = saved + epsilon;
    const double up = loss(probe);
    slot = saved - epsilon;
    const double down = loss(probe);
    slot = saved;
    return (up - down) / (2.0 * epsilon);
  };
  for (std::size_t k = 0; k < probe.layers.size(); ++k) {
    auto& layer = probe.layers[k];
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) grad.layers[k].weight(r, c) = central(layer.weight(r, c));
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) grad.layers[k].bias(r) = central(layer.bias(r));
  }
  return grad;
}

Gradient finite_diff_grad(const Params& params, const LabeledDataset& batch, double epsilon) {
  return finite_diff_grad(
      params, [&](const Params& p) { return cross_entropy_loss(p, batch.features, batch.labels); }, epsilon);
}

}  // namespace perfed::nn
