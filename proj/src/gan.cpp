#include "perfed/gan.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "perfed/errors.hpp"

namespace perfed::gan {

void GeneratorSpec::validate() const {
  if (latent_dim < 1) throw ContractError("generator latent_dim must be >= 1");
  if (class_count < 1) throw ContractError("generator class_count must be >= 1");
  if (output_dim < 1) throw ContractError("generator output_dim must be >= 1");
  for (int w : hidden_widths) {
    if (w < 1) throw ContractError("generator hidden widths must be positive");
  }
}

std::vector<int> GeneratorSpec::layer_dims() const {
  std::vector<int> dims{latent_dim + class_count};
  dims.insert(dims.end(), hidden_widths.begin(), hidden_widths.end());
  dims.push_back(output_dim);
  return dims;
}

GeneratorSpec GeneratorSpec::mirror(const nn::ModelSpec& client, int latent_dim) {
  GeneratorSpec spec;
  spec.latent_dim = latent_dim;
  spec.class_count = client.num_classes;
  spec.hidden_widths.assign(client.hidden_widths.rbegin(), client.hidden_widths.rend());
  spec.output_dim = client.input_dim;
  return spec;
}

Generator init_generator(const GeneratorSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng = make_rng(seed, "generator-init");
  return {spec, nn::init_layers(spec.layer_dims(), rng)};
}

void GanOpts::validate() const {
  if (steps < 0) throw ContractError("gan steps must be nonnegative");
  if (!(gen_lr > 0.0) || !(disc_lr > 0.0)) throw ContractError("gan learning rates must be positive");
  if (batch_size < 1) throw ContractError("gan batch_size must be positive");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw ContractError("gan ema_decay must lie in [0, 1)");
  if (!(class_loss_weight >= 0.0)) throw ContractError("gan class_loss_weight must be nonnegative");
  if (dp) {
    if (!(dp->clip_norm > 0.0)) throw ContractError("dp clip_norm must be positive");
    if (!(dp->noise_multiplier >= 0.0)) throw ContractError("dp noise_multiplier must be nonnegative");
  }
}

Discriminator build_discriminator(const nn::ModelSpec& client_spec, const nn::Params& client_params,
                                  std::uint64_t seed) {
  client_spec.validate();
  require(client_params.layers.size() == client_spec.hidden_widths.size() + 1,
          "build_discriminator: params do not match the model spec");
  Discriminator disc;
  disc.feature_dim = client_spec.input_dim;
  disc.class_count = client_spec.num_classes;
  const std::size_t depth = client_spec.hidden_widths.size();
  for (std::size_t k = 0; k < depth; ++k) disc.net.layers.push_back(client_params.layers[k]);

  auto& first = disc.net.layers.front().weight;
  Matrix widened = Matrix::Zero(first.rows(), first.cols() + disc.class_count);
  widened.leftCols(first.cols()) = first;
  first = std::move(widened);

  Rng rng = make_rng(seed, "disc-head");
  nn::Params head = nn::init_layers({client_spec.hidden_widths.back(), 1}, rng);
  disc.net.layers.push_back(std::move(head.layers.front()));
  return disc;
}

void write_back_trunk(const Discriminator& disc, nn::Params& client_params) {
  require(client_params.layers.size() == disc.trunk_depth() + 1, "write_back_trunk: depth mismatch");
  for (std::size_t k = 0; k < disc.trunk_depth(); ++k) {
    const auto& src = disc.net.layers[k];
    auto& dst = client_params.layers[k];
    dst.weight = k == 0 ? Matrix(src.weight.leftCols(disc.feature_dim)) : src.weight;
    dst.bias = src.bias;
  }
}

nn::Gradient dp_clip_noise(nn::Gradient grad, double clip_norm, double noise_multiplier, Rng& rng) {
  require(clip_norm > 0.0, "dp_clip_noise: clip_norm must be positive");
  require(noise_multiplier >= 0.0, "dp_clip_noise: noise_multiplier must be nonnegative");
  const double norm = std::sqrt(nn::squared_norm(grad));
  if (norm > clip_norm) nn::scale_in_place(grad, clip_norm / norm);
  if (noise_multiplier > 0.0) {
    std::normal_distribution<double> noise(0.0, noise_multiplier * clip_norm);
    for (auto& layer : grad.layers) {
      for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] += noise(rng);
      for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) += noise(rng);
    }
  }
  return grad;
}

nn::Gradient dp_clip_noise(nn::Gradient grad, double clip_norm, double noise_multiplier, std::uint64_t seed) {
  Rng rng = make_rng(seed, "dp-noise");
  return dp_clip_noise(std::move(grad), clip_norm, noise_multiplier, rng);
}

namespace {

Matrix one_hot(std::span<const int> labels, int class_count) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), class_count);
  for (std::size_t i = 0; i < labels.size(); ++i) out(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  return out;
}

Matrix hstack(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

Matrix latent_noise(Eigen::Index rows, int latent_dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix z(rows, latent_dim);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (int c = 0; c < latent_dim; ++c) z(r, c) = normal(rng);
  }
  return z;
}

double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

// log(1 + e^x) without overflow.
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

CganResult train_cgan(const nn::Params& client_params, const nn::ModelSpec& client_spec, const Generator& gen,
                      const LabeledDataset& train_set, const GanOpts& opts, std::uint64_t seed) {
  opts.validate();
  if (train_set.empty()) throw ContractError("train_cgan: empty training set");
  require(train_set.dim() == client_spec.input_dim, "train_cgan: dataset dimension does not match the model");
  require(gen.spec.output_dim == client_spec.input_dim, "train_cgan: generator output does not match the model");
  require(gen.spec.class_count == client_spec.num_classes, "train_cgan: generator classes do not match the model");
  if (opts.steps == 0) return {client_params, gen};

  Discriminator disc = build_discriminator(client_spec, client_params, derive_seed(seed, "disc"));
  Generator g = gen;
  nn::Params averaged = gen.params;
  Rng rng = make_rng(seed, "cgan");
  Rng dp_rng = make_rng(seed, "cgan-dp");
  const int k = client_spec.num_classes;
  const auto n = static_cast<Eigen::Index>(opts.batch_size);
  std::uniform_int_distribution<std::size_t> pick(0, train_set.size() - 1);

  Matrix real(n, train_set.dim());
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int step = 0; step < opts.steps; ++step) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const std::size_t r = pick(rng);
      real.row(i) = train_set.features.row(static_cast<Eigen::Index>(r));
      labels[static_cast<std::size_t>(i)] = train_set.labels[r];
    }
    const Matrix cond = one_hot(labels, k);

    // Discriminator step: real rows scored as real, generated rows as fake.
    const Matrix fake = nn::forward_logits(g.params, hstack(latent_noise(n, g.spec.latent_dim, rng), cond));
    const Matrix both = [&] {
      Matrix m(2 * n, train_set.dim() + k);
      m << hstack(real, cond), hstack(fake, cond);
      return m;
    }();
    nn::ForwardCache dcache = nn::forward_cached(disc.net, both);
    Matrix dlogit(2 * n, 1);
    double disc_loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double lr = dcache.output()(i, 0);
      const double lf = dcache.output()(n + i, 0);
      disc_loss += softplus(-lr) + softplus(lf);
      dlogit(i, 0) = -sigmoid(-lr) / static_cast<double>(n);
      dlogit(n + i, 0) = sigmoid(lf) / static_cast<double>(n);
    }
    disc_loss /= static_cast<double>(n);
    if (!std::isfinite(disc_loss)) {
      throw NumericDivergence("non-finite discriminator loss at GAN step " + std::to_string(step));
    }
    nn::Gradient dgrad = nn::backward(disc.net, dcache, dlogit).grad;
    if (opts.dp) dgrad = dp_clip_noise(std::move(dgrad), opts.dp->clip_norm, opts.dp->noise_multiplier, dp_rng);
    nn::add_scaled(disc.net, dgrad, -opts.disc_lr);

    // Generator step: push generated rows towards a "real" score.
    const Matrix gen_in = hstack(latent_noise(n, g.spec.latent_dim, rng), cond);
    nn::ForwardCache gcache = nn::forward_cached(g.params, gen_in);
    nn::ForwardCache scache = nn::forward_cached(disc.net, hstack(gcache.output(), cond));
    Matrix glogit(n, 1);
    double gen_loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double l = scache.output()(i, 0);
      gen_loss += softplus(-l);
      glogit(i, 0) = -sigmoid(-l) / static_cast<double>(n);
    }
    gen_loss /= static_cast<double>(n);
    Matrix dsample = nn::backward(disc.net, scache, glogit).input_grad.leftCols(train_set.dim());
    if (opts.class_loss_weight > 0.0) {
      nn::Params classifier = client_params;
      write_back_trunk(disc, classifier);
      nn::ForwardCache ccache = nn::forward_cached(classifier, gcache.output());
      Matrix dclass = ccache.output();
      for (Eigen::Index i = 0; i < n; ++i) {
        const double m = dclass.row(i).maxCoeff();
        dclass.row(i) = (dclass.row(i).array() - m).exp().matrix();
        const double sum = dclass.row(i).sum();
        gen_loss += opts.class_loss_weight * (std::log(sum) - (ccache.output()(i, labels[static_cast<std::size_t>(i)]) - m)) /
                    static_cast<double>(n);
        dclass.row(i) /= sum;
        dclass(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
      }
      dclass *= opts.class_loss_weight / static_cast<double>(n);
      dsample += nn::backward(classifier, ccache, dclass).input_grad;
    }
    if (!std::isfinite(gen_loss)) {
      throw NumericDivergence("non-finite generator loss at GAN step " + std::to_string(step));
    }
    nn::add_scaled(g.params, nn::backward(g.params, gcache, dsample).grad, -opts.gen_lr);
    if (!g.params.all_finite() || !disc.net.all_finite()) {
      throw NumericDivergence("non-finite GAN parameters at step " + std::to_string(step));
    }
    nn::scale_in_place(averaged, opts.ema_decay);
    nn::add_scaled(averaged, g.params, 1.0 - opts.ema_decay);
  }

  g.params = std::move(averaged);
  CganResult out{client_params, std::move(g)};
  write_back_trunk(disc, out.client_params);
  return out;
}

LabeledDataset GeneratedBatch::to_dataset() const {
  LabeledDataset out;
  out.class_count = class_count;
  out.features = features;
  out.labels = labels;
  out.ids.assign(labels.size(), LabeledDataset::kSyntheticId);
  return out;
}

GeneratedBatch generate_labeled(const Generator& gen, const std::vector<std::size_t>& class_counts,
                                std::uint64_t seed, int origin) {
  require(class_counts.size() == static_cast<std::size_t>(gen.spec.class_count),
          "generate_labeled: one count per class required");
  const std::size_t total = std::accumulate(class_counts.begin(), class_counts.end(), std::size_t{0});
  if (total == 0) throw ContractError("generate_labeled: all class counts are zero");

  GeneratedBatch batch;
  batch.class_count = gen.spec.class_count;
  batch.labels.reserve(total);
  for (std::size_t c = 0; c < class_counts.size(); ++c) batch.labels.insert(batch.labels.end(), class_counts[c], static_cast<int>(c));
  batch.origins.assign(total, origin);

  Rng rng = make_rng(seed, "generate");
  const Matrix z = latent_noise(static_cast<Eigen::Index>(total), gen.spec.latent_dim, rng);
  batch.features = nn::forward_logits(gen.params, hstack(z, one_hot(batch.labels, gen.spec.class_count)));
  if (!batch.features.allFinite()) throw NumericDivergence("generator produced non-finite samples");
  return batch;
}

}  // namespace perfed::gan
