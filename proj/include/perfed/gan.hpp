#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "perfed/nn.hpp"

namespace perfed::gan {

/// Class-conditional generator: (latent noise, one-hot label) -> feature vector.
struct GeneratorSpec {
  int latent_dim = 8;
  int class_count = 0;
  std::vector<int> hidden_widths;
  int output_dim = 0;

  void validate() const;
  std::vector<int> layer_dims() const;
  bool operator==(const GeneratorSpec&) const = default;

  /// Hidden widths are the client's widths reversed.
  static GeneratorSpec mirror(const nn::ModelSpec& client, int latent_dim);
};

struct Generator {
  GeneratorSpec spec;
  nn::Params params;
  bool operator==(const Generator&) const = default;
};

Generator init_generator(const GeneratorSpec& spec, std::uint64_t seed);

struct DpOpts {
  double clip_norm = 1.0;
  double noise_multiplier = 0.0;
};

struct GanOpts {
  int steps = 1000;
  double gen_lr = 0.1;
  double disc_lr = 0.1;
  int batch_size = 128;
  /// Weight of the auxiliary generator term: cross-entropy of the client's
  /// own classifier on generated rows against their conditioning labels.
  /// 0 leaves only the adversarial loss.
  double class_loss_weight = 0.3;
  /// The returned generator is the exponential moving average of the
  /// generator iterates with this decay; 0 returns the last iterate.
  double ema_decay = 0.99;
  std::optional<DpOpts> dp;

  void validate() const;
};

/// Client trunk (hidden layers, copied) with `class_count` extra zero input
/// columns for the one-hot label, followed by a fresh scalar real/fake head.
struct Discriminator {
  nn::Params net;
  int feature_dim = 0;
  int class_count = 0;

  std::size_t trunk_depth() const { return net.layers.size() - 1; }
};

Discriminator build_discriminator(const nn::ModelSpec& client_spec, const nn::Params& client_params,
                                  std::uint64_t seed);

/// Copies the trunk (feature columns only) back into the classifier's hidden
/// layers; the classification head is untouched.
void write_back_trunk(const Discriminator& disc, nn::Params& client_params);

/// Rescales to norm <= clip_norm, then adds N(0, (noise_multiplier*clip_norm)^2)
/// entrywise. With noise_multiplier == 0 no randomness is consumed.
nn::Gradient dp_clip_noise(nn::Gradient grad, double clip_norm, double noise_multiplier, Rng& rng);
nn::Gradient dp_clip_noise(nn::Gradient grad, double clip_norm, double noise_multiplier, std::uint64_t seed);

struct CganResult {
  nn::Params client_params;
  Generator generator;
};

/// Alternating discriminator / generator SGD steps (non-saturating generator
/// loss plus the weighted class term). The trained trunk is written back into
/// the returned classifier; its classification head is never modified.
CganResult train_cgan(const nn::Params& client_params, const nn::ModelSpec& client_spec, const Generator& gen,
                      const LabeledDataset& train_set, const GanOpts& opts, std::uint64_t seed);

/// Generated samples tagged with their conditioning label and origin client.
struct GeneratedBatch {
  Matrix features;
  std::vector<int> labels;
  std::vector<int> origins;
  int class_count = 0;

  std::size_t size() const { return labels.size(); }
  LabeledDataset to_dataset() const;
};

GeneratedBatch generate_labeled(const Generator& gen, const std::vector<std::size_t>& class_counts,
                                std::uint64_t seed, int origin = 0);

}  // namespace perfed::gan
