#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "perfed/dataset.hpp"

namespace perfed::datagen {

/// Gaussian-cloud classification task: one isotropic cloud per class.
struct MixtureSpec {
  int class_count = 0;
  int dim = 0;
  std::vector<Vector> means;    // one per class
  std::vector<double> scales;   // per-class standard deviation
  std::size_t train_size = 0;
  std::size_t test_size = 0;
};

/// Means evenly spaced on a circle of `radius` in the first two coordinates
/// (dim >= 2), or on a line for dim == 1.
std::vector<Vector> ring_means(int class_count, int dim, double radius);

struct Task {
  LabeledDataset train;
  LabeledDataset test;
};

/// Balanced (up to rounding) train and test draws; rows are shuffled and `ids`
/// are row positions.
Task make_mixture_task(const MixtureSpec& spec, std::uint64_t seed);

enum class PartitionMode { iid, noniid };

struct PartitionPlan {
  int client_count = 0;
  std::size_t per_client_size = 0;
  PartitionMode mode = PartitionMode::iid;
  double major_class_fraction = 1.0;
  double major_sample_fraction = 1.0;
  std::uint64_t seed = 0;

  void validate(std::size_t pool_size) const;
  /// ceil(major_class_fraction * class_count), at least 1
  int major_class_count(int class_count) const;
  /// round(major_sample_fraction * per_client_size)
  std::size_t major_sample_count() const;
};

std::vector<LabeledDataset> partition_iid(const LabeledDataset& pool, const PartitionPlan& plan);

/// Per client: an independent uniform subset of major classes, the major share
/// of the quota drawn uniformly from the remaining major-class samples and the
/// rest uniformly from the remaining samples of all other classes. Draws are
/// without replacement across clients. When `major_classes` is given it
/// receives each client's sorted major classes.
std::vector<LabeledDataset> partition_noniid(const LabeledDataset& pool, const PartitionPlan& plan,
                                             std::vector<std::vector<int>>* major_classes = nullptr);

/// Dispatches on plan.mode. IID clients report every class as major.
std::vector<LabeledDataset> partition(const LabeledDataset& pool, const PartitionPlan& plan,
                                      std::vector<std::vector<int>>* major_classes = nullptr);

/// Largest subsample of `global_test` whose per-class counts are
/// floor(T * h_c / H) for the training histogram h.
LabeledDataset client_test_view(const LabeledDataset& global_test, const std::vector<std::size_t>& train_histogram,
                                std::uint64_t seed);

}  // namespace perfed::datagen
