#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace perfed {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Labeled samples stored row-wise. `ids` holds each row's position in the
/// global pool it was drawn from (kSyntheticId for generated rows), which is
/// the identity used for overlap and disjointness checks.
struct LabeledDataset {
  static constexpr std::int64_t kSyntheticId = -1;

  Matrix features;                 // n x dim
  std::vector<int> labels;         // n
  std::vector<std::int64_t> ids;   // n
  int class_count = 0;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  int dim() const { return static_cast<int>(features.cols()); }

  std::vector<std::size_t> histogram() const;

  /// Rows at `rows`, in that order.
  LabeledDataset subset(std::span<const std::size_t> rows) const;

  /// Throws ContractError when labels or shapes break the invariants.
  void validate() const;

  bool operator==(const LabeledDataset& other) const;
};

/// Rows of `a` followed by rows of `b`.
LabeledDataset concat(const LabeledDataset& a, const LabeledDataset& b);

}  // namespace perfed
