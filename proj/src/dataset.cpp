#include "perfed/dataset.hpp"

#include "perfed/errors.hpp"

namespace perfed {

std::vector<std::size_t> LabeledDataset::histogram() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(class_count), 0);
  for (int y : labels) ++counts.at(static_cast<std::size_t>(y));
  return counts;
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> rows) const {
  LabeledDataset out;
  out.class_count = class_count;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.labels.reserve(rows.size());
  out.ids.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = rows[i];
    require(r < size(), "subset row out of range");
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(r));
    out.labels.push_back(labels[r]);
    out.ids.push_back(ids[r]);
  }
  return out;
}

void LabeledDataset::validate() const {
  require(class_count >= 1, "dataset class_count must be positive");
  require(static_cast<std::size_t>(features.rows()) == labels.size(), "feature rows must match label count");
  require(ids.size() == labels.size(), "id count must match label count");
  for (int y : labels) {
    require(y >= 0 && y < class_count, "label " + std::to_string(y) + " outside [0, class_count)");
  }
  require(features.allFinite(), "dataset features must be finite");
}

bool LabeledDataset::operator==(const LabeledDataset& other) const {
  return class_count == other.class_count && labels == other.labels && ids == other.ids &&
         features.rows() == other.features.rows() && features.cols() == other.features.cols() &&
         features == other.features;
}

LabeledDataset concat(const LabeledDataset& a, const LabeledDataset& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  require(a.dim() == b.dim(), "concat: feature dimension mismatch");
  require(a.class_count == b.class_count, "concat: class_count mismatch");
  LabeledDataset out;
  out.class_count = a.class_count;
  out.features.resize(a.features.rows() + b.features.rows(), a.features.cols());
  out.features << a.features, b.features;
  out.labels = a.labels;
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  out.ids = a.ids;
  out.ids.insert(out.ids.end(), b.ids.begin(), b.ids.end());
  return out;
}

}  // namespace perfed
