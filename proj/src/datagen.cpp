#include "perfed/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>

#include "perfed/errors.hpp"
#include "perfed/rng.hpp"

namespace perfed::datagen {

std::vector<Vector> ring_means(int class_count, int dim, double radius) {
  if (class_count < 2) throw ConfigError("class_count must be >= 2");
  if (dim < 1) throw ConfigError("dim must be >= 1");
  std::vector<Vector> means;
  for (int c = 0; c < class_count; ++c) {
    Vector m = Vector::Zero(dim);
    if (dim == 1) {
      m(0) = radius * (2.0 * c / (class_count - 1) - 1.0);
    } else {
      const double angle = 2.0 * std::numbers::pi * c / class_count + std::numbers::pi / 4.0;
      m(0) = radius * std::cos(angle);
      m(1) = radius * std::sin(angle);
    }
    means.push_back(std::move(m));
  }
  return means;
}

namespace {

void validate_mixture(const MixtureSpec& spec) {
  if (spec.class_count < 2) throw ConfigError("task.class_count must be >= 2");
  if (spec.dim < 1) throw ConfigError("task.dim must be >= 1");
  if (spec.means.size() != static_cast<std::size_t>(spec.class_count)) {
    throw ConfigError("task.means must list one mean per class");
  }
  if (spec.scales.size() != spec.means.size()) throw ConfigError("task.scales must list one scale per class");
  for (std::size_t c = 0; c < spec.means.size(); ++c) {
    if (spec.means[c].size() != spec.dim) throw ConfigError("task.means[" + std::to_string(c) + "] has wrong dimension");
    if (!(spec.scales[c] > 0.0)) throw ConfigError("task.scales[" + std::to_string(c) + "] must be positive");
    for (std::size_t d = 0; d < c; ++d) {
      if (spec.means[c] == spec.means[d]) {
        throw ConfigError("task.means: classes " + std::to_string(d) + " and " + std::to_string(c) + " coincide");
      }
    }
  }
  const auto k = static_cast<std::size_t>(spec.class_count);
  if (spec.train_size < k || spec.test_size < k) throw ConfigError("task sizes must be >= class_count");
}

LabeledDataset draw_mixture(const MixtureSpec& spec, std::size_t n, Rng& rng) {
  const auto k = static_cast<std::size_t>(spec.class_count);
  std::vector<int> labels;
  labels.reserve(n);
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t count = n / k + (c < n % k ? 1 : 0);
    labels.insert(labels.end(), count, static_cast<int>(c));
  }
  std::shuffle(labels.begin(), labels.end(), rng);

  LabeledDataset out;
  out.class_count = spec.class_count;
  out.features.resize(static_cast<Eigen::Index>(n), spec.dim);
  out.labels = labels;
  out.ids.resize(n);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    for (int d = 0; d < spec.dim; ++d) {
      out.features(static_cast<Eigen::Index>(i), d) = spec.means[c](d) + spec.scales[c] * normal(rng);
    }
    out.ids[i] = static_cast<std::int64_t>(i);
  }
  return out;
}

}  // namespace

Task make_mixture_task(const MixtureSpec& spec, std::uint64_t seed) {
  validate_mixture(spec);
  Rng train_rng = make_rng(seed, "task-train");
  Rng test_rng = make_rng(seed, "task-test");
  return {draw_mixture(spec, spec.train_size, train_rng), draw_mixture(spec, spec.test_size, test_rng)};
}

void PartitionPlan::validate(std::size_t pool_size) const {
  if (client_count < 1) throw ConfigError("partition.client_count must be >= 1");
  if (per_client_size < 1) throw ConfigError("partition.per_client_size must be >= 1");
  if (static_cast<std::size_t>(client_count) * per_client_size > pool_size) {
    throw ConfigError("partition needs " + std::to_string(client_count) + " x " + std::to_string(per_client_size) +
                      " samples but the pool holds " + std::to_string(pool_size));
  }
  if (mode == PartitionMode::noniid) {
    if (!(major_class_fraction > 0.0 && major_class_fraction <= 1.0)) {
      throw ConfigError("partition.major_class_fraction must lie in (0, 1]");
    }
    if (!(major_sample_fraction > 0.0 && major_sample_fraction <= 1.0)) {
      throw ConfigError("partition.major_sample_fraction must lie in (0, 1]");
    }
  }
}

int PartitionPlan::major_class_count(int class_count) const {
  // The epsilon keeps 0.6 * 10 from rounding up to 7.
  const int n = static_cast<int>(std::ceil(major_class_fraction * class_count - 1e-9));
  return std::clamp(n, 1, class_count);
}

std::size_t PartitionPlan::major_sample_count() const {
  return static_cast<std::size_t>(std::llround(major_sample_fraction * static_cast<double>(per_client_size)));
}

std::vector<LabeledDataset> partition_iid(const LabeledDataset& pool, const PartitionPlan& plan) {
  if (plan.mode != PartitionMode::iid) throw ContractError("partition_iid called with a non-IID plan");
  plan.validate(pool.size());
  Rng rng = make_rng(plan.seed, "partition-iid");
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<LabeledDataset> out;
  out.reserve(static_cast<std::size_t>(plan.client_count));
  for (int c = 0; c < plan.client_count; ++c) {
    const auto begin = order.begin() + static_cast<std::ptrdiff_t>(c * plan.per_client_size);
    std::vector<std::size_t> rows(begin, begin + static_cast<std::ptrdiff_t>(plan.per_client_size));
    out.push_back(pool.subset(rows));
  }
  return out;
}

namespace {

std::string class_list(const std::vector<int>& classes) {
  std::ostringstream os;
  for (std::size_t i = 0; i < classes.size(); ++i) os << (i ? "," : "") << classes[i];
  return os.str();
}

// Removes and returns `count` uniformly chosen rows from the union of the
// per-class remaining lists for `classes`.
std::vector<std::size_t> draw_from_classes(std::vector<std::vector<std::size_t>>& remaining,
                                           const std::vector<int>& classes, std::size_t count, Rng& rng) {
  if (count == 0) return {};
  std::size_t available = 0;
  for (int c : classes) available += remaining[static_cast<std::size_t>(c)].size();
  if (available < count) {
    // Name the class group that ran dry.
    throw PartitionInfeasible("not enough remaining samples in class(es) {" + class_list(classes) + "}: need " +
                              std::to_string(count) + ", have " + std::to_string(available));
  }
  std::vector<std::size_t> chosen;
  chosen.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    std::uniform_int_distribution<std::size_t> pick(0, available - 1 - k);
    std::size_t r = pick(rng);
    for (int c : classes) {
      auto& list = remaining[static_cast<std::size_t>(c)];
      if (r < list.size()) {
        chosen.push_back(list[r]);
        list[r] = list.back();
        list.pop_back();
        break;
      }
      r -= list.size();
    }
  }
  return chosen;
}

}  // namespace

std::vector<LabeledDataset> partition_noniid(const LabeledDataset& pool, const PartitionPlan& plan,
                                             std::vector<std::vector<int>>* major_classes) {
  if (plan.mode != PartitionMode::noniid) throw ContractError("partition_noniid called with an IID plan");
  plan.validate(pool.size());
  const int k = pool.class_count;
  const int major_count = plan.major_class_count(k);
  const std::size_t major_quota = plan.major_sample_count();
  const std::size_t minor_quota = plan.per_client_size - major_quota;
  if (major_count == k && minor_quota > 0) {
    throw PartitionInfeasible("every class is major, so no class can supply the " + std::to_string(minor_quota) +
                              " minor samples");
  }

  std::vector<std::vector<std::size_t>> remaining(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < pool.size(); ++i) remaining[static_cast<std::size_t>(pool.labels[i])].push_back(i);

  Rng rng = make_rng(plan.seed, "partition-noniid");
  std::vector<int> all_classes(static_cast<std::size_t>(k));
  std::iota(all_classes.begin(), all_classes.end(), 0);

  std::vector<LabeledDataset> out;
  out.reserve(static_cast<std::size_t>(plan.client_count));
  for (int client = 0; client < plan.client_count; ++client) {
    std::vector<int> shuffled = all_classes;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    std::vector<int> major(shuffled.begin(), shuffled.begin() + major_count);
    std::vector<int> minor(shuffled.begin() + major_count, shuffled.end());
    std::sort(major.begin(), major.end());
    std::sort(minor.begin(), minor.end());

    std::vector<std::size_t> rows = draw_from_classes(remaining, major, major_quota, rng);
    std::vector<std::size_t> minor_rows = draw_from_classes(remaining, minor, minor_quota, rng);
    rows.insert(rows.end(), minor_rows.begin(), minor_rows.end());
    std::shuffle(rows.begin(), rows.end(), rng);
    out.push_back(pool.subset(rows));
    if (major_classes) major_classes->push_back(std::move(major));
  }
  return out;
}

std::vector<LabeledDataset> partition(const LabeledDataset& pool, const PartitionPlan& plan,
                                      std::vector<std::vector<int>>* major_classes) {
  if (plan.mode == PartitionMode::noniid) return partition_noniid(pool, plan, major_classes);
  auto parts = partition_iid(pool, plan);
  if (major_classes) {
    std::vector<int> all(static_cast<std::size_t>(pool.class_count));
    std::iota(all.begin(), all.end(), 0);
    major_classes->assign(parts.size(), all);
  }
  return parts;
}

LabeledDataset client_test_view(const LabeledDataset& global_test, const std::vector<std::size_t>& train_histogram,
                                std::uint64_t seed) {
  require(train_histogram.size() == static_cast<std::size_t>(global_test.class_count),
          "client_test_view: histogram length must equal class_count");
  const std::size_t total = std::accumulate(train_histogram.begin(), train_histogram.end(), std::size_t{0});
  require(total > 0, "client_test_view: training histogram is empty");

  std::vector<std::vector<std::size_t>> by_class(train_histogram.size());
  for (std::size_t i = 0; i < global_test.size(); ++i) {
    by_class[static_cast<std::size_t>(global_test.labels[i])].push_back(i);
  }

  // Largest T such that floor(T * h_c / H) <= available_c for every class.
  std::size_t view_total = std::numeric_limits<std::size_t>::max();
  for (std::size_t c = 0; c < train_histogram.size(); ++c) {
    if (train_histogram[c] == 0) continue;
    if (by_class[c].empty()) {
      throw ContractError("client_test_view: class " + std::to_string(c) + " is absent from the test set");
    }
    view_total = std::min(view_total, (by_class[c].size() * total + total - 1) / train_histogram[c]);
  }
  auto count_for = [&](std::size_t c) { return view_total * train_histogram[c] / total; };
  for (std::size_t c = 0; c < train_histogram.size(); ++c) {
    while (count_for(c) > by_class[c].size()) --view_total;
  }

  Rng rng = make_rng(seed, "test-view");
  std::vector<std::size_t> rows;
  for (std::size_t c = 0; c < train_histogram.size(); ++c) {
    const std::size_t n = count_for(c);
    if (n == 0) continue;
    auto& list = by_class[c];
    std::shuffle(list.begin(), list.end(), rng);
    rows.insert(rows.end(), list.begin(), list.begin() + static_cast<std::ptrdiff_t>(n));
  }
  std::sort(rows.begin(), rows.end());
  return global_test.subset(rows);
}

}  // namespace perfed::datagen
