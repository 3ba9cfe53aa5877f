#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace perfed::theory {

/// Fraction of positions where two prediction lists differ (normalized Hamming
/// distance).
double empirical_disagreement(std::span<const int> preds_a, std::span<const int> preds_b);

/// Inputs of the co-training bound for a classifier retrained on its own s2
/// samples plus g samples labeled by a peer classifier.
struct BoundInputs {
  double a0 = 0.0;   // peer generalization error bound, (0, 0.5)
  double b0 = 0.0;   // own generalization error bound, (0, 0.5)
  long s1 = 0;       // peer training-set size
  long s2 = 0;       // own training-set size
  long g = 0;        // peer-labeled samples
  double delta = 0.0;
  long h_space_size = 0;
  double d12 = 0.0;  // disagreement between peer and retrained classifier

  void validate() const;
  double m() const { return static_cast<double>(g) * a0; }
  /// M rounded to the nearest integer, as used in factorial and binomial terms.
  long m_rounded() const;
};

struct Conditions {
  bool s1 = false;
  bool s2 = false;
  bool factorial = false;
  double s1_required = 0.0;  // ln(|H|/delta)/a0
  double s2_required = 0.0;  // ln(|H|/delta)/b0
  // Natural logs of e^M sqrt(M!) and of (s2*b0 + M), the two sides of the
  // factorial condition after moving M across.
  double factorial_log_lhs = 0.0;
  double factorial_log_rhs = 0.0;

  bool all() const { return s1 && s2 && factorial; }
};

Conditions theorem1_conditions(const BoundInputs& in);

/// max{b0 + g (a0 - d12) / s2, 0}
double bound_b1(double a0, double b0, long s2, long g, double d12);

/// lambda^M e^{-lambda} / M! with lambda = s2*b1 + g*a0, evaluated in log-space.
double poisson_tail_estimate(const BoundInputs& in, double b1);

struct BoundReport {
  double b1 = 0.0;
  Conditions conditions;
  double tail_estimate = 0.0;
  bool all_conditions_met = false;
};

BoundReport theorem1_bound(const BoundInputs& in);

/// Threshold classifiers on the discrete domain {1..K}. Member 2(t-1) is
/// "+1 iff x >= t", member 2(t-1)+1 its negation, for t = 1..K+1, so the class
/// has 2K+2 members (the two constants appear twice).
class ThresholdClass {
 public:
  explicit ThresholdClass(int domain_size);

  int domain_size() const { return k_; }
  int size() const { return 2 * k_ + 2; }
  int label(int member, int x) const;
  /// Exact disagreement under the uniform distribution on the domain.
  double disagreement(int a, int b) const;
  /// First member (in enumeration order) minimising the number of
  /// disagreements with the samples; `positives[x]`/`negatives[x]` count
  /// samples at domain point x (1-based, index 0 unused).
  int erm(std::span<const long> positives, std::span<const long> negatives) const;

 private:
  int k_;
};

struct McSpec {
  int domain_size = 200;
  double a0_target = 0.1;
  double b0_target = 0.1;
  long s1 = 100;
  long s2 = 100;
  long g = 500;
  double delta = 0.05;
  long trials = 2000;
  /// Use the ground truth itself as the peer labeler.
  bool peer_is_truth = false;
};

struct McResult {
  long trials = 0;
  long violations = 0;
  double violation_rate = 0.0;
  double mean_b1 = 0.0;
  Conditions conditions;
  /// One-sided 99% Clopper-Pearson upper bound on the violation probability.
  double violation_upper_99 = 0.0;
};

/// Monte-Carlo check of the bound with exact ERM over ThresholdClass. Refuses
/// (ConfigError naming the condition) specs that fail the bound's hypotheses.
McResult mc_validate(const McSpec& spec, std::uint64_t seed);

/// One-sided upper confidence bound on a binomial proportion.
double clopper_pearson_upper(long successes, long trials, double confidence);

}  // namespace perfed::theory
