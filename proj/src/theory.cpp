#include "perfed/theory.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <boost/math/distributions/binomial.hpp>

#include "perfed/errors.hpp"
#include "perfed/rng.hpp"

namespace perfed::theory {

double empirical_disagreement(std::span<const int> preds_a, std::span<const int> preds_b) {
  if (preds_a.size() != preds_b.size()) throw ContractError("empirical_disagreement: length mismatch");
  if (preds_a.empty()) throw ContractError("empirical_disagreement: empty prediction lists");
  std::size_t differ = 0;
  for (std::size_t i = 0; i < preds_a.size(); ++i) differ += preds_a[i] != preds_b[i] ? 1 : 0;
  return static_cast<double>(differ) / static_cast<double>(preds_a.size());
}

void BoundInputs::validate() const {
  if (!(a0 > 0.0 && a0 < 0.5)) throw ConfigError("a0 must lie in (0, 0.5)");
  if (!(b0 > 0.0 && b0 < 0.5)) throw ConfigError("b0 must lie in (0, 0.5)");
  if (s1 < 1 || s2 < 1 || g < 1) throw ConfigError("s1, s2 and g must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
  if (h_space_size < 2) throw ConfigError("|H| must be >= 2");
  if (!(d12 >= 0.0 && d12 <= 1.0)) throw ConfigError("d12 must lie in [0, 1]");
}

long BoundInputs::m_rounded() const { return std::lround(m()); }

Conditions theorem1_conditions(const BoundInputs& in) {
  in.validate();
  Conditions c;
  const double log_ratio = std::log(static_cast<double>(in.h_space_size) / in.delta);
  c.s1_required = log_ratio / in.a0;
  c.s2_required = log_ratio / in.b0;
  c.s1 = static_cast<double>(in.s1) >= c.s1_required;
  c.s2 = static_cast<double>(in.s2) >= c.s2_required;
  // e^M sqrt(M!) - M >= s2 b0  <=>  M + lgamma(M+1)/2 >= ln(s2 b0 + M)
  const auto m = static_cast<double>(in.m_rounded());
  c.factorial_log_lhs = m + 0.5 * std::lgamma(m + 1.0);
  c.factorial_log_rhs = std::log(static_cast<double>(in.s2) * in.b0 + m);
  c.factorial = c.factorial_log_lhs >= c.factorial_log_rhs;
  return c;
}

double bound_b1(double a0, double b0, long s2, long g, double d12) {
  return std::max(b0 + static_cast<double>(g) * (a0 - d12) / static_cast<double>(s2), 0.0);
}

double poisson_tail_estimate(const BoundInputs& in, double b1) {
  require(b1 >= 0.0 && b1 <= 1.0, "poisson_tail_estimate: b1 must lie in [0, 1]");
  const double lambda = static_cast<double>(in.s2) * b1 + static_cast<double>(in.g) * in.a0;
  const auto m = static_cast<double>(in.m_rounded());
  if (lambda == 0.0) return m == 0.0 ? 1.0 : 0.0;
  return std::exp(m * std::log(lambda) - lambda - std::lgamma(m + 1.0));
}

BoundReport theorem1_bound(const BoundInputs& in) {
  BoundReport r;
  r.conditions = theorem1_conditions(in);
  r.b1 = bound_b1(in.a0, in.b0, in.s2, in.g, in.d12);
  r.tail_estimate = poisson_tail_estimate(in, r.b1);
  r.all_conditions_met = r.conditions.all();
  return r;
}

ThresholdClass::ThresholdClass(int domain_size) : k_(domain_size) {
  if (domain_size < 1) throw ConfigError("threshold domain size must be >= 1");
}

int ThresholdClass::label(int member, int x) const {
  const int t = member / 2 + 1;
  const bool positive = x >= t;
  return (member % 2 == 0) == positive ? 1 : -1;
}

double ThresholdClass::disagreement(int a, int b) const {
  const int ta = a / 2 + 1;
  const int tb = b / 2 + 1;
  // Points in [min(t), max(t)) are labeled differently by the two thresholds
  // when both point the same way, identically otherwise.
  const double between = std::abs(ta - tb) / static_cast<double>(k_);
  return (a % 2) == (b % 2) ? between : 1.0 - between;
}

int ThresholdClass::erm(std::span<const long> positives, std::span<const long> negatives) const {
  require(positives.size() == static_cast<std::size_t>(k_) + 1 && negatives.size() == positives.size(),
          "ThresholdClass::erm: count arrays must have K+1 entries");
  long total_pos = 0;
  for (int x = 1; x <= k_; ++x) total_pos += positives[static_cast<std::size_t>(x)];
  // For threshold t, "+1 iff x >= t" errs on positives below t and negatives at
  // or above t. Sweep t upward keeping both counts.
  long pos_below = 0;
  long neg_at_or_above = 0;
  for (int x = 1; x <= k_; ++x) neg_at_or_above += negatives[static_cast<std::size_t>(x)];
  const long total = total_pos + neg_at_or_above;
  int best = 0;
  long best_err = total + 1;
  for (int t = 1; t <= k_ + 1; ++t) {
    const long err_pos = pos_below + neg_at_or_above;
    const long err_neg = total - err_pos;
    const int m = 2 * (t - 1);
    if (err_pos < best_err) { best_err = err_pos; best = m; }
    if (err_neg < best_err) { best_err = err_neg; best = m + 1; }
    if (t <= k_) {
      pos_below += positives[static_cast<std::size_t>(t)];
      neg_at_or_above -= negatives[static_cast<std::size_t>(t)];
    }
  }
  return best;
}

double clopper_pearson_upper(long successes, long trials, double confidence) {
  require(trials > 0 && successes >= 0 && successes <= trials, "clopper_pearson_upper: invalid counts");
  if (successes == trials) return 1.0;
  return boost::math::binomial_distribution<double>::find_upper_bound_on_p(
      static_cast<double>(trials), static_cast<double>(successes), 1.0 - confidence);
}

McResult mc_validate(const McSpec& spec, std::uint64_t seed) {
  if (spec.trials < 1) throw ConfigError("mc: trials must be >= 1");
  if (spec.domain_size < 2) throw ConfigError("mc: domain size must be >= 2");
  const ThresholdClass hclass(spec.domain_size);

  BoundInputs in{spec.a0_target, spec.b0_target, spec.s1, spec.s2, spec.g, spec.delta, hclass.size(), 0.0};
  McResult result;
  result.conditions = theorem1_conditions(in);
  if (!result.conditions.s1) throw ConfigError("mc: condition on s1 fails (s1 < ln(|H|/delta)/a0)");
  if (!result.conditions.s2) throw ConfigError("mc: condition on s2 fails (s2 < ln(|H|/delta)/b0)");
  if (!result.conditions.factorial) throw ConfigError("mc: factorial condition fails (e^M sqrt(M!) - M < s2 b0)");

  const auto k = static_cast<std::size_t>(spec.domain_size);
  std::vector<long> positives(k + 1);
  std::vector<long> negatives(k + 1);
  std::vector<int> peers;
  double b1_sum = 0.0;
  for (long trial = 0; trial < spec.trials; ++trial) {
    Rng rng = make_rng(seed, "mc-trial", static_cast<std::uint64_t>(trial));
    std::uniform_int_distribution<int> pick_member(0, hclass.size() - 1);
    std::uniform_int_distribution<int> pick_x(1, spec.domain_size);
    const int truth = pick_member(rng);

    int peer = truth;
    if (!spec.peer_is_truth) {
      peers.clear();
      for (int m = 0; m < hclass.size(); ++m) {
        if (hclass.disagreement(m, truth) <= spec.a0_target) peers.push_back(m);
      }
      std::uniform_int_distribution<std::size_t> pick_peer(0, peers.size() - 1);
      peer = peers[pick_peer(rng)];
    }

    std::fill(positives.begin(), positives.end(), 0);
    std::fill(negatives.begin(), negatives.end(), 0);
    auto add = [&](int x, int y) { ++(y > 0 ? positives : negatives)[static_cast<std::size_t>(x)]; };
    for (long i = 0; i < spec.s2; ++i) {
      const int x = pick_x(rng);
      add(x, hclass.label(truth, x));
    }
    for (long i = 0; i < spec.g; ++i) {
      const int x = pick_x(rng);
      add(x, hclass.label(peer, x));
    }
    const int retrained = hclass.erm(positives, negatives);

    // b1 is evaluated with the peer's realized error as a0: the smallest a0
    // for which the peer hypothesis holds, hence the tightest bound.
    const double a0_realized = hclass.disagreement(peer, truth);
    const double d12 = hclass.disagreement(peer, retrained);
    const double b1 = bound_b1(a0_realized, spec.b0_target, spec.s2, spec.g, d12);
    b1_sum += b1;
    if (hclass.disagreement(retrained, truth) >= b1) ++result.violations;
  }
  result.trials = spec.trials;
  result.violation_rate = static_cast<double>(result.violations) / static_cast<double>(spec.trials);
  result.mean_b1 = b1_sum / static_cast<double>(spec.trials);
  result.violation_upper_99 = clopper_pearson_upper(result.violations, result.trials, 0.99);
  return result;
}

}  // namespace perfed::theory
