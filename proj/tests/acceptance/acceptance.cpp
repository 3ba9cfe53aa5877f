// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../unit/test_support.hpp"
#include "perfed/baselines.hpp"
#include "perfed/errors.hpp"
#include "perfed/experiment.hpp"
#include "perfed/gan.hpp"
#include "perfed/metrics.hpp"
#include "perfed/theory.hpp"

namespace fs = std::filesystem;
using namespace perfed;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

const std::vector<std::uint64_t> kSeeds{1, 2, 3, 4, 5};

ExperimentConfig desk_config(std::uint64_t seed) {
  ExperimentConfig c = parse_config(nlohmann::json::object());
  c.master_seed = seed;
  return c;
}

// ---------------------------------------------------------------------------

Outcome gradient_oracle() {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto c = testing::random_grad_case(rng, 1e-3);
    const auto analytic = nn::cross_entropy_loss_grad(c.params, c.batch.features, c.batch.labels).grad;
    const auto numeric = nn::finite_diff_grad(c.params, c.batch, 1e-6);
    worst = std::max(worst, testing::max_relative_error(analytic, numeric, 1e-8));
  }
  return {worst < 1e-4, "max relative error " + fmt("%.3g", worst) + " over 100 cases"};
}

Outcome bookkeeping() {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> clients_dist(2, 16), size_dist(20, 60), rounds_dist(1, 3), beta_idx(0, 2);
  const double betas[] = {1.0, 2.0, 5.0};
  long violations = 0;
  int configs = 0;
  auto check = [&](bool ok) { violations += ok ? 0 : 1; };
  for (; configs < 60; ++configs) {
    const int n = clients_dist(rng);
    const std::size_t per = static_cast<std::size_t>(size_dist(rng));
    const bool iid = rng() % 2 == 0;
    const double beta = betas[beta_idx(rng)];
    ExperimentConfig c = parse_config(nlohmann::json::object());
    c.master_seed = rng();
    c.task.train_size = static_cast<std::size_t>(n) * per + 200;
    c.task.test_size = 400;
    c.partition.client_count = n;
    c.partition.per_client_size = per;
    c.partition.mode = iid ? datagen::PartitionMode::iid : datagen::PartitionMode::noniid;
    c.fed.beta = beta;
    c.fed.max_round = rounds_dist(rng);
    c.fed.gan.steps = 5;
    c.fed.gan.batch_size = 8;
    // Enough local training for a positive baseline accuracy, which RTA needs.
    c.task.scale = 0.5;
    c.fed.init_train.epochs = 10;
    c.fed.update_train.epochs = 1;
    c.validate();

    Experiment ex = build_experiment(c);
    // Partitions pairwise disjoint by source row id.
    std::set<std::int64_t> seen;
    std::size_t total = 0;
    for (const auto& p : ex.partitions) {
      total += p.size();
      seen.insert(p.ids.begin(), p.ids.end());
    }
    check(seen.size() == total);

    const auto originals = ex.partitions;
    federation::RunOptions opts;
    opts.center_seed = derive_seed(c.seed(), "center");
    opts.on_round = [&](int, std::span<const federation::ClientState> states) {
      for (std::size_t i = 0; i < states.size(); ++i) check(states[i].train_set == originals[i]);
    };
    const auto result = federation::run_perfed(ex.clients, c.fed, opts);
    check(static_cast<int>(result.traces.size()) == c.fed.max_round);
    for (const auto& t : result.traces) {
      std::size_t ca = 0;
      for (std::size_t i = 0; i < originals.size(); ++i) {
        const std::size_t want = static_cast<std::size_t>(std::ceil(beta * static_cast<double>(originals[i].size()) - 1e-9));
        ca += want;
        check(t.upload_sizes[i] == want);
        check(t.packet_sizes[i] == want);
        check(t.merged_sizes[i] == originals[i].size() + want);
      }
      check(t.pool_size == ca);
    }
    for (std::size_t i = 0; i < originals.size(); ++i) check(result.clients[i].train_set == originals[i]);
  }
  return {violations == 0, std::to_string(configs) + " configs, " + std::to_string(violations) + " violations"};
}

Outcome scheduling_independence(const std::string& cli) {
  const fs::path root = fs::temp_directory_path() / "perfed_acceptance_jobs";
  fs::remove_all(root);
  std::string out;
  for (int jobs : {1, 8}) {
    const std::string cmd = cli + " run --seed 11 --jobs " + std::to_string(jobs) + " --out-dir " +
                            (root / ("jobs" + std::to_string(jobs))).string() + " > /dev/null";
    if (std::system(cmd.c_str()) != 0) return {false, "cli run failed: " + cmd};
  }
  bool same = true;
  for (const char* f : {"per_client.csv", "summary.csv"}) {
    const auto a = slurp(root / "jobs1" / f);
    const auto b = slurp(root / "jobs8" / f);
    same = same && !a.empty() && a == b;
  }
  fs::remove_all(root);
  return {same, same ? "per_client.csv and summary.csv byte-identical" : "outputs differ"};
}

Outcome metric_exactness() {
  const double rta = metrics::relative_test_accuracy(0.80, 0.60);
  bool ok = std::abs(rta - 1.333333333) <= 1e-9;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.1, 3.0);
  std::vector<double> xs(50);
  for (auto& x : xs) x = u(rng);
  const double ref = metrics::mean_rta(xs);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    std::shuffle(xs.begin(), xs.end(), rng);
    worst = std::max(worst, std::abs(metrics::mean_rta(xs) - ref));
  }
  ok = ok && worst <= 1e-12;
  return {ok, "RTA(0.80,0.60)=" + fmt("%.12f", rta) + ", max shuffle drift " + fmt("%.3g", worst)};
}

long double binomial_oracle(long n, long m, long double lambda) {
  const long double p = lambda / static_cast<long double>(n);
  const long double log_c = std::lgamma(n + 1.0L) - std::lgamma(m + 1.0L) - std::lgamma(n - m + 1.0L);
  return std::exp(log_c + m * std::log(p) + (n - m) * std::log1p(-p));
}

Outcome theorem_formulas() {
  bool ok = theory::bound_b1(0.1, 0.2, 100, 500, 0.1) == 0.2;
  ok = ok && theory::bound_b1(0.1, 0.2, 100, 500, 0.3) == 0.0;
  theory::BoundInputs in{0.1, 0.2, 100, 100, 500, 0.05, 100, 0.3};
  ok = ok && theory::theorem1_bound(in).b1 == 0.0;
  double worst = 0.0;
  int cases = 0;
  for (long g : {400L, 1000L, 5000L}) {
    for (long s2 : {100L, 500L, 2000L}) {
      for (double a0 : {0.0005, 0.001, 0.002, 0.004}) {
        for (double b1 : {0.0, 0.0005, 0.001}) {
          theory::BoundInputs t = in;
          t.g = g;
          t.s2 = s2;
          t.a0 = a0;
          const long double lambda = s2 * static_cast<long double>(b1) + g * static_cast<long double>(a0);
          if (lambda > 5.0L || t.m_rounded() < 1) continue;
          const long double oracle = binomial_oracle(s2 + g, t.m_rounded(), lambda);
          const double est = theory::poisson_tail_estimate(t, b1);
          worst = std::max(worst, static_cast<double>(std::abs(est - oracle) / oracle));
          ++cases;
        }
      }
    }
  }
  ok = ok && cases > 0 && worst < 0.10;
  return {ok, "b1 special cases exact; Poisson vs binomial max rel error " + fmt("%.4f", worst) + " over " +
                  std::to_string(cases) + " cases"};
}

Outcome theorem_mc() {
  theory::McSpec spec;  // domain 200, delta 0.05, s1 = s2 = 100, g = 500
  const auto r = theory::mc_validate(spec, 20240601);
  const bool ok = r.trials == 2000 && r.conditions.all() && r.violation_rate < 0.05 && r.violation_upper_99 < 0.05;
  return {ok, std::to_string(r.violations) + "/" + std::to_string(r.trials) + " violations, rate " +
                  fmt("%.4f", r.violation_rate) + ", 99% upper " + fmt("%.4f", r.violation_upper_99)};
}

// Mean over the client's minor classes of per-class accuracy on the global test set.
double minor_class_accuracy(const federation::ClientState& c, const std::vector<int>& majors,
                            const LabeledDataset& test) {
  const auto pred = nn::predict(c.params, test.features);
  double sum = 0.0;
  int classes = 0;
  for (int k = 0; k < test.class_count; ++k) {
    if (std::find(majors.begin(), majors.end(), k) != majors.end()) continue;
    long hit = 0, total = 0;
    for (std::size_t i = 0; i < test.labels.size(); ++i) {
      if (test.labels[i] != k) continue;
      ++total;
      hit += pred[i] == k;
    }
    if (total == 0) continue;
    sum += static_cast<double>(hit) / static_cast<double>(total);
    ++classes;
  }
  return classes ? sum / classes : 0.0;
}

struct ScenarioRun {
  double final_mrta = 0.0;
  std::vector<double> minor_before;
  std::vector<double> minor_after;
};

ScenarioRun run_scenario(const ExperimentConfig& c) {
  Experiment ex = build_experiment(c);
  std::vector<federation::ClientState> clients;
  for (auto& cl : ex.clients) clients.push_back(federation::client_local_init(std::move(cl), c.fed.init_train));
  ScenarioRun out;
  for (std::size_t i = 0; i < clients.size(); ++i) {
    out.minor_before.push_back(minor_class_accuracy(clients[i], ex.major_classes[i], ex.task.test));
  }
  federation::RunOptions opts;
  opts.center_seed = derive_seed(c.seed(), "center");
  const auto r = federation::run_rounds(std::move(clients), c.fed, opts);
  for (std::size_t i = 0; i < r.clients.size(); ++i) {
    out.minor_after.push_back(minor_class_accuracy(r.clients[i], ex.major_classes[i], ex.task.test));
  }
  out.final_mrta = r.log.final_round().mrta;
  return out;
}

double mean_final(const std::vector<ScenarioRun>& runs) {
  double s = 0.0;
  for (const auto& r : runs) s += r.final_mrta;
  return s / static_cast<double>(runs.size());
}

std::vector<ScenarioRun> scenario_over_seeds(const std::function<void(ExperimentConfig&)>& tweak) {
  std::vector<ScenarioRun> runs;
  for (auto seed : kSeeds) {
    ExperimentConfig c = desk_config(seed);
    tweak(c);
    c.validate();
    runs.push_back(run_scenario(c));
  }
  return runs;
}

Outcome desk_scenario(const std::vector<ScenarioRun>& runs) {
  const double mrta = mean_final(runs);
  int improved = 0, total = 0;
  double before = 0.0, after = 0.0;
  for (const auto& r : runs) {
    for (std::size_t i = 0; i < r.minor_before.size(); ++i) {
      ++total;
      improved += r.minor_after[i] > r.minor_before[i];
      before += r.minor_before[i];
      after += r.minor_after[i];
    }
  }
  const bool ok = mrta >= 1.0 && improved == total;
  return {ok, "mean final MRTA " + fmt("%.4f", mrta) + "; minor-class accuracy rose on " + std::to_string(improved) + "/" +
                  std::to_string(total) + " clients (mean " + fmt("%.3f", before / total) + " -> " +
                  fmt("%.3f", after / total) + ")"};
}

Outcome baselines_sanity() {
  double fedavg_acc = 0.0, local_acc = 0.0;
  for (auto seed : kSeeds) {
    ExperimentConfig c = desk_config(seed);
    c.partition.mode = datagen::PartitionMode::iid;
    c.arch.shared_hidden_widths = {16};
    c.method = Method::fedavg;
    auto mean_acc = [](const federation::FederationResult& r) {
      double s = 0.0;
      for (const auto& cl : r.log.final_round().clients) s += cl.test_accuracy;
      return s / static_cast<double>(r.log.final_round().clients.size());
    };
    fedavg_acc += mean_acc(run_experiment(c));
    c.method = Method::local;
    local_acc += mean_acc(run_experiment(c));
  }
  fedavg_acc /= static_cast<double>(kSeeds.size());
  local_acc /= static_cast<double>(kSeeds.size());
  bool ok = fedavg_acc >= local_acc;

  ExperimentConfig c = desk_config(1);
  c.arch.shared_hidden_widths = {12};
  c.method = Method::fedavg;
  c.baseline.prox_mu = 0.7;  // ignored by FedAvg
  const auto avg = run_experiment(c);
  c.method = Method::fedprox;
  c.baseline.prox_mu = 0.0;
  const auto prox = run_experiment(c);
  bool identical = metrics::per_client_csv(avg.log) == metrics::per_client_csv(prox.log);
  for (std::size_t i = 0; i < avg.clients.size(); ++i) identical = identical && avg.clients[i].params == prox.clients[i].params;

  bool refused = false;
  ExperimentConfig het = desk_config(1);
  het.method = Method::fedavg;
  try {
    run_experiment(het);
  } catch (const ContractError& e) {
    refused = std::string(e.what()).find("share one architecture") != std::string::npos;
  }
  ok = ok && identical && refused;
  return {ok, "FedAvg " + fmt("%.4f", fedavg_acc) + " vs local " + fmt("%.4f", local_acc) +
                  (identical ? "; FedProx(mu=0) bitwise equal" : "; FedProx(mu=0) differs") +
                  (refused ? "; heterogeneous cohort refused" : "; heterogeneous cohort NOT refused")};
}

Outcome dp_inertness() {
  ExperimentConfig c = desk_config(3);
  c.fed.gan.steps = 150;
  c.fed.max_round = 2;
  const auto plain = run_experiment(c);
  c.fed.gan.dp = gan::DpOpts{1e300, 0.0};
  const auto dp = run_experiment(c);
  bool same = metrics::per_client_csv(plain.log) == metrics::per_client_csv(dp.log);
  for (std::size_t i = 0; i < plain.clients.size(); ++i) {
    same = same && plain.clients[i].params == dp.clients[i].params && plain.clients[i].generator == dp.clients[i].generator;
  }

  std::mt19937_64 rng(8);
  std::normal_distribution<double> normal(0.0, 5.0);
  double worst_excess = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    nn::Params g = nn::Params::zeros({4, 16, 8, 1});
    for (auto& l : g.layers) {
      for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = normal(rng);
      for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = normal(rng);
    }
    const double clip = 0.01 * (trial + 1);
    const double norm = std::sqrt(nn::squared_norm(gan::dp_clip_noise(g, clip, 0.0, std::uint64_t{1})));
    worst_excess = std::max(worst_excess, norm / clip - 1.0);
  }
  const bool clip_ok = worst_excess <= 1e-12;
  return {same && clip_ok, std::string(same ? "dp(noise 0, clip 1e300) bitwise equal to plain run" : "trajectories differ") +
                               "; max clipped-norm excess " + fmt("%.3g", worst_excess)};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: acceptance <path-to-perfed-cli> [criterion ids, e.g. 2,7]\n");
    return 2;
  }
  const std::string cli = argv[1];
  std::set<int> only;
  if (argc > 2) {
    std::istringstream ids(argv[2]);
    for (std::string id; std::getline(ids, id, ',');) only.insert(std::stoi(id));
  }
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    if (!only.empty() && !only.count(id)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += o.pass ? 0 : 1;
    std::printf("criterion %2d %-28s %s  %s (%.1fs)\n", id, name, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
  };

  report(1, "gradient-oracle", gradient_oracle);
  report(2, "protocol-bookkeeping", bookkeeping);
  report(3, "scheduling-independence", [&] { return scheduling_independence(cli); });
  report(4, "metric-exactness", metric_exactness);
  report(5, "bound-formulas", theorem_formulas);
  report(6, "bound-monte-carlo", theorem_mc);

  std::vector<ScenarioRun> noniid, iid, beta1, beta4, quarter;
  report(7, "desk-scenario", [&] {
    noniid = scenario_over_seeds([](ExperimentConfig&) {});
    return desk_scenario(noniid);
  });
  report(8, "noniid-vs-iid", [&] {
    if (noniid.empty()) noniid = scenario_over_seeds([](ExperimentConfig&) {});
    iid = scenario_over_seeds([](ExperimentConfig& c) { c.partition.mode = datagen::PartitionMode::iid; });
    const double gn = mean_final(noniid) - 1.0, gi = mean_final(iid) - 1.0;
    return Outcome{gn >= gi, "Non-IID gain " + fmt("%.4f", gn) + " vs IID gain " + fmt("%.4f", gi)};
  });
  report(9, "beta-monotonicity", [&] {
    beta1 = scenario_over_seeds([](ExperimentConfig& c) { c.fed.beta = 1.0; });
    beta4 = scenario_over_seeds([](ExperimentConfig& c) { c.fed.beta = 4.0; });
    const double m1 = mean_final(beta1), m4 = mean_final(beta4);
    return Outcome{m4 >= m1 - 0.02, "MRTA beta=4 " + fmt("%.4f", m4) + " vs beta=1 " + fmt("%.4f", m1)};
  });
  report(10, "gan-steps-quartered", [&] {
    const int quartered = desk_config(1).fed.gan.steps / 4;
    quarter = scenario_over_seeds([&](ExperimentConfig& c) { c.fed.gan.steps = quartered; });
    const double m = mean_final(quarter);
    return Outcome{m >= 0.97, "MRTA with " + std::to_string(quartered) + " GAN steps " + fmt("%.4f", m)};
  });
  report(11, "baseline-sanity", baselines_sanity);
  report(12, "dp-inertness", dp_inertness);

  std::printf("%d of %zu criteria failed\n", failures, only.empty() ? std::size_t{12} : only.size());
  return failures == 0 ? 0 : 1;
}
