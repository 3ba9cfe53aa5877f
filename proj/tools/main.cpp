#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "perfed/errors.hpp"
#include "perfed/experiment.hpp"
#include "perfed/metrics.hpp"
#include "perfed/theory.hpp"

namespace fs = std::filesystem;
using perfed::metrics::format_float;

namespace {

struct RunFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<int> jobs;
  std::optional<std::string> baseline;
  std::optional<double> beta;
  std::optional<int> gan_steps;
};

void add_run_flags(CLI::App* cmd, RunFlags& f, bool sweep) {
  cmd->add_option("--config", f.config_path, "experiment config (JSON); defaults apply when omitted");
  cmd->add_option("--seed", f.seed, "master seed, overrides the config");
  cmd->add_option("--out-dir", f.out_dir, "output directory, overrides the config");
  cmd->add_option("--jobs", f.jobs, "concurrent client phases (results do not depend on it)");
  cmd->add_option("--baseline", f.baseline, "method: perfed, local, fedavg or fedprox")
      ->check(CLI::IsMember({"perfed", "local", "fedavg", "fedprox"}));
  if (!sweep) {
    cmd->add_option("--beta", f.beta, "generation ratio");
    cmd->add_option("--gan-steps", f.gan_steps, "GAN steps per round");
  }
}

perfed::ExperimentConfig resolve(const RunFlags& f) {
  perfed::ExperimentConfig c =
      f.config_path.empty() ? perfed::parse_config(nlohmann::json::object()) : perfed::load_config(f.config_path);
  if (f.seed) c.master_seed = *f.seed;
  if (f.out_dir) c.out_dir = *f.out_dir;
  if (f.jobs) c.jobs = *f.jobs;
  if (f.baseline) c.method = *perfed::parse_method(*f.baseline);
  if (f.beta) c.fed.beta = *f.beta;
  if (f.gan_steps) c.fed.gan.steps = *f.gan_steps;
  if (!c.master_seed) throw perfed::ConfigError("master_seed: required (set it in the config or pass --seed)");
  c.validate();
  return c;
}

void write_config_copy(const perfed::ExperimentConfig& c) {
  fs::create_directories(c.out_dir);
  perfed::metrics::write_file_atomic(fs::path(c.out_dir) / "config.json", perfed::config_to_json(c).dump(2) + "\n");
}

double run_one(const perfed::ExperimentConfig& c) {
  write_config_copy(c);
  const perfed::Experiment preview = perfed::build_experiment(c);
  perfed::metrics::write_file_atomic(fs::path(c.out_dir) / "partition.csv", perfed::partition_csv(preview.partitions));
  const auto result = perfed::run_and_emit(c);
  return result.log.final_round().mrta;
}

int cmd_run(const RunFlags& f) {
  const auto c = resolve(f);
  const double mrta = run_one(c);
  std::cout << "method=" << perfed::to_string(c.method) << "\n"
            << "final_mrta=" << format_float(mrta) << "\n"
            << "out_dir=" << c.out_dir << "\n";
  return 0;
}

int cmd_partition(const RunFlags& f) {
  const auto c = resolve(f);
  const perfed::Experiment ex = perfed::build_experiment(c);
  fs::create_directories(c.out_dir);
  const auto path = fs::path(c.out_dir) / "partition.csv";
  perfed::metrics::write_file_atomic(path, perfed::partition_csv(ex.partitions));
  std::cout << path.string() << "\n";
  return 0;
}

template <typename T>
std::string point_name(const std::string& key, T v) {
  std::ostringstream os;
  os << key << '_' << v;
  return os.str();
}

int cmd_sweep(const RunFlags& f, const std::vector<double>& betas, const std::vector<int>& steps) {
  if (betas.empty() == steps.empty()) throw perfed::ConfigError("sweep: give exactly one of --beta or --gan-steps");
  const auto base = resolve(f);
  const std::string key = betas.empty() ? "gan_steps" : "beta";
  std::string csv = key + ",final_mrta\n";
  const std::size_t n = betas.empty() ? steps.size() : betas.size();
  for (std::size_t i = 0; i < n; ++i) {
    perfed::ExperimentConfig c = base;
    std::string value;
    if (betas.empty()) {
      c.fed.gan.steps = steps[i];
      value = std::to_string(steps[i]);
    } else {
      c.fed.beta = betas[i];
      value = format_float(betas[i]);
    }
    c.out_dir = (fs::path(base.out_dir) / point_name(key, value)).string();
    c.validate();
    const double mrta = run_one(c);
    csv += value + "," + format_float(mrta) + "\n";
    std::cout << key << "=" << value << " final_mrta=" << format_float(mrta) << "\n";
  }
  fs::create_directories(base.out_dir);
  perfed::metrics::write_file_atomic(fs::path(base.out_dir) / "sweep.csv", csv);
  return 0;
}

int cmd_bound(const perfed::theory::BoundInputs& in) {
  const auto r = perfed::theory::theorem1_bound(in);
  const auto& c = r.conditions;
  nlohmann::json j{{"b1", r.b1},
                   {"cond_s1", c.s1},
                   {"cond_s2", c.s2},
                   {"cond_factorial", c.factorial},
                   {"s1_required", c.s1_required},
                   {"s2_required", c.s2_required},
                   {"factorial_log_lhs", c.factorial_log_lhs},
                   {"factorial_log_rhs", c.factorial_log_rhs},
                   {"m", in.m_rounded()},
                   {"tail_estimate", r.tail_estimate},
                   {"all_conditions_met", r.all_conditions_met}};
  auto flag = [](bool b) { return b ? "true" : "false"; };
  std::cout << "b1=" << format_float(r.b1) << "\n"
            << "cond_s1=" << flag(c.s1) << "\n"
            << "cond_s2=" << flag(c.s2) << "\n"
            << "cond_factorial=" << flag(c.factorial) << "\n"
            << "s1_required=" << format_float(c.s1_required) << "\n"
            << "s2_required=" << format_float(c.s2_required) << "\n"
            << "m=" << in.m_rounded() << "\n"
            << "tail_estimate=" << format_float(r.tail_estimate) << "\n"
            << "all_conditions_met=" << flag(r.all_conditions_met) << "\n"
            << perfed::metrics::dump_json(j) << "\n";
  return 0;
}

int cmd_mc(const perfed::theory::McSpec& spec, std::uint64_t seed) {
  const auto r = perfed::theory::mc_validate(spec, seed);
  std::cout << "trials=" << r.trials << "\n"
            << "violations=" << r.violations << "\n"
            << "violation_rate=" << format_float(r.violation_rate) << "\n"
            << "delta=" << format_float(spec.delta) << "\n"
            << "violation_upper_99=" << format_float(r.violation_upper_99) << "\n"
            << "mean_b1=" << format_float(r.mean_b1) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PerFED-GAN personalized federated learning simulator"};
  app.name("perfed");
  app.require_subcommand(1);

  RunFlags run_flags, partition_flags, sweep_flags;
  auto* run = app.add_subcommand("run", "run PerFED-GAN or a baseline and write metrics");
  add_run_flags(run, run_flags, false);

  auto* part = app.add_subcommand("partition", "write the partition preview (partition.csv) only");
  add_run_flags(part, partition_flags, false);

  std::vector<double> sweep_betas;
  std::vector<int> sweep_steps;
  auto* sweep = app.add_subcommand("sweep", "repeat run over a beta list or a GAN-steps list");
  add_run_flags(sweep, sweep_flags, true);
  sweep->add_option("--beta", sweep_betas, "comma-separated beta values")->delimiter(',');
  sweep->add_option("--gan-steps", sweep_steps, "comma-separated GAN step counts")->delimiter(',');

  perfed::theory::BoundInputs bound_in;
  auto* bound = app.add_subcommand("bound", "evaluate the co-training bound and its conditions");
  bound->add_option("--a0", bound_in.a0, "peer error bound")->required();
  bound->add_option("--b0", bound_in.b0, "own error bound")->required();
  bound->add_option("--s1", bound_in.s1, "peer training-set size")->required();
  bound->add_option("--s2", bound_in.s2, "own training-set size")->required();
  bound->add_option("--g", bound_in.g, "peer-labeled sample count")->required();
  bound->add_option("--delta", bound_in.delta, "confidence parameter")->required();
  bound->add_option("--hsize", bound_in.h_space_size, "hypothesis-space size")->required();
  bound->add_option("--d12", bound_in.d12, "disagreement between peer and retrained classifier")->required();

  perfed::theory::McSpec mc_spec;
  std::optional<std::uint64_t> mc_seed;
  auto* mc = app.add_subcommand("mc", "Monte-Carlo check of the bound with threshold classifiers");
  mc->add_option("--domain", mc_spec.domain_size, "domain size K")->capture_default_str();
  mc->add_option("--a0", mc_spec.a0_target, "peer error target")->capture_default_str();
  mc->add_option("--b0", mc_spec.b0_target, "own error bound")->capture_default_str();
  mc->add_option("--s1", mc_spec.s1, "peer training-set size")->capture_default_str();
  mc->add_option("--s2", mc_spec.s2, "own sample count")->capture_default_str();
  mc->add_option("--g", mc_spec.g, "peer-labeled sample count")->capture_default_str();
  mc->add_option("--delta", mc_spec.delta, "confidence parameter")->capture_default_str();
  mc->add_option("--trials", mc_spec.trials, "trial count")->capture_default_str();
  mc->add_flag("--peer-is-truth", mc_spec.peer_is_truth, "label G with the ground truth");
  mc->add_option("--seed", mc_seed, "seed")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (*run) return cmd_run(run_flags);
    if (*part) return cmd_partition(partition_flags);
    if (*sweep) return cmd_sweep(sweep_flags, sweep_betas, sweep_steps);
    if (*bound) return cmd_bound(bound_in);
    if (*mc) return cmd_mc(mc_spec, *mc_seed);
  } catch (const perfed::Error& e) {
    std::string msg = e.what();
    for (auto& ch : msg) {
      if (ch == '\n') ch = ' ';
    }
    std::cerr << "error[" << e.category() << "]: " << msg << "\n";
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error[io]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
