#include "perfed/experiment.hpp"

#include <sstream>

#include "perfed/errors.hpp"

namespace perfed {

datagen::MixtureSpec TaskConfig::mixture() const {
  datagen::MixtureSpec spec;
  spec.class_count = class_count;
  spec.dim = dim;
  if (means.empty()) {
    spec.means = datagen::ring_means(class_count, dim, radius);
  } else {
    for (const auto& m : means) spec.means.push_back(Eigen::Map<const Vector>(m.data(), static_cast<Eigen::Index>(m.size())));
  }
  spec.scales.assign(static_cast<std::size_t>(class_count), scale);
  spec.train_size = train_size;
  spec.test_size = test_size;
  return spec;
}

Experiment build_experiment(const ExperimentConfig& config) {
  config.validate();
  const std::uint64_t master = config.seed();
  Experiment ex;
  ex.task = datagen::make_mixture_task(config.task.mixture(), derive_seed(master, "task"));

  datagen::PartitionPlan plan = config.partition;
  plan.seed = derive_seed(master, "partition");
  ex.partitions = datagen::partition(ex.task.train, plan, &ex.major_classes);

  const nn::ArchSpace space{config.arch.depth_choices, config.arch.width_menu};
  for (std::size_t i = 0; i < ex.partitions.size(); ++i) {
    nn::ModelSpec spec;
    if (config.arch.shared_hidden_widths.empty()) {
      spec = nn::sample_architecture(space, config.task.dim, config.task.class_count, derive_seed(master, "arch", i));
    } else {
      spec = {config.task.dim, config.arch.shared_hidden_widths, config.task.class_count};
    }
    // IID clients are scored on the whole test set; non-IID clients on a view
    // matching their own label mix.
    LabeledDataset view = plan.mode == datagen::PartitionMode::iid
                              ? ex.task.test
                              : datagen::client_test_view(ex.task.test, ex.partitions[i].histogram(),
                                                          derive_seed(master, "test-view", i));
    ex.clients.push_back(federation::make_client(static_cast<int>(i), spec, ex.partitions[i], std::move(view),
                                                 config.latent_dim, derive_seed(master, "client", i)));
  }
  return ex;
}

federation::FederationResult run_experiment(const ExperimentConfig& config) {
  Experiment ex = build_experiment(config);
  federation::RunOptions options;
  options.jobs = config.jobs;
  options.center_seed = derive_seed(config.seed(), "center");

  switch (config.method) {
    case Method::perfed:
      return federation::run_perfed(std::move(ex.clients), config.fed, options);
    case Method::local:
      return baselines::run_local_only(std::move(ex.clients), config.fed, config.baseline.rounds, options);
    case Method::fedavg:
    case Method::fedprox: {
      baselines::BaselineConfig b;
      b.kind = config.method == Method::fedavg ? baselines::Kind::fedavg : baselines::Kind::fedprox;
      b.rounds = config.baseline.rounds;
      b.local_epochs = config.baseline.local_epochs;
      b.prox_mu = config.baseline.prox_mu;
      b.shared_spec = ex.clients.front().spec;
      return baselines::run_fedavg(std::move(ex.clients), config.fed, b, options);
    }
  }
  throw ContractError("unknown method");
}

federation::FederationResult run_and_emit(const ExperimentConfig& config) {
  auto result = run_experiment(config);
  metrics::emit_logs(result.log, config.out_dir);
  return result;
}

std::string partition_csv(const std::vector<LabeledDataset>& partitions) {
  std::ostringstream os;
  os << "client_id,class_id,count\n";
  for (std::size_t i = 0; i < partitions.size(); ++i) {
    const auto h = partitions[i].histogram();
    for (std::size_t c = 0; c < h.size(); ++c) os << i << ',' << c << ',' << h[c] << '\n';
  }
  return os.str();
}

}  // namespace perfed
