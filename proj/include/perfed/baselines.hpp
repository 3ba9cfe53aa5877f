#pragma once

#include <span>
#include <vector>

#include "perfed/federation.hpp"

namespace perfed::baselines {

enum class Kind { local_only, fedavg, fedprox };

struct BaselineConfig {
  Kind kind = Kind::fedavg;
  int rounds = 5;
  int local_epochs = 2;
  double prox_mu = 0.0;
  nn::ModelSpec shared_spec;

  void validate() const;
};

/// Clients train on their own data only; every round repeats the baseline
/// accuracy. Clients are initialized first if needed.
federation::FederationResult run_local_only(std::vector<federation::ClientState> clients,
                                            const federation::FedConfig& fed, int rounds,
                                            const federation::RunOptions& options);

/// Entrywise mean weighted by `weights` (normalized internally).
nn::Params fedavg_aggregate(std::span<const nn::Params> params, std::span<const double> weights);

/// FedAvg, or FedProx when config.kind == fedprox, followed by a local
/// fine-tune (fed.update_train) on each client's own data. Intermediate rounds
/// report the global model on each test view; the final round reports the
/// fine-tuned models. RTA is relative to each client's local baseline, which
/// is computed here with the same streams as the PerFED-GAN local init.
federation::FederationResult run_fedavg(std::vector<federation::ClientState> clients,
                                        const federation::FedConfig& fed, const BaselineConfig& config,
                                        const federation::RunOptions& options);

}  // namespace perfed::baselines
