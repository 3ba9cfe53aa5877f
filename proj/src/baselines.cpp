#include "perfed/baselines.hpp"

#include <numeric>
#include <string>

#include "perfed/errors.hpp"

namespace perfed::baselines {

using federation::ClientState;
using federation::FederationResult;

void BaselineConfig::validate() const {
  if (rounds < 1) throw ConfigError("baseline.rounds must be >= 1");
  if (local_epochs < 1) throw ConfigError("baseline.local_epochs must be >= 1");
  if (!(prox_mu >= 0.0)) throw ConfigError("baseline.prox_mu must be nonnegative");
}

namespace {

void ensure_initialized(std::vector<ClientState>& clients, const nn::TrainOpts& opts, int jobs) {
  federation::parallel_for(clients.size(), jobs, [&](std::size_t i) {
    if (!clients[i].initialized()) clients[i] = federation::client_local_init(std::move(clients[i]), opts);
  });
}

}  // namespace

FederationResult run_local_only(std::vector<ClientState> clients, const federation::FedConfig& fed, int rounds,
                                const federation::RunOptions& options) {
  if (rounds < 1) throw ConfigError("baseline.rounds must be >= 1");
  ensure_initialized(clients, fed.init_train, options.jobs);
  FederationResult result;
  const Matrix probe = federation::probe_set(clients, options.probe_cap);
  for (int r = 0; r <= rounds; ++r) {
    auto m = federation::evaluate_round(r, clients, probe, options.jobs);
    result.log.rounds.push_back(std::move(m));
    result.log.events.push_back({r, "eval", {{"mrta", result.log.rounds.back().mrta}}});
  }
  result.clients = std::move(clients);
  return result;
}

nn::Params fedavg_aggregate(std::span<const nn::Params> params, std::span<const double> weights) {
  require(!params.empty(), "fedavg_aggregate: no parameters");
  require(params.size() == weights.size(), "fedavg_aggregate: one weight per client required");
  double total = 0.0;
  for (double w : weights) {
    require(w > 0.0, "fedavg_aggregate: weights must be positive");
    total += w;
  }
  nn::Params out = params.front().zeros_like();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].same_shape(out)) {
      throw ContractError("fedavg_aggregate: client " + std::to_string(i) + " has a different parameter shape");
    }
    nn::add_scaled(out, params[i], weights[i] / total);
  }
  return out;
}

FederationResult run_fedavg(std::vector<ClientState> clients, const federation::FedConfig& fed,
                            const BaselineConfig& config, const federation::RunOptions& options) {
  config.validate();
  require(!clients.empty(), "run_fedavg needs at least one client");
  for (const auto& c : clients) {
    if (!(c.spec == config.shared_spec)) {
      throw ContractError("FedAvg/FedProx require every client to share one architecture; client " +
                          std::to_string(c.id) + " differs");
    }
  }
  ensure_initialized(clients, fed.init_train, options.jobs);

  FederationResult result;
  auto& log = result.log;
  const Matrix probe = federation::probe_set(clients, options.probe_cap);
  log.rounds.push_back(federation::evaluate_round(0, clients, probe, options.jobs));
  log.events.push_back({0, "eval", {{"mrta", log.rounds.back().mrta}}});

  std::vector<double> weights;
  for (const auto& c : clients) weights.push_back(static_cast<double>(c.train_set.size()));
  nn::Params global = nn::init_params(config.shared_spec, derive_seed(options.center_seed, "fedavg-global"));
  const bool prox = config.kind == Kind::fedprox && config.prox_mu > 0.0;

  std::vector<nn::Params> local(clients.size());
  for (int round = 1; round <= config.rounds; ++round) {
    nn::TrainOpts opts = fed.update_train;
    opts.epochs = config.local_epochs;
    opts.prox_mu = prox ? config.prox_mu : 0.0;
    opts.prox_anchor = prox ? std::optional<nn::Params>(global) : std::nullopt;
    federation::parallel_for(clients.size(), options.jobs, [&](std::size_t i) {
      local[i] = nn::train_classifier(global, clients[i].train_set, opts,
                                      derive_seed(clients[i].seed, "fedavg", static_cast<std::uint64_t>(round)));
    });
    global = fedavg_aggregate(local, weights);
    log.events.push_back({round, "aggregate", {{"clients", clients.size()}}});

    federation::parallel_for(clients.size(), options.jobs, [&](std::size_t i) {
      clients[i].params = round < config.rounds
                              ? global
                              : nn::train_classifier(global, clients[i].train_set, fed.update_train,
                                                     derive_seed(clients[i].seed, "finetune"));
    });
    log.rounds.push_back(federation::evaluate_round(round, clients, probe, options.jobs));
    log.events.push_back({round, "eval", {{"mrta", log.rounds.back().mrta}}});
  }
  result.clients = std::move(clients);
  return result;
}

}  // namespace perfed::baselines
