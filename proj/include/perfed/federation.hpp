#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "perfed/gan.hpp"
#include "perfed/metrics.hpp"
#include "perfed/nn.hpp"

namespace perfed::federation {

/// One participant. `train_set` is the private Tr_i and is never modified
/// once the client is constructed.
struct ClientState {
  int id = 0;
  nn::ModelSpec spec;
  nn::Params params;
  gan::Generator generator;
  LabeledDataset train_set;
  LabeledDataset test_view;
  std::optional<double> local_baseline_acc;
  std::uint64_t seed = 0;

  bool initialized() const { return local_baseline_acc.has_value(); }
};

/// Fresh client: params and generator initialized from streams of `seed`.
ClientState make_client(int id, const nn::ModelSpec& spec, LabeledDataset train_set, LabeledDataset test_view,
                        int latent_dim, std::uint64_t seed);

struct FedConfig {
  double beta = 5.0;
  int max_round = 5;
  gan::GanOpts gan;
  nn::TrainOpts init_train;
  nn::TrainOpts update_train = nn::TrainOpts::with_epochs(5);

  void validate() const;
};

/// ceil(beta * train_size)
std::size_t generated_count(double beta, std::size_t train_size);

/// Splits `total` across classes in proportion to `histogram` (largest
/// remainder, ties to the lower class index).
std::vector<std::size_t> proportional_counts(const std::vector<std::size_t>& histogram, std::size_t total);

/// Trains on Tr_i and records the local baseline accuracy. Calling it on an
/// initialized client is a ContractError.
ClientState client_local_init(ClientState client, const nn::TrainOpts& opts);

/// GAN training on Tr_i followed by generation of ceil(beta |Tr_i|) samples,
/// per-class counts proportional to Tr_i's histogram.
std::pair<ClientState, gan::GeneratedBatch> client_gan_phase(ClientState client, double beta,
                                                             const gan::GanOpts& opts, int round);

/// Class-keyed aggregate held by the center. It only ever sees generated
/// samples, their labels and their origin ids.
struct CenterPool {
  struct Item {
    Vector features;
    int origin = 0;
  };
  std::vector<std::vector<Item>> by_class;

  std::size_t size() const;
  std::vector<std::size_t> class_sizes() const;
};

CenterPool center_aggregate(std::span<const gan::GeneratedBatch> batches);

/// For each requested size, an independent uniform draw without replacement
/// from the pool (the pool is not consumed). Client i's draw uses the stream
/// keyed by (seed, round, i).
std::vector<gan::GeneratedBatch> center_dispatch(const CenterPool& pool, std::span<const std::size_t> request_sizes,
                                                 std::uint64_t seed, int round);

/// Tr'_i = Tr_i followed by the received samples.
LabeledDataset merge_received(const LabeledDataset& train_set, const gan::GeneratedBatch& packet);

/// Retrains the current params on Tr'_i.
ClientState client_update(ClientState client, const gan::GeneratedBatch& packet, const nn::TrainOpts& opts,
                          int round);

/// Sizes observed in one round, for bookkeeping checks.
struct RoundTrace {
  int round = 0;
  std::vector<std::size_t> upload_sizes;
  std::size_t pool_size = 0;
  std::vector<std::size_t> packet_sizes;
  std::vector<std::size_t> merged_sizes;
};

struct RunOptions {
  /// Upper bound on concurrently running client phases; results do not
  /// depend on it.
  int jobs = 1;
  std::uint64_t center_seed = 0;
  /// Probe rows for the pairwise disagreement metric.
  std::size_t probe_cap = 2000;
  /// Called after every completed round with the current client states.
  std::function<void(int round, std::span<const ClientState>)> on_round;
};

struct FederationResult {
  metrics::MetricsLog log;
  std::vector<ClientState> clients;
  std::vector<RoundTrace> traces;
};

/// Shared probe set: the union of the clients' test views, first `cap` rows.
Matrix probe_set(std::span<const ClientState> clients, std::size_t cap);

/// Mean over client pairs of the disagreement of their predictions on `probe`.
double mean_pairwise_disagreement(std::span<const ClientState> clients, const Matrix& probe);

/// Metrics of the clients' current params on their test views.
metrics::RoundMetrics evaluate_round(int round, std::span<const ClientState> clients, const Matrix& probe,
                                     int jobs);

/// Runs `fn(i)` for i in [0, n) on up to `jobs` threads.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

/// Local init of every client, then max_round rounds of
/// GAN -> aggregate -> dispatch -> update, evaluating after each round.
FederationResult run_perfed(std::vector<ClientState> clients, const FedConfig& config, const RunOptions& options);

/// The round loop alone, for clients that are already initialized.
FederationResult run_rounds(std::vector<ClientState> clients, const FedConfig& config, const RunOptions& options);

}  // namespace perfed::federation
