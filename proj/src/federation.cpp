#include "perfed/federation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "perfed/errors.hpp"
#include "perfed/theory.hpp"

namespace perfed::federation {

ClientState make_client(int id, const nn::ModelSpec& spec, LabeledDataset train_set, LabeledDataset test_view,
                        int latent_dim, std::uint64_t seed) {
  spec.validate();
  train_set.validate();
  require(!train_set.empty(), "client " + std::to_string(id) + " has an empty training set");
  require(train_set.dim() == spec.input_dim, "client training data does not match its model input");
  ClientState c;
  c.id = id;
  c.spec = spec;
  c.params = nn::init_params(spec, derive_seed(seed, "params"));
  c.generator = gan::init_generator(gan::GeneratorSpec::mirror(spec, latent_dim), derive_seed(seed, "generator"));
  c.train_set = std::move(train_set);
  c.test_view = std::move(test_view);
  c.seed = seed;
  return c;
}

void FedConfig::validate() const {
  if (!(beta > 0.0)) throw ConfigError("fed.beta must be positive");
  if (max_round < 1) throw ConfigError("fed.max_round must be >= 1");
  gan.validate();
  init_train.validate();
  update_train.validate();
}

std::size_t generated_count(double beta, std::size_t train_size) {
  require(beta > 0.0, "beta must be positive");
  // The epsilon keeps exact products such as 5 * 100 from rounding up.
  return static_cast<std::size_t>(std::ceil(beta * static_cast<double>(train_size) - 1e-9));
}

std::vector<std::size_t> proportional_counts(const std::vector<std::size_t>& histogram, std::size_t total) {
  const std::size_t mass = std::accumulate(histogram.begin(), histogram.end(), std::size_t{0});
  require(mass > 0, "proportional_counts: empty histogram");
  std::vector<std::size_t> counts(histogram.size());
  std::vector<std::pair<std::size_t, std::size_t>> remainders;  // (remainder numerator, class)
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < histogram.size(); ++c) {
    const std::size_t scaled = histogram[c] * total;
    counts[c] = scaled / mass;
    assigned += counts[c];
    remainders.emplace_back(scaled % mass, c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++counts[remainders[i].second];
  return counts;
}

ClientState client_local_init(ClientState client, const nn::TrainOpts& opts) {
  if (client.initialized()) {
    throw ContractError("client " + std::to_string(client.id) + " is already initialized");
  }
  client.params = nn::train_classifier(std::move(client.params), client.train_set, opts,
                                       derive_seed(client.seed, "local-init"));
  client.local_baseline_acc = nn::evaluate_accuracy(client.params, client.test_view);
  return client;
}

std::pair<ClientState, gan::GeneratedBatch> client_gan_phase(ClientState client, double beta,
                                                             const gan::GanOpts& opts, int round) {
  require(client.initialized(), "client " + std::to_string(client.id) + " must be initialized before the GAN phase");
  const auto r = static_cast<std::uint64_t>(round);
  auto trained = gan::train_cgan(client.params, client.spec, client.generator, client.train_set, opts,
                                 derive_seed(client.seed, "gan", r));
  client.params = std::move(trained.client_params);
  client.generator = std::move(trained.generator);
  const auto counts = proportional_counts(client.train_set.histogram(), generated_count(beta, client.train_set.size()));
  auto batch = gan::generate_labeled(client.generator, counts, derive_seed(client.seed, "generate", r), client.id);
  return {std::move(client), std::move(batch)};
}

std::size_t CenterPool::size() const {
  std::size_t n = 0;
  for (const auto& items : by_class) n += items.size();
  return n;
}

std::vector<std::size_t> CenterPool::class_sizes() const {
  std::vector<std::size_t> sizes;
  for (const auto& items : by_class) sizes.push_back(items.size());
  return sizes;
}

CenterPool center_aggregate(std::span<const gan::GeneratedBatch> batches) {
  CenterPool pool;
  for (const auto& batch : batches) {
    if (pool.by_class.size() < static_cast<std::size_t>(batch.class_count)) {
      pool.by_class.resize(static_cast<std::size_t>(batch.class_count));
    }
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const int y = batch.labels[i];
      require(y >= 0 && y < batch.class_count, "uploaded label outside the class range");
      pool.by_class[static_cast<std::size_t>(y)].push_back(
          {batch.features.row(static_cast<Eigen::Index>(i)).transpose(), batch.origins[i]});
    }
  }
  if (pool.size() == 0) throw ContractError("center_aggregate: no samples were uploaded");
  return pool;
}

std::vector<gan::GeneratedBatch> center_dispatch(const CenterPool& pool, std::span<const std::size_t> request_sizes,
                                                 std::uint64_t seed, int round) {
  const std::size_t total = pool.size();
  if (total == 0) throw ContractError("center_dispatch: empty pool");
  std::vector<std::pair<int, const CenterPool::Item*>> flat;
  flat.reserve(total);
  for (std::size_t c = 0; c < pool.by_class.size(); ++c) {
    for (const auto& item : pool.by_class[c]) flat.emplace_back(static_cast<int>(c), &item);
  }
  const auto dim = flat.front().second->features.size();
  const std::uint64_t round_seed = derive_seed(seed, "dispatch", static_cast<std::uint64_t>(round));

  std::vector<gan::GeneratedBatch> packets;
  std::vector<std::size_t> order(total);
  for (std::size_t client = 0; client < request_sizes.size(); ++client) {
    const std::size_t want = request_sizes[client];
    if (want > total) {
      throw DispatchInfeasible("client " + std::to_string(client) + " requests " + std::to_string(want) +
                               " samples but the pool holds " + std::to_string(total));
    }
    Rng rng = make_rng(round_seed, "client", client);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = 0; i < want; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, total - 1);
      std::swap(order[i], order[pick(rng)]);
    }
    gan::GeneratedBatch packet;
    packet.class_count = static_cast<int>(pool.by_class.size());
    packet.features.resize(static_cast<Eigen::Index>(want), dim);
    for (std::size_t i = 0; i < want; ++i) {
      const auto& [label, item] = flat[order[i]];
      packet.features.row(static_cast<Eigen::Index>(i)) = item->features.transpose();
      packet.labels.push_back(label);
      packet.origins.push_back(item->origin);
    }
    packets.push_back(std::move(packet));
  }
  return packets;
}

LabeledDataset merge_received(const LabeledDataset& train_set, const gan::GeneratedBatch& packet) {
  if (packet.size() == 0) return train_set;
  for (int y : packet.labels) require(y >= 0 && y < train_set.class_count, "received label outside the class range");
  auto received = packet.to_dataset();
  received.class_count = train_set.class_count;
  return concat(train_set, received);
}

ClientState client_update(ClientState client, const gan::GeneratedBatch& packet, const nn::TrainOpts& opts,
                          int round) {
  require(client.initialized(), "client " + std::to_string(client.id) + " must be initialized before updating");
  const LabeledDataset merged = merge_received(client.train_set, packet);
  client.params = nn::train_classifier(std::move(client.params), merged, opts,
                                       derive_seed(client.seed, "update", static_cast<std::uint64_t>(round)));
  return client;
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w) pool.emplace_back(work);
  pool.clear();
  // Report the lowest-index failure so the error is schedule-independent.
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

Matrix probe_set(std::span<const ClientState> clients, std::size_t cap) {
  Eigen::Index rows = 0;
  for (const auto& c : clients) rows += c.test_view.features.rows();
  rows = std::min<Eigen::Index>(rows, static_cast<Eigen::Index>(cap));
  if (clients.empty()) return {};
  Matrix probe(rows, clients.front().spec.input_dim);
  Eigen::Index at = 0;
  for (const auto& c : clients) {
    const Eigen::Index take = std::min(rows - at, c.test_view.features.rows());
    probe.middleRows(at, take) = c.test_view.features.topRows(take);
    at += take;
    if (at == rows) break;
  }
  return probe;
}

double mean_pairwise_disagreement(std::span<const ClientState> clients, const Matrix& probe) {
  if (clients.size() < 2 || probe.rows() == 0) return 0.0;
  std::vector<std::vector<int>> preds;
  for (const auto& c : clients) preds.push_back(nn::predict(c.params, probe));
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (std::size_t j = i + 1; j < preds.size(); ++j, ++pairs) sum += theory::empirical_disagreement(preds[i], preds[j]);
  }
  return sum / static_cast<double>(pairs);
}

metrics::RoundMetrics evaluate_round(int round, std::span<const ClientState> clients, const Matrix& probe,
                                     int jobs) {
  std::vector<int> ids;
  std::vector<double> acc(clients.size());
  std::vector<double> base;
  for (const auto& c : clients) {
    ids.push_back(c.id);
    base.push_back(c.local_baseline_acc.value_or(0.0));
  }
  parallel_for(clients.size(), jobs, [&](std::size_t i) {
    acc[i] = nn::evaluate_accuracy(clients[i].params, clients[i].test_view);
  });
  return metrics::make_round(round, ids, acc, base, mean_pairwise_disagreement(clients, probe));
}

namespace {

template <typename Fn>
void in_phase(int round, const char* phase, Fn&& fn) {
  try {
    fn();
  } catch (const RoundError&) {
    throw;
  } catch (const std::exception& e) {
    throw RoundError(round, phase, e.what());
  }
}

nlohmann::json sizes_json(const std::vector<std::size_t>& sizes) { return nlohmann::json(sizes); }

}  // namespace

FederationResult run_perfed(std::vector<ClientState> clients, const FedConfig& config, const RunOptions& options) {
  config.validate();
  std::vector<metrics::Event> init_events;
  in_phase(0, "init", [&] {
    parallel_for(clients.size(), options.jobs, [&](std::size_t i) {
      clients[i] = client_local_init(std::move(clients[i]), config.init_train);
    });
  });
  for (const auto& c : clients) {
    init_events.push_back({0, "init",
                           {{"client_id", c.id},
                            {"train_size", c.train_set.size()},
                            {"test_size", c.test_view.size()},
                            {"hidden_widths", c.spec.hidden_widths},
                            {"local_baseline_acc", *c.local_baseline_acc}}});
  }
  FederationResult result = run_rounds(std::move(clients), config, options);
  result.log.events.insert(result.log.events.begin(), init_events.begin(), init_events.end());
  return result;
}

FederationResult run_rounds(std::vector<ClientState> clients, const FedConfig& config, const RunOptions& options) {
  config.validate();
  require(!clients.empty(), "run_rounds needs at least one client");
  for (const auto& c : clients) {
    require(c.initialized(), "client " + std::to_string(c.id) + " is not initialized");
  }
  FederationResult result;
  auto& log = result.log;
  const Matrix probe = probe_set(clients, options.probe_cap);
  log.rounds.push_back(evaluate_round(0, clients, probe, options.jobs));
  log.events.push_back({0, "eval", {{"mrta", log.rounds.back().mrta}}});

  const std::size_t n = clients.size();
  for (int round = 1; round <= config.max_round; ++round) {
    RoundTrace trace;
    trace.round = round;

    std::vector<gan::GeneratedBatch> uploads(n);
    in_phase(round, "gan", [&] {
      parallel_for(n, options.jobs, [&](std::size_t i) {
        auto [state, batch] = client_gan_phase(std::move(clients[i]), config.beta, config.gan, round);
        clients[i] = std::move(state);
        uploads[i] = std::move(batch);
      });
    });
    for (const auto& u : uploads) trace.upload_sizes.push_back(u.size());
    log.events.push_back({round, "gan", {{"upload_sizes", sizes_json(trace.upload_sizes)}}});

    CenterPool pool;
    in_phase(round, "aggregate", [&] { pool = center_aggregate(uploads); });
    trace.pool_size = pool.size();
    log.events.push_back({round, "aggregate", {{"pool_size", pool.size()}, {"class_sizes", sizes_json(pool.class_sizes())}}});

    std::vector<std::size_t> requests;
    for (const auto& c : clients) requests.push_back(generated_count(config.beta, c.train_set.size()));
    std::vector<gan::GeneratedBatch> packets;
    in_phase(round, "dispatch", [&] { packets = center_dispatch(pool, requests, options.center_seed, round); });
    for (const auto& p : packets) trace.packet_sizes.push_back(p.size());
    log.events.push_back({round, "dispatch", {{"packet_sizes", sizes_json(trace.packet_sizes)}}});

    in_phase(round, "update", [&] {
      parallel_for(n, options.jobs, [&](std::size_t i) {
        clients[i] = client_update(std::move(clients[i]), packets[i], config.update_train, round);
      });
    });
    for (std::size_t i = 0; i < n; ++i) trace.merged_sizes.push_back(merge_received(clients[i].train_set, packets[i]).size());
    log.events.push_back({round, "update", {{"merged_sizes", sizes_json(trace.merged_sizes)}}});

    in_phase(round, "eval", [&] { log.rounds.push_back(evaluate_round(round, clients, probe, options.jobs)); });
    log.events.push_back({round,
                          "eval",
                          {{"mrta", log.rounds.back().mrta},
                           {"mean_disagreement", log.rounds.back().mean_pairwise_disagreement}}});
    result.traces.push_back(std::move(trace));
    if (options.on_round) options.on_round(round, clients);
  }
  result.clients = std::move(clients);
  return result;
}

}  // namespace perfed::federation
