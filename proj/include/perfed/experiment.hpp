#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "perfed/baselines.hpp"
#include "perfed/datagen.hpp"
#include "perfed/federation.hpp"

namespace perfed {

enum class Method { perfed, local, fedavg, fedprox };

std::string to_string(Method m);
std::optional<Method> parse_method(const std::string& s);

struct TaskConfig {
  int class_count = 4;
  int dim = 2;
  /// Explicit class means; ring_means(class_count, dim, radius) when empty.
  std::vector<std::vector<double>> means;
  double radius = 3.0;
  double scale = 1.0;
  std::size_t train_size = 4000;
  std::size_t test_size = 2000;

  datagen::MixtureSpec mixture() const;
};

struct ArchConfig {
  std::vector<int> depth_choices{1, 2};
  std::vector<int> width_menu{8, 12, 16, 24, 32};
  /// When set, every client uses these hidden widths (same-architecture cohort).
  std::vector<int> shared_hidden_widths;
};

struct BaselineSettings {
  int rounds = 5;
  int local_epochs = 2;
  double prox_mu = 0.01;
};

/// Everything a run needs. Every random stream is derived from master_seed:
/// derive_seed(master_seed, purpose, index) for purposes task, partition,
/// client, arch, test-view and center.
struct ExperimentConfig {
  TaskConfig task;
  datagen::PartitionPlan partition{.client_count = 8,
                                   .per_client_size = 100,
                                   .mode = datagen::PartitionMode::noniid,
                                   .major_class_fraction = 0.5,
                                   .major_sample_fraction = 0.9,
                                   .seed = 0};  // seed is derived
  ArchConfig arch;
  federation::FedConfig fed;
  int latent_dim = 8;
  Method method = Method::perfed;
  BaselineSettings baseline;
  std::optional<std::uint64_t> master_seed;
  std::string out_dir = "out";
  int jobs = 1;

  /// Collects every violated invariant as "field.path: message".
  std::vector<std::string> validation_errors() const;
  void validate() const;
  std::uint64_t seed() const;
};

/// Parses and validates; unknown keys are rejected. Throws ConfigError
/// listing every failure.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// The config as JSON with every default filled in.
nlohmann::json config_to_json(const ExperimentConfig& config);

struct Experiment {
  datagen::Task task;
  std::vector<LabeledDataset> partitions;
  std::vector<std::vector<int>> major_classes;
  std::vector<federation::ClientState> clients;
};

/// Task, partition, per-client architectures, test views and fresh clients.
Experiment build_experiment(const ExperimentConfig& config);

federation::FederationResult run_experiment(const ExperimentConfig& config);

/// Runs and writes per_client.csv, summary.csv and events.jsonl to out_dir.
federation::FederationResult run_and_emit(const ExperimentConfig& config);

/// client_id,class_id,count rows for every client and class.
std::string partition_csv(const std::vector<LabeledDataset>& partitions);

}  // namespace perfed
