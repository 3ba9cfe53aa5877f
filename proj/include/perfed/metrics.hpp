#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace perfed::metrics {

double relative_test_accuracy(double fed_acc, double local_acc);
double mean_rta(std::span<const double> rtas);

struct ClientRecord {
  int client_id = 0;
  double test_accuracy = 0.0;
  double rta = 0.0;
};

/// Round 0 is the local baseline.
struct RoundMetrics {
  int round = 0;
  std::vector<ClientRecord> clients;
  double mrta = 0.0;
  double mean_pairwise_disagreement = 0.0;
};

/// Builds a RoundMetrics from per-client accuracies and baselines (same order).
RoundMetrics make_round(int round, std::span<const int> client_ids, std::span<const double> accuracies,
                        std::span<const double> baselines, double mean_disagreement);

struct Event {
  int round = 0;
  std::string phase;  // init, gan, aggregate, dispatch, update, eval
  nlohmann::json detail = nlohmann::json::object();
};

struct MetricsLog {
  std::vector<RoundMetrics> rounds;
  std::vector<Event> events;

  const RoundMetrics& final_round() const;
};

/// Shortest decimal form with 9 significant digits.
std::string format_float(double v);

/// JSON text with every floating-point number printed via format_float.
std::string dump_json(const nlohmann::json& j);

std::string per_client_csv(const MetricsLog& log);
std::string summary_csv(const MetricsLog& log);
std::string events_jsonl(const MetricsLog& log);

/// Writes `content` to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

/// per_client.csv, summary.csv and events.jsonl in `out_dir` (created if
/// missing).
void emit_logs(const MetricsLog& log, const std::filesystem::path& out_dir);

}  // namespace perfed::metrics
