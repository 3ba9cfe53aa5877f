#include "perfed/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "perfed/errors.hpp"

namespace perfed::metrics {

double relative_test_accuracy(double fed_acc, double local_acc) {
  if (!(local_acc > 0.0)) throw UndefinedBaseline("relative test accuracy needs a positive local baseline");
  require(fed_acc >= 0.0 && fed_acc <= 1.0 && local_acc <= 1.0, "accuracies must lie in [0, 1]");
  return fed_acc / local_acc;
}

double mean_rta(std::span<const double> rtas) {
  if (rtas.empty()) throw ContractError("mean_rta of an empty list");
  return std::accumulate(rtas.begin(), rtas.end(), 0.0) / static_cast<double>(rtas.size());
}

RoundMetrics make_round(int round, std::span<const int> client_ids, std::span<const double> accuracies,
                        std::span<const double> baselines, double mean_disagreement) {
  require(client_ids.size() == accuracies.size() && accuracies.size() == baselines.size(),
          "make_round: per-client inputs must have equal lengths");
  RoundMetrics m;
  m.round = round;
  m.mean_pairwise_disagreement = mean_disagreement;
  std::vector<double> rtas;
  for (std::size_t i = 0; i < client_ids.size(); ++i) {
    // The baseline round compares each client with itself.
    const double rta = round == 0 ? 1.0 : relative_test_accuracy(accuracies[i], baselines[i]);
    m.clients.push_back({client_ids[i], accuracies[i], rta});
    rtas.push_back(rta);
  }
  m.mrta = rtas.empty() ? 0.0 : mean_rta(rtas);
  return m;
}

const RoundMetrics& MetricsLog::final_round() const {
  if (rounds.empty()) throw ContractError("metrics log has no rounds");
  return rounds.back();
}

std::string format_float(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

namespace {

void dump_into(const nlohmann::json& j, std::string& out) {
  switch (j.type()) {
    case nlohmann::json::value_t::object: {
      out += '{';
      bool first = true;
      for (const auto& [key, value] : j.items()) {
        if (!first) out += ',';
        first = false;
        out += nlohmann::json(key).dump();
        out += ':';
        dump_into(value, out);
      }
      out += '}';
      break;
    }
    case nlohmann::json::value_t::array: {
      out += '[';
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ',';
        dump_into(j[i], out);
      }
      out += ']';
      break;
    }
    case nlohmann::json::value_t::number_float: {
      const double v = j.get<double>();
      out += std::isfinite(v) ? format_float(v) : "null";
      break;
    }
    default:
      out += j.dump();
  }
}

}  // namespace

std::string dump_json(const nlohmann::json& j) {
  std::string out;
  dump_into(j, out);
  return out;
}

std::string per_client_csv(const MetricsLog& log) {
  std::ostringstream os;
  os << "round,client_id,test_accuracy,rta\n";
  for (const auto& r : log.rounds) {
    for (const auto& c : r.clients) {
      os << r.round << ',' << c.client_id << ',' << format_float(c.test_accuracy) << ',' << format_float(c.rta) << '\n';
    }
  }
  return os.str();
}

std::string summary_csv(const MetricsLog& log) {
  std::ostringstream os;
  os << "round,mrta,mean_disagreement\n";
  for (const auto& r : log.rounds) {
    os << r.round << ',' << format_float(r.mrta) << ',' << format_float(r.mean_pairwise_disagreement) << '\n';
  }
  return os.str();
}

std::string events_jsonl(const MetricsLog& log) {
  std::string out;
  for (const auto& e : log.events) {
    nlohmann::json j;
    j["round"] = e.round;
    j["phase"] = e.phase;
    j["detail"] = e.detail;
    out += dump_json(j);
    out += '\n';
  }
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
    f << content;
    f.flush();
    if (!f) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

void emit_logs(const MetricsLog& log, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());
  write_file_atomic(out_dir / "per_client.csv", per_client_csv(log));
  write_file_atomic(out_dir / "summary.csv", summary_csv(log));
  write_file_atomic(out_dir / "events.jsonl", events_jsonl(log));
}

}  // namespace perfed::metrics
