#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "perfed/errors.hpp"
#include "perfed/metrics.hpp"

using namespace perfed;
using namespace perfed::metrics;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("perfed_metrics_" + name);
  std::filesystem::remove_all(p);
  return p;
}

MetricsLog sample_log(int rounds, int clients) {
  MetricsLog log;
  std::vector<int> ids;
  std::vector<double> base;
  for (int i = 0; i < clients; ++i) {
    ids.push_back(i);
    base.push_back(0.5 + 0.05 * i);
  }
  for (int r = 0; r <= rounds; ++r) {
    std::vector<double> acc;
    for (int i = 0; i < clients; ++i) acc.push_back(std::min(1.0, base[static_cast<std::size_t>(i)] + 0.01 * r));
    log.rounds.push_back(make_round(r, ids, r == 0 ? base : acc, base, 0.1 / (r + 1)));
    log.events.push_back({r, "eval", {{"mrta", log.rounds.back().mrta}}});
  }
  return log;
}

}  // namespace

TEST_CASE("relative test accuracy") {
  CHECK(std::abs(relative_test_accuracy(0.80, 0.60) - 1.333333333) <= 1e-9);
  CHECK(relative_test_accuracy(0.6, 0.6) == 1.0);
  CHECK(relative_test_accuracy(0.0, 0.5) == 0.0);
  CHECK_THROWS_AS(relative_test_accuracy(0.5, 0.0), UndefinedBaseline);
  CHECK_THROWS_AS(relative_test_accuracy(1.5, 0.5), ContractError);
}

TEST_CASE("mean rta is a plain mean and ignores order") {
  const std::vector<double> r{1.2, 0.9, 1.0};
  CHECK(mean_rta(r) == doctest::Approx(31.0 / 30.0));
  CHECK_THROWS_AS(mean_rta(std::vector<double>{}), ContractError);

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.2, 2.0);
  std::vector<double> xs(64);
  for (auto& x : xs) x = u(rng);
  const double ref = mean_rta(xs);
  for (int i = 0; i < 100; ++i) {
    std::shuffle(xs.begin(), xs.end(), rng);
    CHECK(std::abs(mean_rta(xs) - ref) <= 1e-12);
  }
}

TEST_CASE("make_round") {
  const std::vector<int> ids{3, 7};
  const std::vector<double> acc{0.8, 0.5};
  const std::vector<double> base{0.6, 0.5};
  const auto r0 = make_round(0, ids, acc, base, 0.2);
  CHECK(r0.mrta == 1.0);
  const auto r1 = make_round(1, ids, acc, base, 0.2);
  CHECK(r1.clients[0].client_id == 3);
  CHECK(r1.clients[0].rta == doctest::Approx(0.8 / 0.6));
  CHECK(r1.mrta == doctest::Approx((0.8 / 0.6 + 1.0) / 2));
  CHECK_THROWS_AS(make_round(1, ids, acc, std::vector<double>{0.6}, 0.0), ContractError);
}

TEST_CASE("format_float uses nine significant digits") {
  CHECK(format_float(1.0 / 3.0) == "0.333333333");
  CHECK(format_float(4.0 / 3.0) == "1.33333333");
  CHECK(format_float(1.0) == "1");
  CHECK(format_float(0.1) == "0.1");
  CHECK(dump_json({{"a", 1.0 / 3.0}, {"b", 2}, {"c", "x"}}) == R"({"a":0.333333333,"b":2,"c":"x"})");
}

TEST_CASE("emit_logs writes one row per client per round") {
  const auto dir = scratch_dir("rows");
  const auto log = sample_log(5, 8);
  emit_logs(log, dir);
  const auto per_client = slurp(dir / "per_client.csv");
  const auto summary = slurp(dir / "summary.csv");
  CHECK(line_count(per_client) == 1 + 6 * 8);
  CHECK(line_count(summary) == 1 + 6);
  CHECK(line_count(slurp(dir / "events.jsonl")) == 6);
  CHECK(per_client.rfind("round,client_id,test_accuracy,rta\n", 0) == 0);
  CHECK(summary.rfind("round,mrta,mean_disagreement\n", 0) == 0);
  CHECK_FALSE(std::filesystem::exists(dir / "summary.csv.tmp"));

  emit_logs(log, dir);
  CHECK(slurp(dir / "per_client.csv") == per_client);
  CHECK(slurp(dir / "summary.csv") == summary);

  // Each summary mrta equals the mean of that round's per-client rta column.
  std::istringstream rows(per_client);
  std::string line;
  std::getline(rows, line);
  std::vector<double> sums(6, 0.0);
  while (std::getline(rows, line)) {
    std::istringstream cells(line);
    std::string round, id, acc, rta;
    std::getline(cells, round, ',');
    std::getline(cells, id, ',');
    std::getline(cells, acc, ',');
    std::getline(cells, rta, ',');
    sums[static_cast<std::size_t>(std::stoi(round))] += std::stod(rta);
  }
  for (std::size_t r = 0; r < 6; ++r) CHECK(sums[r] / 8 == doctest::Approx(log.rounds[r].mrta).epsilon(1e-8));
  std::filesystem::remove_all(dir);
}

TEST_CASE("an empty log produces header-only files") {
  const auto dir = scratch_dir("empty");
  emit_logs(MetricsLog{}, dir);
  CHECK(slurp(dir / "per_client.csv") == "round,client_id,test_accuracy,rta\n");
  CHECK(slurp(dir / "summary.csv") == "round,mrta,mean_disagreement\n");
  CHECK(slurp(dir / "events.jsonl").empty());
  CHECK_THROWS_AS(MetricsLog{}.final_round(), ContractError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("emit_logs reports unwritable destinations") {
  const auto dir = scratch_dir("blocked");
  { std::ofstream(dir.string()) << "file, not a directory"; }
  CHECK_THROWS_AS(emit_logs(sample_log(1, 2), dir / "sub"), IoError);
  std::filesystem::remove_all(dir);
}
