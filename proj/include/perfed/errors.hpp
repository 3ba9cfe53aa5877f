#pragma once

#include <stdexcept>
#include <string>

namespace perfed {

// Every failure surfaced by the library derives from Error and carries a short
// category string used by the CLI for its single-line error report.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& what)
      : std::runtime_error(what), category_(std::move(category)) {}

  const std::string& category() const noexcept { return category_; }

 private:
  std::string category_;
};

struct ContractError : Error {
  explicit ContractError(const std::string& what) : Error("contract", what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

struct NumericDivergence : Error {
  explicit NumericDivergence(const std::string& what) : Error("numeric-divergence", what) {}
};

struct PartitionInfeasible : Error {
  explicit PartitionInfeasible(const std::string& what) : Error("partition-infeasible", what) {}
};

struct DispatchInfeasible : Error {
  explicit DispatchInfeasible(const std::string& what) : Error("dispatch-infeasible", what) {}
};

struct UndefinedBaseline : Error {
  explicit UndefinedBaseline(const std::string& what) : Error("undefined-baseline", what) {}
};

struct RoundError : Error {
  RoundError(int round, const std::string& phase, const std::string& what)
      : Error("round", "round " + std::to_string(round) + " phase " + phase + ": " + what),
        round_(round),
        phase_(phase) {}

  int round() const noexcept { return round_; }
  const std::string& phase() const noexcept { return phase_; }

 private:
  int round_;
  std::string phase_;
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error("io", what) {}
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractError(what);
}

}  // namespace perfed
