#pragma once

#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>

namespace kernelbound {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// A coefficient produced NaN or infinity at a given equation index and point.
class NonFiniteError : public Error {
 public:
  NonFiniteError(std::string what_item, int index, std::string where)
      : Error(what_item + " is not finite for index " + std::to_string(index + 1) + " at " + where),
        item(std::move(what_item)),
        component(index),
        point(std::move(where)) {}
  std::string item;
  int component;
  std::string point;
};

class HypothesisViolation : public Error {
 public:
  HypothesisViolation(std::string msg, int index = -1) : Error(std::move(msg)), component(index) {}
  int component;
};

class SynthesisError : public Error {
 public:
  SynthesisError(std::string constraint_id, int index, const std::string& detail)
      : Error("no feasible choice for " + constraint_id +
              (index >= 0 ? " (k=" + std::to_string(index + 1) + ")" : std::string()) + ": " + detail),
        constraint(std::move(constraint_id)),
        component(index) {}
  std::string constraint;
  int component;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class SaturationError : public Error {
 public:
  explicit SaturationError(double log_value)
      : Error("value exp(" + std::to_string(log_value) + ") is outside double range"), log(log_value) {}
  double log;
};

class CertificateFailure : public Error {
 public:
  using Error::Error;
};

class LedgerError : public Error {
 public:
  LedgerError(std::string ledger_item, std::string where)
      : Error("ledger item " + ledger_item + " is not finite at " + where),
        item(std::move(ledger_item)),
        point(std::move(where)) {}
  std::string item;
  std::string point;
};

class AssemblyError : public Error {
 public:
  using Error::Error;
};

class SolverError : public Error {
 public:
  SolverError(const std::string& msg, long iters, double resid)
      : Error(msg + " (iterations=" + std::to_string(iters) + ", residual=" + std::to_string(resid) + ")"),
        iterations(iters),
        residual(resid) {}
  long iterations;
  double residual;
};

class BudgetError : public Error {
 public:
  BudgetError(std::size_t want, std::size_t limit)
      : Error("grid needs " + std::to_string(want) + " unknowns, budget is " + std::to_string(limit)),
        requested(want),
        budget(limit) {}
  std::size_t requested;
  std::size_t budget;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& msg, int line_no = 0, std::string key = {})
      : Error(format(msg, line_no, key)), line(line_no), field(std::move(key)) {}
  int line;
  std::string field;

 private:
  static std::string format(const std::string& msg, int line_no, const std::string& key) {
    std::ostringstream os;
    os << "config";
    if (line_no > 0) os << " line " << line_no;
    if (!key.empty()) os << " [" << key << "]";
    os << ": " << msg;
    return os.str();
  }
};

}  // namespace kernelbound
