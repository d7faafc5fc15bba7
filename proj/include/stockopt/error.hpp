#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace stockopt {

/// Base of every error raised by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// geometry
class ParseError : public Error {
public:
  using Error::Error;
};
class WatertightnessViolation : public Error {
public:
  using Error::Error;
};
class NegativeVolume : public Error {
public:
  using Error::Error;
};
class DegenerateTriangle : public Error {
public:
  using Error::Error;
};
class EmptyResult : public Error {
public:
  using Error::Error;
};

// stock
class EmptyStock : public Error {
public:
  using Error::Error;
};

// build simulation
class SolverDiverged : public Error {
public:
  SolverDiverged(int step, const std::string& what) : Error(what), step_(step) {}
  int step() const noexcept { return step_; }

private:
  int step_;
};
class SingularSystem : public Error {
public:
  using Error::Error;
};
class InvertedElement : public Error {
public:
  using Error::Error;
};

// metrics
class EmptyCloud : public Error {
public:
  using Error::Error;
};

// sparse grid
class OutOfBox : public Error {
public:
  using Error::Error;
};

// optimizer
class NoFeasiblePoint : public Error {
public:
  using Error::Error;
};

// configuration
class ConfigError : public Error {
public:
  ConfigError(std::string key, const std::string& reason)
      : Error(key.empty() ? reason : key + ": " + reason), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

private:
  std::string key_;
};

// pipeline
class EvaluationError : public Error {
public:
  EvaluationError(std::vector<double> point, const std::string& what)
      : Error(what), point_(std::move(point)) {}
  const std::vector<double>& point() const noexcept { return point_; }

private:
  std::vector<double> point_;
};

class LevelFailed : public Error {
public:
  LevelFailed(int level, std::vector<double> point, const std::string& what)
      : Error(what), level_(level), point_(std::move(point)) {}
  int level() const noexcept { return level_; }
  const std::vector<double>& point() const noexcept { return point_; }

private:
  int level_;
  std::vector<double> point_;
};

}  // namespace stockopt
