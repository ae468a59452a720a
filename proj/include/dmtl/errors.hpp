#pragma once

#include <stdexcept>
#include <string>

namespace dmtl {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller passed inconsistent dimensions or an out-of-range parameter.
class UsageError : public Error {
 public:
  using Error::Error;
};

// A linear system that must be positive definite was not.
class SingularityError : public Error {
 public:
  using Error::Error;
};

// An iterate became non-finite or exceeded the divergence cap.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int iteration, int agent)
      : Error(what), iteration_(iteration), agent_(agent) {}
  int iteration() const { return iteration_; }
  int agent() const { return agent_; }

 private:
  int iteration_;
  int agent_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Invalid experiment configuration; key() names the offending entry.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& why)
      : Error(key + ": " + why), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

}  // namespace dmtl
