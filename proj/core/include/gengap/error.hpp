#pragma once

#include <stdexcept>
#include <string>

namespace gengap {

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A class partition left some class without train points (or, on a paired
// dataset, without validation points).
class DegeneratePartition : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A sampler state became non-finite.
class NumericDivergence : public std::runtime_error {
 public:
  NumericDivergence(const std::string& what, double sigma)
      : std::runtime_error(what), sigma_(sigma) {}
  double sigma() const noexcept { return sigma_; }

 private:
  double sigma_;
};

class InvalidCovariance : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InfeasiblePlan : public std::runtime_error {
 public:
  InfeasiblePlan(const std::string& what, int class_id)
      : std::runtime_error(what), class_id_(class_id) {}
  int class_id() const noexcept { return class_id_; }

 private:
  int class_id_;
};

// Invalid experiment configuration; `where` is a JSON pointer or line:column.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& where, const std::string& what)
      : std::runtime_error(where.empty() ? what : where + ": " + what) {}
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gengap
