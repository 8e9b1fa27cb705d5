#pragma once

#include <stdexcept>
#include <string>

namespace lieneurons {

// Shape or value of an argument violates an operation's precondition.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A matrix could not be expressed in an algebra's basis.
class SpanError : public std::runtime_error {
 public:
  SpanError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

// Conjugation by a group element left the algebra, i.e. the element is not in
// the group generated by the algebra.
class StructureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The principal matrix logarithm does not exist (eigenvalue on the closed
// negative real axis).
class LogUndefinedError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Misuse of the differentiation engine, e.g. backward() on a graph-free value.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed checkpoint or dataset file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A sample generator exhausted its rejection budget.
class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::size_t epoch, std::size_t step)
      : std::runtime_error(what), epoch_(epoch), step_(step) {}
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t epoch_;
  std::size_t step_;
};

}  // namespace lieneurons
