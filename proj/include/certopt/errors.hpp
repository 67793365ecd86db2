#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace certopt {

// Root of every error the library throws. The CLI maps all of these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input outside a problem's variable bounds.
class DomainError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

// Operation called on an object that is not ready for it (e.g. unfitted normalization).
class StateError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& what, std::size_t epoch) : Error(what), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

class SearchFailed : public Error {
 public:
  using Error::Error;
};

class InsufficientPopulation : public Error {
 public:
  using Error::Error;
};

// Surrogate produced a non-finite output during optimization.
class OptimizationAborted : public Error {
 public:
  OptimizationAborted(const std::string& what, std::size_t iteration, std::size_t particle)
      : Error(what), iteration_(iteration), particle_(particle) {}
  std::size_t iteration() const noexcept { return iteration_; }
  std::size_t particle() const noexcept { return particle_; }

 private:
  std::size_t iteration_;
  std::size_t particle_;
};

}  // namespace certopt
