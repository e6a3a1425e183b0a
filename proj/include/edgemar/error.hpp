#pragma once

#include <stdexcept>
#include <string>

namespace edgemar {

// Base for every error raised by the library. `kind()` is a stable machine
// readable tag used by the CLI error JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& what) : Error("parameter", what) {}
};

// Bad command-line usage; the CLI maps it to a distinct exit code.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error("usage", what) {}
};

class InfeasibleError : public Error {
 public:
  InfeasibleError(std::string binding, const std::string& what)
      : Error("infeasible", what), binding_(std::move(binding)) {}

  // "capacity" or "cache"
  const std::string& binding() const noexcept { return binding_; }

 private:
  std::string binding_;
};

class SizeError : public Error {
 public:
  explicit SizeError(const std::string& what) : Error("size", what) {}
};

class TrainingError : public Error {
 public:
  TrainingError(int epoch, const std::string& what) : Error("training", what), epoch_(epoch) {}

  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage", stage + ": " + what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace edgemar
