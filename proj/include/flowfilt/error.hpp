#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace flowfilt {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input violates a documented contract (shape, definiteness, range).
/// Carries every failure found, not just the first.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::string message)
      : Error(message), failures_{std::move(message)} {}
  explicit ValidationError(std::vector<std::string> failures)
      : Error(join(failures)), failures_(std::move(failures)) {}

  const std::vector<std::string>& failures() const { return failures_; }

 private:
  static std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (const auto& item : items) {
      if (!out.empty()) out += "; ";
      out += item;
    }
    return out;
  }

  std::vector<std::string> failures_;
};

/// A diffusion matrix that cannot be factored as q qᵀ.
class DiffusionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Failure while integrating: a singular homotopy Hessian or a particle
/// that left the finite reals.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class SingularHomotopyError : public NumericalError {
 public:
  SingularHomotopyError(double lambda, double min_eig, double max_eig)
      : NumericalError("homotopy Hessian numerically singular at lambda=" +
                       std::to_string(lambda) + " (eigenvalues of -S in [" +
                       std::to_string(min_eig) + ", " + std::to_string(max_eig) +
                       "])"),
        lambda_(lambda) {}

  double lambda() const { return lambda_; }

 private:
  double lambda_;
};

class DivergenceError : public NumericalError {
 public:
  DivergenceError(std::size_t particle, double lambda)
      : NumericalError("particle " + std::to_string(particle) +
                       " became non-finite at lambda=" + std::to_string(lambda)),
        particle_(particle),
        lambda_(lambda) {}

  std::size_t particle() const { return particle_; }
  double lambda() const { return lambda_; }

 private:
  std::size_t particle_;
  double lambda_;
};

class InsufficientSamplesError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace flowfilt
