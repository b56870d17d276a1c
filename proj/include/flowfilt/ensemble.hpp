#pragma once

#include "flowfilt/linalg.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace flowfilt {

/// Kernel dispatch. `serial` is the reference path; `parallel` uses OpenMP
/// and must reproduce it bit for bit.
enum class Execution { serial, parallel };

/// N particles in ℝⁿ at a common λ, stored one particle per column.
/// `ids` are the stable noise-stream identities of the particles.
struct Ensemble {
  Matrix particles;
  double lambda = 0.0;
  std::vector<std::uint64_t> ids;

  int dim() const { return static_cast<int>(particles.rows()); }
  std::size_t size() const { return static_cast<std::size_t>(particles.cols()); }
};

/// Wraps pinned particles (n×N) with ids 0..N−1. Requires N ≥ 1 and finite entries.
Ensemble make_ensemble(Matrix particles, double lambda = 0.0);

}  // namespace flowfilt
