#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace flowfilt {

/// Philox4x32-10 block function (Salmon et al., Random123).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

std::uint64_t splitmix64(std::uint64_t x);

/// Independent draw families sharing one seed.
enum class StreamDomain : std::uint32_t {
  prior_sample = 1,
  flow_noise = 2,
  process_noise = 3,
  measurement = 4,
};

/// Identifies one noise family. Each (particle, step) pair addresses its own
/// counter block, so draws do not depend on evaluation order or thread count.
struct NoiseKey {
  std::uint64_t seed = 0;
  StreamDomain domain = StreamDomain::flow_noise;

  /// Fills `out` with iid N(0, 1) draws for (particle, step).
  void normals(std::uint64_t particle, std::uint32_t step, std::span<double> out) const;
};

/// Sub-seed for the k-th epoch of a multi-stage run.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t epoch);

}  // namespace flowfilt
