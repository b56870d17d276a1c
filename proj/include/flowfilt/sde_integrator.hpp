#pragma once

#include "flowfilt/ensemble.hpp"
#include "flowfilt/flow_dynamics.hpp"
#include "flowfilt/lyapunov.hpp"
#include "flowfilt/quadratic_model.hpp"
#include "flowfilt/rng.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace flowfilt {

enum class Scheme { euler_maruyama, rk4_deterministic };

struct IntegratorConfig {
  int steps = 1000;
  Scheme scheme = Scheme::euler_maruyama;
  std::uint64_t seed = 0;
  int record_every = 100;
  Execution execution = Execution::parallel;
};

/// Consumer of diagnostics batches. Batches arrive from a single thread in
/// (λ-step, particle) order.
class DiagnosticsSink {
 public:
  virtual ~DiagnosticsSink() = default;
  virtual void consume(std::span<const DiagnosticsRecord> batch) = 0;
};

class MemorySink : public DiagnosticsSink {
 public:
  void consume(std::span<const DiagnosticsRecord> batch) override {
    records.insert(records.end(), batch.begin(), batch.end());
  }

  std::vector<DiagnosticsRecord> records;
};

/// N iid draws from the prior N(−A_g⁻¹b_g, (−A_g)⁻¹) at λ = 0.
Ensemble sample_prior(const Homotopy& hom, std::size_t count, std::uint64_t seed,
                      Execution exec = Execution::parallel);

/// One Euler-Maruyama step of size dλ; step_index selects the noise block.
/// Throws DivergenceError if a particle becomes non-finite.
Ensemble step(Ensemble ens, const Homotopy& hom, const DiffusionSchedule& schedule,
              double dlambda, const NoiseKey& noise, std::uint32_t step_index,
              Execution exec = Execution::parallel);

/// Transports `ens0` from λ = 0 to λ = 1 in cfg.steps uniform steps. Records
/// are sent to `sink` (if any) at step 0, every cfg.record_every steps, and at
/// the final step.
Ensemble flow_to_posterior(Ensemble ens0, const Homotopy& hom, const DiffusionSchedule& schedule,
                           const IntegratorConfig& cfg, DiagnosticsSink* sink = nullptr);

}  // namespace flowfilt
