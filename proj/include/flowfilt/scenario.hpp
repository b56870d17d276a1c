#pragma once

#include "flowfilt/ensemble_stats.hpp"
#include "flowfilt/estimation_oracle.hpp"
#include "flowfilt/flow_dynamics.hpp"
#include "flowfilt/quadratic_model.hpp"
#include "flowfilt/sde_integrator.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace flowfilt {

enum class RunMode { single_update, sequential, diagnostics_sweep };

std::string_view to_string(RunMode mode);
std::string_view to_string(Scheme scheme);

struct SequentialConfig {
  LinearDynamics dynamics;
  std::vector<Vector> measurements;
};

/// A validated scenario document. See README for the JSON layout.
struct ScenarioConfig {
  std::string name;
  std::uint64_t seed = 0;
  int dimension = 0;
  Vector prior_mean;
  Matrix prior_covariance;
  std::optional<MeasurementModel> measurement;  // {H, R}
  std::optional<Vector> z;
  std::optional<QuadraticLogDensity> raw_likelihood;  // {A_h, b_h, c_h}
  DiffusionSchedule diffusion = DiffusionSchedule::zero(1);
  std::string diffusion_kind = "zero";
  std::size_t particles = 0;
  std::optional<Matrix> initial_particles;  // n×N, pinned
  IntegratorConfig integrator;
  RunMode mode = RunMode::single_update;
  int sweep_points = 101;
  std::optional<SequentialConfig> sequential;
  std::filesystem::path output_dir = ".";

  /// Homotopy of the single-update problem (prior × likelihood).
  Homotopy homotopy() const;
};

/// Parses and validates; throws ValidationError listing every failure found.
ScenarioConfig parse_scenario(std::string_view text, std::string_view origin = "<memory>");

/// Reads `path` (IoError if unreadable) and parses it.
ScenarioConfig load_scenario(const std::filesystem::path& path);

struct PartitionCounts {
  double lambda = 0.0;
  std::size_t s1 = 0;
  std::size_t s2 = 0;
  std::size_t s3 = 0;
};

struct StepSummary {
  std::size_t step = 0;
  SampleMoments sample;
  PosteriorMoments reference;
  double mahalanobis_gap = 0.0;
  double covariance_gap = 0.0;
};

struct RunSummary {
  std::string scenario;
  std::uint64_t seed = 0;
  RunMode mode = RunMode::single_update;
  bool ok = true;
  std::string error_kind;  // "numerical" or "validation" when !ok
  std::string error;
  std::optional<SampleMoments> final_moments;
  std::optional<PosteriorMoments> reference;
  std::optional<double> mahalanobis_gap;
  std::optional<double> covariance_gap;
  std::optional<double> v_drift;  // zero diffusion only
  std::optional<double> gamma_min;
  std::optional<double> gamma_max;
  std::vector<PartitionCounts> partitions;  // nearest recorded λ to 0, ½, 1
  std::vector<StepSummary> steps;            // sequential mode
  std::vector<std::filesystem::path> trace_files;
  double wall_seconds = 0.0;
};

struct RunOptions {
  std::optional<std::filesystem::path> out_dir;  // overrides cfg.output_dir
  bool quiet = true;
};

/// Runs the configured mode and writes `<name>_<seed>.trace.csv` (one per
/// step in sequential mode) plus `<name>_<seed>.summary.json`. Numerical
/// failures are caught and serialized into the summary with ok = false;
/// I/O failures throw IoError.
RunSummary run(const ScenarioConfig& cfg, const RunOptions& options = {});

std::string summary_to_json(const RunSummary& summary);

/// Header row of the trace CSV for dimension n.
std::string trace_header(int n);

/// Streams records to a CSV file with 17 significant digits.
class CsvTraceSink : public DiagnosticsSink {
 public:
  CsvTraceSink(const std::filesystem::path& path, int dim);
  ~CsvTraceSink() override;
  CsvTraceSink(const CsvTraceSink&) = delete;
  CsvTraceSink& operator=(const CsvTraceSink&) = delete;

  void consume(std::span<const DiagnosticsRecord> batch) override;
  void close();

 private:
  std::FILE* file_ = nullptr;
  std::filesystem::path path_;
  std::string line_;
};

/// Caps OpenMP worker count from FLOWFILT_THREADS if set to a positive
/// integer. Returns the cap applied, or 0.
int apply_thread_limit_from_env();

inline constexpr std::string_view kVersion = "1.0.0";

}  // namespace flowfilt
