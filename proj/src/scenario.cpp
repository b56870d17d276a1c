#include "flowfilt/scenario.hpp"

#include "flowfilt/error.hpp"
#include "flowfilt/lyapunov.hpp"

#include <nlohmann/json.hpp>
#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <unordered_map>

namespace flowfilt {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(RunMode mode) {
  switch (mode) {
    case RunMode::single_update:
      return "single_update";
    case RunMode::sequential:
      return "sequential";
    case RunMode::diagnostics_sweep:
      return "diagnostics_sweep";
  }
  return "single_update";
}

std::string_view to_string(Scheme scheme) {
  return scheme == Scheme::euler_maruyama ? "euler_maruyama" : "rk4_deterministic";
}

namespace {

constexpr Eigen::Index kAny = -1;

// Collects every validation failure instead of stopping at the first one.
class Reader {
 public:
  std::vector<std::string> failures;

  void fail(std::string message) { failures.push_back(std::move(message)); }

  const json* child(const json& parent, const std::string& key, const std::string& path,
                    bool required) {
    if (!parent.is_object() || !parent.contains(key)) {
      if (required) fail(path + " is required");
      return nullptr;
    }
    return &parent.at(key);
  }

  std::optional<double> number(const json& parent, const std::string& key,
                               const std::string& path, bool required) {
    const json* node = child(parent, key, path, required);
    if (node == nullptr) return std::nullopt;
    if (!node->is_number()) {
      fail(path + " must be a number");
      return std::nullopt;
    }
    const double v = node->get<double>();
    if (!std::isfinite(v)) {
      fail(path + " must be finite");
      return std::nullopt;
    }
    return v;
  }

  std::optional<long long> integer(const json& parent, const std::string& key,
                                   const std::string& path, bool required) {
    const json* node = child(parent, key, path, required);
    if (node == nullptr) return std::nullopt;
    if (!node->is_number_integer()) {
      fail(path + " must be an integer");
      return std::nullopt;
    }
    return node->get<long long>();
  }

  std::optional<std::string> string(const json& parent, const std::string& key,
                                    const std::string& path, bool required) {
    const json* node = child(parent, key, path, required);
    if (node == nullptr) return std::nullopt;
    if (!node->is_string()) {
      fail(path + " must be a string");
      return std::nullopt;
    }
    return node->get<std::string>();
  }

  std::optional<Vector> vector(const json& parent, const std::string& key,
                               const std::string& path, bool required,
                               Eigen::Index expected = kAny) {
    const json* node = child(parent, key, path, required);
    if (node == nullptr) return std::nullopt;
    return as_vector(*node, path, expected);
  }

  std::optional<Vector> as_vector(const json& node, const std::string& path,
                                  Eigen::Index expected) {
    if (!node.is_array()) {
      fail(path + " must be an array of numbers");
      return std::nullopt;
    }
    Vector out(static_cast<Eigen::Index>(node.size()));
    for (std::size_t i = 0; i < node.size(); ++i) {
      if (!node[i].is_number()) {
        fail(path + "[" + std::to_string(i) + "] must be a number");
        return std::nullopt;
      }
      out[static_cast<Eigen::Index>(i)] = node[i].get<double>();
    }
    if (expected != kAny && out.size() != expected) {
      fail("dimension mismatch: " + path + " has length " + std::to_string(out.size()) +
           ", expected " + std::to_string(expected));
      return std::nullopt;
    }
    return out;
  }

  /// Row-major nested arrays; a bare number is accepted as a 1x1 matrix.
  std::optional<Matrix> matrix(const json& parent, const std::string& key,
                               const std::string& path, bool required,
                               Eigen::Index rows = kAny, Eigen::Index cols = kAny) {
    const json* node = child(parent, key, path, required);
    if (node == nullptr) return std::nullopt;
    return as_matrix(*node, path, rows, cols);
  }

  std::optional<Matrix> as_matrix(const json& node, const std::string& path,
                                  Eigen::Index rows, Eigen::Index cols) {
    Matrix out;
    if (node.is_number()) {
      out = Matrix::Constant(1, 1, node.get<double>());
    } else if (node.is_array() && !node.empty() && node[0].is_array()) {
      const std::size_t width = node[0].size();
      out.resize(static_cast<Eigen::Index>(node.size()), static_cast<Eigen::Index>(width));
      for (std::size_t r = 0; r < node.size(); ++r) {
        if (!node[r].is_array() || node[r].size() != width) {
          fail(path + " rows must be arrays of equal length");
          return std::nullopt;
        }
        for (std::size_t c = 0; c < width; ++c) {
          if (!node[r][c].is_number()) {
            fail(path + "[" + std::to_string(r) + "][" + std::to_string(c) +
                 "] must be a number");
            return std::nullopt;
          }
          out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
              node[r][c].get<double>();
        }
      }
    } else {
      fail(path + " must be a matrix (array of row arrays)");
      return std::nullopt;
    }
    if ((rows != kAny && out.rows() != rows) || (cols != kAny && out.cols() != cols)) {
      fail("dimension mismatch: " + path + " is " + std::to_string(out.rows()) + "x" +
           std::to_string(out.cols()) + ", expected " +
           (rows != kAny ? std::to_string(rows) : std::string("?")) + "x" +
           (cols != kAny ? std::to_string(cols) : std::string("?")));
      return std::nullopt;
    }
    return out;
  }

  bool spd(const Matrix& m, const std::string& what) {
    try {
      require_spd(m, what);
      return true;
    } catch (const ValidationError& e) {
      fail(e.what());
      return false;
    }
  }
};

std::string describe_parse_error(const json::parse_error& e, std::string_view text,
                                 std::string_view origin) {
  std::size_t line = 1, column = 1;
  const std::size_t limit = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
  for (std::size_t i = 0; i < limit; ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  std::ostringstream msg;
  msg << origin << ":" << line << ":" << column << ": parse error: " << e.what();
  return msg.str();
}

ordered_json to_json(const Vector& v) {
  ordered_json out = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

ordered_json to_json(const Matrix& m) {
  ordered_json out = ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

ordered_json optional_number(const std::optional<double>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

// Forwards records to the CSV writer and tracks exact-flow V drift and
// partition occupancy per recorded λ.
class RunCollector : public DiagnosticsSink {
 public:
  RunCollector(DiagnosticsSink* csv, bool track_v_drift) : csv_(csv), track_(track_v_drift) {}

  void consume(std::span<const DiagnosticsRecord> batch) override {
    if (csv_ != nullptr) csv_->consume(batch);
    for (const auto& rec : batch) {
      auto& counts = partitions_[rec.lambda];
      counts.lambda = rec.lambda;
      switch (rec.partition) {
        case Partition::S1:
          ++counts.s1;
          break;
        case Partition::S2:
          ++counts.s2;
          break;
        case Partition::S3:
          ++counts.s3;
          break;
      }
      if (!track_) continue;
      if (rec.lambda == 0.0) {
        initial_v1_[rec.particle_id] = rec.v1;
        continue;
      }
      const auto it = initial_v1_.find(rec.particle_id);
      if (it == initial_v1_.end()) continue;
      const double drift = std::abs(rec.v - it->second) / std::max(it->second, 1e-12);
      v_drift_ = std::max(v_drift_.value_or(0.0), drift);
    }
  }

  std::optional<double> v_drift() const {
    if (!track_) return std::nullopt;
    return v_drift_.value_or(0.0);
  }

  std::vector<PartitionCounts> nearest_partitions() const {
    std::vector<PartitionCounts> out;
    if (partitions_.empty()) return out;
    for (double target : {0.0, 0.5, 1.0}) {
      const auto best = std::min_element(
          partitions_.begin(), partitions_.end(), [target](const auto& a, const auto& b) {
            return std::abs(a.first - target) < std::abs(b.first - target);
          });
      out.push_back(best->second);
    }
    return out;
  }

 private:
  DiagnosticsSink* csv_;
  bool track_;
  std::unordered_map<std::uint64_t, double> initial_v1_;
  std::optional<double> v_drift_;
  std::map<double, PartitionCounts> partitions_;
};

void gamma_range(const Homotopy& hom, const DiffusionSchedule& diffusion, int steps,
                 RunSummary& summary) {
  for (int j = 0; j <= steps; ++j) {
    const double lambda = (j == steps) ? 1.0 : static_cast<double>(j) / steps;
    const double g = gamma(hom, lambda, diffusion.at(lambda));
    summary.gamma_min = std::min(summary.gamma_min.value_or(g), g);
    summary.gamma_max = std::max(summary.gamma_max.value_or(g), g);
  }
}

void run_single(const ScenarioConfig& cfg, const std::filesystem::path& dir,
                const std::string& stem, RunSummary& summary) {
  const Homotopy hom = cfg.homotopy();
  IntegratorConfig ic = cfg.integrator;
  if (cfg.mode == RunMode::diagnostics_sweep) {
    ic.record_every = ic.steps / (cfg.sweep_points - 1);
  }
  Ensemble ens0 = cfg.initial_particles ? make_ensemble(*cfg.initial_particles)
                                        : sample_prior(hom, cfg.particles, cfg.seed, ic.execution);

  const auto trace_path = dir / (stem + ".trace.csv");
  CsvTraceSink csv(trace_path, cfg.dimension);
  summary.trace_files.push_back(trace_path);
  RunCollector collector(&csv, cfg.diffusion.is_zero());
  const Ensemble final_ens = flow_to_posterior(std::move(ens0), hom, cfg.diffusion, ic, &collector);
  csv.close();

  summary.v_drift = collector.v_drift();
  summary.partitions = collector.nearest_partitions();
  gamma_range(hom, cfg.diffusion, ic.steps, summary);
  summary.reference = hom.posterior_moments(1.0);
  if (final_ens.size() >= 2) {
    const SampleMoments sm = sample_moments(final_ens, ic.execution);
    summary.mahalanobis_gap = mahalanobis_gap(sm, *summary.reference);
    summary.covariance_gap = covariance_gap(sm, *summary.reference);
    summary.final_moments = sm;
  }
}

void run_sequential(const ScenarioConfig& cfg, const std::filesystem::path& dir,
                    const std::string& stem, RunSummary& summary) {
  const PosteriorMoments init{cfg.prior_mean, cfg.prior_covariance};
  const SequentialConfig& seq = *cfg.sequential;
  const MeasurementModel& mm = *cfg.measurement;

  std::vector<std::unique_ptr<CsvTraceSink>> sinks;
  auto sink_for_step = [&](std::size_t k) -> DiagnosticsSink* {
    const auto path = dir / (stem + ".step" + std::to_string(k) + ".trace.csv");
    summary.trace_files.push_back(path);
    sinks.push_back(std::make_unique<CsvTraceSink>(path, cfg.dimension));
    return sinks.back().get();
  };
  const auto steps = sequential_flow_filter(init, seq.dynamics, mm, seq.measurements,
                                            cfg.diffusion, cfg.integrator, cfg.particles,
                                            sink_for_step);
  for (auto& sink : sinks) sink->close();
  const auto kalman = kalman_filter(init, seq.dynamics, mm, seq.measurements);

  for (std::size_t k = 0; k < steps.size(); ++k) {
    StepSummary st;
    st.step = k;
    st.sample = {steps[k].estimate.mean, steps[k].estimate.covariance, cfg.particles};
    st.reference = kalman[k];
    st.mahalanobis_gap = mahalanobis_gap(st.sample, st.reference);
    st.covariance_gap = covariance_gap(st.sample, st.reference);
    summary.steps.push_back(st);

    const Homotopy hom(from_gaussian_prior(steps[k].predicted.mean, steps[k].predicted.covariance),
                       from_linear_gaussian_measurement(mm.h, mm.r, seq.measurements[k]));
    gamma_range(hom, cfg.diffusion, cfg.integrator.steps, summary);
  }
  if (!summary.steps.empty()) {
    const StepSummary& last = summary.steps.back();
    summary.final_moments = last.sample;
    summary.reference = last.reference;
    summary.mahalanobis_gap = last.mahalanobis_gap;
    summary.covariance_gap = last.covariance_gap;
  }
}

}  // namespace

Homotopy ScenarioConfig::homotopy() const {
  QuadraticLogDensity prior = from_gaussian_prior(prior_mean, prior_covariance);
  if (raw_likelihood) return Homotopy(std::move(prior), *raw_likelihood);
  if (!measurement || !z) {
    throw ValidationError("scenario has no single-update likelihood (needs H, R and z)");
  }
  return Homotopy(std::move(prior), from_linear_gaussian_measurement(measurement->h, measurement->r, *z));
}

ScenarioConfig parse_scenario(std::string_view text, std::string_view origin) {
  json root;
  try {
    root = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ValidationError(describe_parse_error(e, text, origin));
  }
  if (!root.is_object()) throw ValidationError(std::string(origin) + ": top level must be an object");

  Reader rd;
  ScenarioConfig cfg;

  if (auto name = rd.string(root, "name", "name", true)) {
    if (name->empty() || name->find_first_of("/\\") != std::string::npos) {
      rd.fail("name must be non-empty and contain no path separators");
    }
    cfg.name = *name;
  }
  if (const json* seed = rd.child(root, "seed", "seed", true)) {
    if (seed->is_number_unsigned()) {
      cfg.seed = seed->get<std::uint64_t>();
    } else if (seed->is_number_integer() && seed->get<long long>() >= 0) {
      cfg.seed = static_cast<std::uint64_t>(seed->get<long long>());
    } else {
      rd.fail("seed must be a non-negative 64-bit integer");
    }
  }
  const auto dim = rd.integer(root, "dimension", "dimension", true);
  if (dim && *dim < 1) rd.fail("dimension must be >= 1");
  if (!dim || *dim < 1) throw ValidationError(rd.failures);
  const Eigen::Index n = *dim;
  cfg.dimension = static_cast<int>(n);

  // mode first: it decides which blocks are required
  if (auto mode = rd.string(root, "mode", "mode", false)) {
    if (*mode == "single_update") {
      cfg.mode = RunMode::single_update;
    } else if (*mode == "sequential") {
      cfg.mode = RunMode::sequential;
    } else if (*mode == "diagnostics_sweep") {
      cfg.mode = RunMode::diagnostics_sweep;
    } else {
      rd.fail("mode must be one of single_update, sequential, diagnostics_sweep");
    }
  }

  if (const json* prior = rd.child(root, "prior", "prior", true)) {
    auto mean = rd.vector(*prior, "mean", "prior.mean", true, n);
    auto cov = rd.matrix(*prior, "covariance", "prior.covariance", true, n, n);
    if (mean) cfg.prior_mean = *mean;
    if (cov && rd.spd(*cov, "prior.covariance")) cfg.prior_covariance = *cov;
  }

  if (const json* lik = rd.child(root, "likelihood", "likelihood", true)) {
    const bool measurement_form = lik->is_object() && lik->contains("H");
    const bool raw_form = lik->is_object() && lik->contains("A_h");
    if (measurement_form == raw_form) {
      rd.fail("likelihood must give either {H, R, z} or {A_h, b_h, c_h}");
    } else if (measurement_form) {
      auto h = rd.matrix(*lik, "H", "likelihood.H", true, kAny, n);
      const Eigen::Index d = h ? h->rows() : kAny;
      auto r = rd.matrix(*lik, "R", "likelihood.R", true, d, d);
      auto z = rd.vector(*lik, "z", "likelihood.z", cfg.mode != RunMode::sequential, d);
      if (h && r && rd.spd(*r, "likelihood.R")) cfg.measurement = MeasurementModel{*h, *r};
      cfg.z = z;
    } else {
      if (cfg.mode == RunMode::sequential) {
        rd.fail("sequential mode needs a measurement likelihood {H, R}");
      }
      auto a = rd.matrix(*lik, "A_h", "likelihood.A_h", true, n, n);
      auto b = rd.vector(*lik, "b_h", "likelihood.b_h", true, n);
      auto c = rd.number(*lik, "c_h", "likelihood.c_h", false);
      if (a) {
        const Vector ev = symmetric_eigenvalues(*a);
        if (ev.maxCoeff() > 1e-12 * std::max(1.0, max_abs(*a))) {
          std::ostringstream msg;
          msg << "(A3) violated: likelihood.A_h has eigenvalue " << ev.maxCoeff() << " > 0";
          rd.fail(msg.str());
        } else if (b) {
          cfg.raw_likelihood = QuadraticLogDensity(*a, *b, c.value_or(0.0));
        }
      }
    }
  }

  if (const json* diff = rd.child(root, "diffusion", "diffusion", true)) {
    const auto kind = rd.string(*diff, "kind", "diffusion.kind", true);
    try {
      if (!kind) {
      } else if (*kind == "zero") {
        cfg.diffusion = DiffusionSchedule::zero(static_cast<int>(n));
      } else if (*kind == "constant") {
        if (auto q = rd.matrix(*diff, "Q", "diffusion.Q", true, n, n)) {
          cfg.diffusion = DiffusionSchedule::constant(*q);
        }
      } else if (*kind == "scalar_identity") {
        if (auto s = rd.number(*diff, "scale", "diffusion.scale", true)) {
          cfg.diffusion = DiffusionSchedule::scaled_identity(static_cast<int>(n), *s);
        }
      } else if (*kind == "knots") {
        const json* knots = rd.child(*diff, "knots", "diffusion.knots", true);
        if (knots != nullptr && knots->is_array()) {
          std::vector<std::pair<double, Matrix>> table;
          for (std::size_t i = 0; i < knots->size(); ++i) {
            const std::string path = "diffusion.knots[" + std::to_string(i) + "]";
            auto l = rd.number((*knots)[i], "lambda", path + ".lambda", true);
            auto q = rd.matrix((*knots)[i], "Q", path + ".Q", true, n, n);
            if (l && q) table.emplace_back(*l, *q);
          }
          if (table.size() == knots->size()) cfg.diffusion = DiffusionSchedule::knots(std::move(table));
        } else if (knots != nullptr) {
          rd.fail("diffusion.knots must be an array");
        }
      } else {
        rd.fail("diffusion.kind must be one of zero, constant, scalar_identity, knots");
      }
      if (kind) cfg.diffusion_kind = *kind;
    } catch (const ValidationError& e) {
      rd.fail("diffusion: " + std::string(e.what()));
    }
  }

  if (const json* pinned = rd.child(root, "initial_particles", "initial_particles", false)) {
    if (!pinned->is_array() || pinned->empty()) {
      rd.fail("initial_particles must be a non-empty array of particle vectors");
    } else {
      Matrix parts(n, static_cast<Eigen::Index>(pinned->size()));
      bool good = true;
      for (std::size_t i = 0; i < pinned->size(); ++i) {
        auto v = rd.as_vector((*pinned)[i], "initial_particles[" + std::to_string(i) + "]", n);
        if (v) {
          parts.col(static_cast<Eigen::Index>(i)) = *v;
        } else {
          good = false;
        }
      }
      if (good) cfg.initial_particles = parts;
    }
    if (cfg.mode == RunMode::sequential) rd.fail("initial_particles is not supported in sequential mode");
  }

  const auto particles = rd.integer(root, "particles", "particles", !cfg.initial_particles);
  if (particles) {
    if (*particles < 1) {
      rd.fail("particles must be >= 1");
    } else {
      cfg.particles = static_cast<std::size_t>(*particles);
    }
  }
  if (cfg.initial_particles) {
    const auto pinned_count = static_cast<std::size_t>(cfg.initial_particles->cols());
    if (particles && cfg.particles != pinned_count) {
      rd.fail("particles (" + std::to_string(cfg.particles) + ") disagrees with initial_particles (" +
              std::to_string(pinned_count) + ")");
    }
    cfg.particles = pinned_count;
  }
  if (cfg.mode == RunMode::sequential && cfg.particles < 2 && particles) {
    rd.fail("sequential mode needs particles >= 2");
  }

  if (const json* integ = rd.child(root, "integrator", "integrator", false)) {
    if (auto steps = rd.integer(*integ, "steps", "integrator.steps", false)) {
      if (*steps < 1 || *steps > 100000000) {
        rd.fail("integrator.steps must be in [1, 1e8]");
      } else {
        cfg.integrator.steps = static_cast<int>(*steps);
      }
    }
    cfg.integrator.record_every = std::max(1, cfg.integrator.steps / 10);
    if (auto every = rd.integer(*integ, "record_every", "integrator.record_every", false)) {
      if (*every < 1) {
        rd.fail("integrator.record_every must be >= 1");
      } else {
        cfg.integrator.record_every = static_cast<int>(std::min<long long>(*every, cfg.integrator.steps));
      }
    }
    if (auto scheme = rd.string(*integ, "scheme", "integrator.scheme", false)) {
      if (*scheme == "euler_maruyama") {
        cfg.integrator.scheme = Scheme::euler_maruyama;
      } else if (*scheme == "rk4_deterministic") {
        cfg.integrator.scheme = Scheme::rk4_deterministic;
      } else {
        rd.fail("integrator.scheme must be euler_maruyama or rk4_deterministic");
      }
    }
  } else {
    cfg.integrator.record_every = std::max(1, cfg.integrator.steps / 10);
  }
  cfg.integrator.seed = cfg.seed;
  if (cfg.integrator.scheme == Scheme::rk4_deterministic && !cfg.diffusion.is_zero()) {
    rd.fail("integrator.scheme rk4_deterministic requires diffusion.kind zero");
  }

  if (cfg.mode == RunMode::diagnostics_sweep) {
    if (const json* sweep = rd.child(root, "sweep", "sweep", false)) {
      if (auto points = rd.integer(*sweep, "points", "sweep.points", false)) {
        cfg.sweep_points = static_cast<int>(*points);
      }
    }
    if (cfg.sweep_points < 2) {
      rd.fail("sweep.points must be >= 2");
    } else if (cfg.integrator.steps % (cfg.sweep_points - 1) != 0) {
      rd.fail("integrator.steps (" + std::to_string(cfg.integrator.steps) +
              ") must be a multiple of sweep.points - 1 (" + std::to_string(cfg.sweep_points - 1) + ")");
    }
  }

  if (cfg.mode == RunMode::sequential) {
    if (const json* seq = rd.child(root, "sequential", "sequential", true)) {
      SequentialConfig sc;
      auto f = rd.matrix(*seq, "F", "sequential.F", true, n, n);
      auto w = rd.matrix(*seq, "W", "sequential.W", true, n, n);
      bool good = f.has_value() && w.has_value();
      if (w) {
        try {
          clamp_psd(*w);
        } catch (const ValidationError&) {
          rd.fail("sequential.W not positive semi-definite");
          good = false;
        }
      }
      const json* zs = rd.child(*seq, "measurements", "sequential.measurements", true);
      if (zs != nullptr && !zs->is_array()) {
        rd.fail("sequential.measurements must be an array of vectors");
        good = false;
      } else if (zs != nullptr) {
        const Eigen::Index d = cfg.measurement ? cfg.measurement->h.rows() : kAny;
        for (std::size_t i = 0; i < zs->size(); ++i) {
          auto z = rd.as_vector((*zs)[i], "sequential.measurements[" + std::to_string(i) + "]", d);
          if (z) {
            sc.measurements.push_back(*z);
          } else {
            good = false;
          }
        }
      }
      if (good) {
        sc.dynamics = LinearDynamics{*f, *w};
        cfg.sequential = std::move(sc);
      }
    }
  }

  if (const json* output = rd.child(root, "output", "output", false)) {
    if (auto dir = rd.string(*output, "dir", "output.dir", false)) cfg.output_dir = *dir;
  }

  if (rd.failures.empty() && cfg.mode != RunMode::sequential) {
    try {
      (void)cfg.homotopy();
    } catch (const ValidationError& e) {
      for (const auto& f : e.failures()) rd.fail(f);
    }
  }
  if (!rd.failures.empty()) throw ValidationError(rd.failures);
  return cfg;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open scenario file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_scenario(buffer.str(), path.string());
}

std::string trace_header(int n) {
  std::string out = "lambda,particle_id";
  for (int i = 0; i < n; ++i) out += ",x_" + std::to_string(i);
  out += ",log_p";
  for (int i = 0; i < n; ++i) out += ",y_" + std::to_string(i);
  out += ",V,V1,V2,LV,gamma,partition";
  return out;
}

CsvTraceSink::CsvTraceSink(const std::filesystem::path& path, int dim) : path_(path) {
  file_ = std::fopen(path.string().c_str(), "wb");
  if (file_ == nullptr) throw IoError("cannot open trace file " + path.string());
  const std::string header = trace_header(dim) + "\n";
  if (std::fputs(header.c_str(), file_) < 0) throw IoError("cannot write " + path.string());
}

CsvTraceSink::~CsvTraceSink() {
  if (file_ != nullptr) std::fclose(file_);
}

void CsvTraceSink::close() {
  if (file_ == nullptr) return;
  const bool failed = std::fclose(file_) != 0;
  file_ = nullptr;
  if (failed) throw IoError("cannot finish writing " + path_.string());
}

void CsvTraceSink::consume(std::span<const DiagnosticsRecord> batch) {
  if (file_ == nullptr) throw IoError("trace file " + path_.string() + " already closed");
  char buf[40];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, ",%.17g", v);
    line_ += buf;
  };
  for (const auto& rec : batch) {
    line_.clear();
    std::snprintf(buf, sizeof buf, "%.17g", rec.lambda);
    line_ += buf;
    line_ += "," + std::to_string(rec.particle_id);
    for (Eigen::Index i = 0; i < rec.x.size(); ++i) put(rec.x[i]);
    put(rec.log_p);
    for (Eigen::Index i = 0; i < rec.y.size(); ++i) put(rec.y[i]);
    put(rec.v);
    put(rec.v1);
    put(rec.v2);
    put(rec.lv);
    put(rec.gamma);
    line_ += ",";
    line_ += to_string(rec.partition);
    line_ += "\n";
    if (std::fputs(line_.c_str(), file_) < 0) throw IoError("cannot write " + path_.string());
  }
}

std::string summary_to_json(const RunSummary& s) {
  ordered_json j;
  j["scenario"] = s.scenario;
  j["seed"] = s.seed;
  j["mode"] = std::string(to_string(s.mode));
  j["ok"] = s.ok;
  if (!s.ok) {
    j["error"] = {{"kind", s.error_kind}, {"message", s.error}};
  }
  if (s.final_moments) {
    j["final_moments"] = {{"count", s.final_moments->count},
                          {"mean", to_json(s.final_moments->mean)},
                          {"covariance", to_json(s.final_moments->covariance)}};
  } else {
    j["final_moments"] = nullptr;
  }
  if (s.reference) {
    j["reference"] = {{"mean", to_json(s.reference->mean)},
                      {"covariance", to_json(s.reference->covariance)}};
  } else {
    j["reference"] = nullptr;
  }
  j["mahalanobis_gap"] = optional_number(s.mahalanobis_gap);
  j["covariance_gap"] = optional_number(s.covariance_gap);
  j["v_drift"] = optional_number(s.v_drift);
  j["gamma_min"] = optional_number(s.gamma_min);
  j["gamma_max"] = optional_number(s.gamma_max);
  ordered_json parts = ordered_json::array();
  for (const auto& p : s.partitions) {
    parts.push_back({{"lambda", p.lambda}, {"S1", p.s1}, {"S2", p.s2}, {"S3", p.s3}});
  }
  j["partitions"] = parts;
  if (s.mode == RunMode::sequential) {
    ordered_json steps = ordered_json::array();
    for (const auto& st : s.steps) {
      steps.push_back({{"step", st.step},
                       {"sample_mean", to_json(st.sample.mean)},
                       {"sample_covariance", to_json(st.sample.covariance)},
                       {"kalman_mean", to_json(st.reference.mean)},
                       {"kalman_covariance", to_json(st.reference.covariance)},
                       {"mahalanobis_gap", st.mahalanobis_gap},
                       {"covariance_gap", st.covariance_gap}});
    }
    j["steps"] = steps;
  }
  ordered_json traces = ordered_json::array();
  for (const auto& t : s.trace_files) traces.push_back(t.filename().string());
  j["trace_files"] = traces;
  j["wall_seconds"] = s.wall_seconds;
  return j.dump(2) + "\n";
}

RunSummary run(const ScenarioConfig& cfg, const RunOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  RunSummary summary;
  summary.scenario = cfg.name;
  summary.seed = cfg.seed;
  summary.mode = cfg.mode;

  const std::filesystem::path dir = options.out_dir.value_or(cfg.output_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  const std::string stem = cfg.name + "_" + std::to_string(cfg.seed);

  try {
    if (cfg.mode == RunMode::sequential) {
      run_sequential(cfg, dir, stem, summary);
    } else {
      run_single(cfg, dir, stem, summary);
    }
  } catch (const NumericalError& e) {
    summary.ok = false;
    summary.error_kind = "numerical";
    summary.error = e.what();
  }
  summary.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const auto summary_path = dir / (stem + ".summary.json");
  std::ofstream out(summary_path, std::ios::binary);
  if (!out) throw IoError("cannot open summary file " + summary_path.string());
  out << summary_to_json(summary);
  if (!out) throw IoError("cannot write summary file " + summary_path.string());
  return summary;
}

int apply_thread_limit_from_env() {
  const char* value = std::getenv("FLOWFILT_THREADS");
  if (value == nullptr) return 0;
  char* end = nullptr;
  const long threads = std::strtol(value, &end, 10);
  if (end == value || *end != '\0' || threads < 1) return 0;
  omp_set_dynamic(0);
  omp_set_num_threads(static_cast<int>(threads));
  return static_cast<int>(threads);
}

}  // namespace flowfilt
