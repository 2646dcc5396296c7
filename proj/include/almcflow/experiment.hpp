#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "almcflow/almc.hpp"
#include "almcflow/baselines.hpp"
#include "almcflow/config.hpp"
#include "almcflow/flow_ode.hpp"
#include "almcflow/metrics.hpp"
#include "almcflow/target.hpp"

namespace almcflow {

struct TargetSpec {
  std::string kind = "kou20";  // kou20 | gmm100d5 | allen_cahn | mixture
  // allen_cahn
  std::size_t d = 64;
  double a = 0.1;
  double b = 10.0;
  double beta = 20.0;
  // mixture
  std::vector<std::vector<double>> means;
  std::vector<double> sigmas;
  std::vector<double> weights;
};

std::unique_ptr<TargetModel> make_target(const TargetSpec& spec);

struct ExperimentConfig {
  std::string name = "custom";
  std::string preset;  // empty when built from scratch
  TargetSpec target;
  std::vector<std::string> methods{"almc_ode", "mc_ode", "hmc"};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

  // ALMC
  std::size_t n = 10000;
  std::size_t steps = 1000;  // K
  double delta_start = 0.1;
  double delta_end = 0.01;
  LambdaSchedule lambda;
  double ess_fraction = 0.5;  // C = ess_fraction * n
  WeightModeKind weight_mode = WeightModeKind::Jarzynski;
  std::size_t reference_size = 2048;
  std::size_t weight_stride = 10;
  double weight_budget = 1e7;

  // flow
  std::size_t test_particles = 10000;  // N
  std::size_t flow_steps = 100;        // M
  double epsilon = 1e-2;
  InterpolantKind interpolant = InterpolantKind::Follmer;

  // MC-ODE: 0 means "same as n"
  std::size_t proposals = 0;

  // HMC: samples 0 means "same as N"
  double hmc_step_size = 0.05;
  std::size_t hmc_leapfrog = 10;
  std::size_t hmc_burn_in = 1000;
  std::size_t hmc_samples = 0;

  // evaluation: reference 0 means "same as N"
  std::size_t reference_samples = 0;
  std::size_t projections = 200;
  bool ksd = false;

  double scale = 1.0;
  std::string deviation_note;

  std::size_t resolved_proposals() const { return proposals ? proposals : n; }
  std::size_t resolved_hmc_samples() const { return hmc_samples ? hmc_samples : test_particles; }
  std::size_t resolved_reference() const {
    return reference_samples ? reference_samples : test_particles;
  }

  /// Throws ConfigError on inconsistent settings.
  void validate() const;
};

/// Named presets: gmm2d, gmm100d, allen_cahn.
ExperimentConfig preset_config(const std::string& name);
std::vector<std::string> preset_names();

/// Preset (if `experiment.preset` is given) overridden by the file's keys.
ExperimentConfig config_from_file(const ConfigFile& file);

/// Multiplies n, N, K by f (each at least 1) and records f.
ExperimentConfig apply_scale(ExperimentConfig cfg, double f);

/// Resolved config in the file grammar; parsing it back gives the same config.
std::string to_config_text(const ExperimentConfig& cfg);

AlmcConfig almc_config(const ExperimentConfig& cfg, std::uint64_t seed);
FlowConfig flow_config(const ExperimentConfig& cfg, std::uint64_t seed);
HmcConfig hmc_config(const ExperimentConfig& cfg, std::uint64_t seed);

// ---------------------------------------------------------------------------

struct ModeCoverage {
  std::vector<std::size_t> counts;  // per component
  std::size_t unassigned = 0;
  std::size_t covered = 0;  // components with at least one sample
};

/// Nearest-mean assignment, kept only within 3 sigma of that mean.
ModeCoverage emit_mode_coverage(const Points& samples, const GaussianMixture& g);

struct Polarity {
  double positive = 0.0;
  double negative = 0.0;
};

/// Fractions of samples whose spatial mean is > 0 and < 0.
Polarity emit_field_polarity(const Points& samples);

// ---------------------------------------------------------------------------

struct SeedFailure {
  std::uint64_t seed = 0;
  std::string method;
  std::string error;
};

struct ExperimentOutcome {
  std::vector<MetricReport> reports;
  std::vector<SeedFailure> failures;
};

/// Runs every method for every seed (at most `jobs` seeds at a time) and
/// writes samples, diagnostics, reports, and the aggregate table under out.
ExperimentOutcome run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out,
                                 std::size_t jobs = 1);

/// One seed, one method; writes its files under seed_dir.
MetricReport run_method(const ExperimentConfig& cfg, const std::string& method,
                        std::uint64_t seed, const std::filesystem::path& seed_dir);

struct SummaryTable {
  std::string csv;
  std::string text;
};

/// mean +- std over seeds per method and metric.
SummaryTable summarize(const std::vector<MetricReport>& reports);

/// Reads every */*_metrics.json (and matching timing files) below dir.
std::vector<MetricReport> load_reports(const std::filesystem::path& dir);

}  // namespace almcflow
