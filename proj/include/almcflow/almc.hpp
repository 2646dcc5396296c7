#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "almcflow/core.hpp"
#include "almcflow/target.hpp"

namespace almcflow {

// ---------------------------------------------------------------------------
// Annealing path
//
// Step k = 1..K moves x_{k-1} to x_k with step size delta(k) under the
// potential V_k(x) = (1 - lambda_k) |x|^2 / 2 - lambda_k log rho(x).
// lambda_0 = 0, so V_0 is the standard Gaussian potential.

enum class LambdaShape { Linear, ExpSaturating };

struct LambdaSchedule {
  LambdaShape shape = LambdaShape::Linear;
  double start = 0.0;  // linear only
  double end = 1.0;    // linear only
  double rate = 50.0;  // exp_saturating: lambda(t) = 1 - exp(-rate t)
};

class AnnealPath {
 public:
  AnnealPath(std::vector<double> deltas, std::vector<double> lambdas);

  /// deltas linear from delta_start (k = 1) to delta_end (k = K); lambdas per
  /// the schedule on t_k = k / K. ExpSaturating clamps lambda_K to 1.
  static AnnealPath make(std::size_t steps, double delta_start, double delta_end,
                         const LambdaSchedule& lambda);

  std::size_t steps() const { return deltas_.size(); }
  double delta(std::size_t k) const;
  double lambda(std::size_t k) const;
  const std::vector<double>& deltas() const { return deltas_; }
  const std::vector<double>& lambdas() const { return lambdas_; }

 private:
  std::vector<double> deltas_;   // deltas_[k - 1] = delta_k
  std::vector<double> lambdas_;  // lambdas_[k] = lambda_k, k = 0..K
};

/// grad V_k(x) = (1 - lambda_k) x - lambda_k grad log rho(x)
void annealed_grad(const AnnealPath& path, std::size_t k, const TargetModel& target,
                   std::span<const double> x, std::span<double> out);
std::vector<double> annealed_grad(const AnnealPath& path, std::size_t k,
                                  const TargetModel& target, std::span<const double> x);

/// V_k(x) = (1 - lambda_k) |x|^2 / 2 - lambda_k log rho(x)
double annealed_potential(const AnnealPath& path, std::size_t k, const TargetModel& target,
                          std::span<const double> x);

// ---------------------------------------------------------------------------
// ULA transition

struct UlaOptions {
  bool zero_noise = false;  // test hook: deterministic drift only
};

/// One Euler-Maruyama step to step index e.step_index + 1. Noise for particle
/// i comes from RngStream(seed, i, step).
Ensemble ula_step(const AnnealPath& path, std::size_t k, const TargetModel& target,
                  const Ensemble& e, std::uint64_t seed, UlaOptions opts = {});

/// log mu_k(x_prev, x_next), Gaussian with mean x_prev - delta_k grad V_k(x_prev)
/// and covariance 2 delta_k I, normalizer included.
double log_transition_density(const AnnealPath& path, std::size_t k, const TargetModel& target,
                              std::span<const double> x_prev, std::span<const double> x_next);

/// log p_k(x) estimated by the average of mu_k(x_prev^(i), x) over m reference
/// particles of prev. With m < n the references are a seeded subsample.
double log_forward_density_estimate(const AnnealPath& path, std::size_t k,
                                    const TargetModel& target, const Ensemble& prev,
                                    std::span<const double> x, std::size_t m,
                                    std::uint64_t seed = 0);

/// Batched form over every particle of cur.
std::vector<double> log_forward_density_estimates(const AnnealPath& path, std::size_t k,
                                                  const TargetModel& target, const Ensemble& prev,
                                                  const Points& cur, std::size_t m,
                                                  std::uint64_t seed = 0);

/// log w = -V_k(x) - log p_k(x) for each particle of cur, with p_k estimated
/// from prev.
std::vector<double> marginal_log_weights(const AnnealPath& path, std::size_t k,
                                         const TargetModel& target, const Ensemble& cur,
                                         const Ensemble& prev, std::size_t m,
                                         std::uint64_t seed = 0);

/// Same weights with a caller-supplied forward log-density (e.g. a closed form).
std::vector<double> marginal_log_weights(
    const AnnealPath& path, std::size_t k, const TargetModel& target, const Ensemble& cur,
    const std::function<double(std::span<const double>)>& log_forward_density);

/// Jarzynski accumulator update with the reverse-ULA backward kernel
/// nu_k(x_k, .) = N(x_k - delta_k grad V_k(x_k), 2 delta_k I).
double jarzynski_log_weight_update(const AnnealPath& path, std::size_t k,
                                   const TargetModel& target, std::span<const double> x_prev,
                                   std::span<const double> x_next, double a_prev);

// ---------------------------------------------------------------------------
// Full run

enum class WeightModeKind { Marginal, Jarzynski };

struct WeightMode {
  WeightModeKind kind = WeightModeKind::Jarzynski;
  std::size_t reference_size = 2048;  // Marginal: m (clamped to n)
  std::size_t stride = 10;            // Marginal: evaluation stride when n m > budget

  static WeightMode jarzynski() { return {}; }
  static WeightMode marginal(std::size_t m, std::size_t stride = 10) {
    return {WeightModeKind::Marginal, m, stride};
  }
};

std::string to_string(WeightModeKind kind);
WeightModeKind parse_weight_mode(std::string_view name);

struct AlmcConfig {
  std::size_t n = 1000;
  AnnealPath path = AnnealPath::make(100, 0.1, 0.01, {});
  WeightMode weight_mode;
  double ess_threshold = 500.0;  // resample when ESS < C
  std::uint64_t seed = 0;
  /// Marginal weights are evaluated every step while n * m stays within this budget.
  double per_step_budget = 1e7;
};

struct StepDiagnostics {
  std::size_t step = 0;
  double ess = 0.0;
  bool resampled = false;
  bool weights_evaluated = false;
  double lambda = 0.0;
  double delta = 0.0;
  double log_z_estimate = 0.0;
};

struct AlmcResult {
  Ensemble ensemble;
  std::vector<StepDiagnostics> diagnostics;  // entry 0 is the initial state
  std::size_t resample_count = 0;
  double log_z_estimate = 0.0;
};

AlmcResult run_almc(const AlmcConfig& cfg, const TargetModel& target);

/// One JSON object per line: {step, ess, resampled, lambda, delta, log_z_estimate}.
std::string diagnostics_jsonl(const std::vector<StepDiagnostics>& diagnostics);

}  // namespace almcflow
