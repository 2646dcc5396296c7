#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "almcflow/core.hpp"
#include "almcflow/interpolant.hpp"
#include "almcflow/target.hpp"

namespace almcflow {

/// Every responsibility underflowed for one query point.
class VelocityDegeneracyError : public std::runtime_error {
 public:
  VelocityDegeneracyError(double t, double x_norm, std::size_t particle, std::size_t step);

  double t() const { return t_; }
  double x_norm() const { return x_norm_; }
  std::size_t particle() const { return particle_; }
  std::size_t step() const { return step_; }

 private:
  double t_;
  double x_norm_;
  std::size_t particle_;
  std::size_t step_;
};

struct FlowConfig {
  InterpolantSchedule schedule{InterpolantKind::Follmer};
  double epsilon = 1e-2;          // T0 = epsilon, T_end = 1 - epsilon
  std::size_t steps = 100;        // M
  std::size_t test_particles = 1000;  // N
  std::uint64_t seed = 0;

  double t0() const { return epsilon; }
  double t_end() const { return 1.0 - epsilon; }
  double step_size() const;
  /// Throws DomainError unless 0 < T0 < T_end < 1 and M >= 1.
  void validate() const;
};

/// v(t, x) = a(t) x + c(t) sum_i r_i x_i with r_i proportional to g(t, x, x_i) w_i.
std::vector<double> estimate_velocity(const InterpolantSchedule& s, double t,
                                      std::span<const double> x, const Ensemble& particles);

/// Batched estimate for every row of xs. Throws VelocityDegeneracyError (step
/// left at 0) for the first query whose responsibilities all underflow.
void estimate_velocity(const InterpolantSchedule& s, double t, const Points& xs,
                       const Ensemble& particles, Points& out);

/// Batched velocity field v(t, xs) -> out; step is the Euler index m.
/// The particle field keeps a reference to its ensemble, which must outlive it.
using VelocityField =
    std::function<void(double t, std::size_t step, const Points& xs, Points& out)>;

VelocityField weighted_particle_field(const InterpolantSchedule& s, const Ensemble& particles);
VelocityField exact_mixture_field(const InterpolantSchedule& s, const GaussianMixture& g);

/// N(0, I) starting points; row j uses stream (seed, j).
Points initial_test_particles(std::size_t n, std::size_t d, std::uint64_t seed);

/// Euler integration x_{m+1} = x_m + h v(t_m, x_m) on t_m = T0 + m h, m = 0..M-1.
Points integrate_flow(const FlowConfig& cfg, const VelocityField& v, Points x);

/// Full sampler: N fresh Gaussian points carried along the estimated field.
Points run_flow(const FlowConfig& cfg, const Ensemble& particles);

}  // namespace almcflow
