#include "almcflow/flow_ode.hpp"

#include <cmath>
#include <sstream>

#include "almcflow/kernels.hpp"

namespace almcflow {

namespace {

std::string degeneracy_message(double t, double x_norm, std::size_t particle, std::size_t step) {
  std::ostringstream os;
  os << "velocity estimate degenerate: all responsibilities underflow at t = " << t
     << ", |x| = " << x_norm << " (test particle " << particle << ", step " << step << ")";
  return os.str();
}

double norm(std::span<const double> x) {
  double r2 = 0.0;
  for (double v : x) r2 += v * v;
  return std::sqrt(r2);
}

}  // namespace

VelocityDegeneracyError::VelocityDegeneracyError(double t, double x_norm, std::size_t particle,
                                                 std::size_t step)
    : std::runtime_error(degeneracy_message(t, x_norm, particle, step)),
      t_(t),
      x_norm_(x_norm),
      particle_(particle),
      step_(step) {}

double FlowConfig::step_size() const {
  return (t_end() - t0()) / static_cast<double>(steps);
}

void FlowConfig::validate() const {
  if (!(epsilon > 0.0 && t0() < t_end() && t_end() < 1.0))
    throw DomainError("flow needs 0 < T0 < T_end < 1");
  if (steps == 0) throw DomainError("flow needs M >= 1 Euler steps");
}

void estimate_velocity(const InterpolantSchedule& s, double t, const Points& xs,
                       const Ensemble& particles, Points& out) {
  if (xs.cols() != particles.dim()) throw DomainError("velocity query dimension mismatch");
  check_log_weights(particles.log_weights);
  const auto coeff = s.velocity_coeffs(t);
  const auto sv = s.eval(t);
  std::vector<double> log_norm(xs.rows());
  kernels::parallel::kernel_weighted_mean(xs, particles.positions, particles.log_weights,
                                          {sv.beta, 1.0 / (2.0 * sv.alpha * sv.alpha)}, out,
                                          log_norm);
  for (std::size_t j = 0; j < xs.rows(); ++j) {
    if (!std::isfinite(log_norm[j])) throw VelocityDegeneracyError(t, norm(xs.row(j)), j, 0);
    auto x = xs.row(j);
    auto v = out.row(j);
    for (std::size_t k = 0; k < x.size(); ++k) v[k] = coeff.a * x[k] + coeff.c * v[k];
  }
}

std::vector<double> estimate_velocity(const InterpolantSchedule& s, double t,
                                      std::span<const double> x, const Ensemble& particles) {
  Points q(1, x.size());
  std::copy(x.begin(), x.end(), q.row(0).begin());
  Points v;
  estimate_velocity(s, t, q, particles, v);
  return v.data();
}

VelocityField weighted_particle_field(const InterpolantSchedule& s, const Ensemble& particles) {
  return [s, &particles](double t, std::size_t step, const Points& xs, Points& out) {
    try {
      estimate_velocity(s, t, xs, particles, out);
    } catch (const VelocityDegeneracyError& e) {
      throw VelocityDegeneracyError(e.t(), e.x_norm(), e.particle(), step);
    }
  };
}

VelocityField exact_mixture_field(const InterpolantSchedule& s, const GaussianMixture& g) {
  return [s, &g](double t, std::size_t, const Points& xs, Points& out) {
    out = Points(xs.rows(), xs.cols());
    const auto n = static_cast<std::ptrdiff_t>(xs.rows());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t j = 0; j < n; ++j)
      g.exact_velocity(s, t, xs.row(static_cast<std::size_t>(j)),
                       out.row(static_cast<std::size_t>(j)));
  };
}

Points initial_test_particles(std::size_t n, std::size_t d, std::uint64_t seed) {
  Points x(n, d);
  const std::uint64_t key = mix_seed(seed, stream_tag::flow_init);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(n); ++j) {
    RngStream rng(key, static_cast<std::uint64_t>(j));
    rng.fill_normal(x.row(static_cast<std::size_t>(j)));
  }
  return x;
}

Points integrate_flow(const FlowConfig& cfg, const VelocityField& v, Points x) {
  cfg.validate();
  const double h = cfg.step_size();
  Points vel;
  for (std::size_t m = 0; m < cfg.steps; ++m) {
    const double t = cfg.t0() + static_cast<double>(m) * h;
    v(t, m, x, vel);
    auto& xd = x.data();
    const auto& vd = vel.data();
    for (std::size_t i = 0; i < xd.size(); ++i) xd[i] += h * vd[i];
  }
  return x;
}

Points run_flow(const FlowConfig& cfg, const Ensemble& particles) {
  if (particles.size() == 0) throw DomainError("flow needs at least one reference particle");
  return integrate_flow(cfg, weighted_particle_field(cfg.schedule, particles),
                        initial_test_particles(cfg.test_particles, particles.dim(), cfg.seed));
}

}  // namespace almcflow
