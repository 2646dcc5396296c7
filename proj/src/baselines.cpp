#include "almcflow/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace almcflow {

void leapfrog(const TargetModel& target, std::span<double> q, std::span<double> p, double eps,
              std::size_t steps) {
  const std::size_t d = q.size();
  std::vector<double> g(d);
  target.grad_log_density(q, g);
  for (std::size_t l = 0; l < steps; ++l) {
    for (std::size_t j = 0; j < d; ++j) p[j] += 0.5 * eps * g[j];
    for (std::size_t j = 0; j < d; ++j) q[j] += eps * p[j];
    target.grad_log_density(q, g);
    for (std::size_t j = 0; j < d; ++j) p[j] += 0.5 * eps * g[j];
  }
}

namespace {

double kinetic(std::span<const double> p) {
  double s = 0.0;
  for (double v : p) s += v * v;
  return 0.5 * s;
}

}  // namespace

std::vector<double> hmc_initial_point(std::size_t d, std::uint64_t seed) {
  RngStream rng(mix_seed(seed, stream_tag::hmc), 1);
  std::vector<double> x(d);
  rng.fill_normal(x);
  return x;
}

HmcResult hmc_chain(const HmcConfig& cfg, const TargetModel& target,
                    std::span<const double> init) {
  check_dim(target, init);
  if (!(cfg.step_size > 0.0)) throw DomainError("HMC step size must be positive");
  if (cfg.leapfrog_steps == 0) throw DomainError("HMC needs at least one leapfrog step");
  const std::size_t d = init.size();
  RngStream rng(mix_seed(cfg.seed, stream_tag::hmc), 0);

  std::vector<double> q(init.begin(), init.end()), q_new(d), p(d);
  double log_rho = target.log_density(q);
  if (!std::isfinite(log_rho)) throw DomainError("HMC initial point has non-finite density");

  HmcResult res;
  res.samples = Points(cfg.n_samples, d);
  const std::size_t total = cfg.burn_in + cfg.n_samples;
  for (std::size_t it = 0; it < total; ++it) {
    rng.fill_normal(p);
    const double h0 = -log_rho + kinetic(p);
    q_new = q;
    leapfrog(target, q_new, p, cfg.step_size, cfg.leapfrog_steps);
    const double log_rho_new = target.log_density(q_new);
    const double h1 = -log_rho_new + kinetic(p);
    bool accept = false;
    if (std::isfinite(h1)) {
      const double log_u = std::log(rng.uniform_open());
      accept = log_u < h0 - h1;
    }
    if (accept) {
      q.swap(q_new);
      log_rho = log_rho_new;
    }
    if (it >= cfg.burn_in) {
      ++res.proposals;
      if (accept) ++res.accepted;
      std::copy(q.begin(), q.end(), res.samples.row(it - cfg.burn_in).begin());
    }
  }
  res.acceptance_rate =
      res.proposals ? static_cast<double>(res.accepted) / static_cast<double>(res.proposals) : 0.0;
  return res;
}

// ---------------------------------------------------------------------------

Ensemble mc_ode_proposals(const TargetModel& target, std::size_t n_mc, std::uint64_t seed,
                          std::size_t step) {
  if (n_mc == 0) throw DomainError("MC-ODE needs at least one proposal");
  const std::size_t d = target.dim();
  const double log_norm = -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi);
  const std::uint64_t key = mix_seed(seed, stream_tag::mc_ode);
  Points z(n_mc, d);
  std::vector<double> lw(n_mc);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n_mc); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    RngStream rng(key, i, step);
    auto zi = z.row(i);
    rng.fill_normal(zi);
    double r2 = 0.0;
    for (double v : zi) r2 += v * v;
    const double log_phi = log_norm - 0.5 * r2;
    const double l = target.log_density(zi) - log_phi;
    // a non-finite density gives the proposal zero weight
    lw[i] = std::isnan(l) ? -std::numeric_limits<double>::infinity() : l;
  }
  return Ensemble(std::move(z), std::move(lw), step);
}

std::vector<double> mc_ode_velocity(const InterpolantSchedule& s, double t,
                                    std::span<const double> x, const TargetModel& target,
                                    std::size_t n_mc, std::uint64_t seed, std::size_t step) {
  check_dim(target, x);
  return estimate_velocity(s, t, x, mc_ode_proposals(target, n_mc, seed, step));
}

McOdeResult run_mc_ode(const FlowConfig& cfg, const TargetModel& target, std::size_t n_mc) {
  McOdeResult res;
  res.min_proposal_ess = std::numeric_limits<double>::infinity();
  VelocityField field = [&](double t, std::size_t step, const Points& xs, Points& out) {
    const Ensemble proposals = mc_ode_proposals(target, n_mc, cfg.seed, step);
    const double e = ess(proposals.log_weights);
    res.diagnostics.push_back({step, t, e});
    res.min_proposal_ess = std::min(res.min_proposal_ess, e);
    try {
      estimate_velocity(cfg.schedule, t, xs, proposals, out);
    } catch (const VelocityDegeneracyError& err) {
      throw VelocityDegeneracyError(err.t(), err.x_norm(), err.particle(), step);
    }
  };
  res.samples = integrate_flow(
      cfg, field, initial_test_particles(cfg.test_particles, target.dim(), cfg.seed));
  return res;
}

}  // namespace almcflow
