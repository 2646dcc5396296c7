#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "almcflow/core.hpp"
#include "almcflow/flow_ode.hpp"
#include "almcflow/interpolant.hpp"
#include "almcflow/target.hpp"

namespace almcflow {

// ---------------------------------------------------------------------------
// Hamiltonian Monte Carlo, single chain, identity mass matrix.

struct HmcConfig {
  double step_size = 0.05;
  std::size_t leapfrog_steps = 10;
  std::size_t burn_in = 1000;
  std::size_t n_samples = 1000;
  std::uint64_t seed = 0;
};

struct HmcResult {
  Points samples;
  double acceptance_rate = 0.0;  // over the post-burn-in transitions
  std::size_t accepted = 0;
  std::size_t proposals = 0;
};

/// L leapfrog steps of size eps for H(q, p) = -log rho(q) + |p|^2 / 2, in place.
void leapfrog(const TargetModel& target, std::span<double> q, std::span<double> p, double eps,
              std::size_t steps);

HmcResult hmc_chain(const HmcConfig& cfg, const TargetModel& target,
                    std::span<const double> init);

/// N(0, I) starting point drawn from the chain's own stream.
std::vector<double> hmc_initial_point(std::size_t d, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Monte Carlo ODE: the flow velocity estimated from fresh N(0, I) proposals
// reweighted towards the target, without any annealing.

/// n_mc proposals z ~ N(0, I) with log w = log rho(z) - log phi(z).
Ensemble mc_ode_proposals(const TargetModel& target, std::size_t n_mc, std::uint64_t seed,
                          std::size_t step);

std::vector<double> mc_ode_velocity(const InterpolantSchedule& s, double t,
                                    std::span<const double> x, const TargetModel& target,
                                    std::size_t n_mc, std::uint64_t seed, std::size_t step = 0);

struct McOdeStep {
  std::size_t step = 0;
  double t = 0.0;
  double proposal_ess = 0.0;
};

struct McOdeResult {
  Points samples;
  std::vector<McOdeStep> diagnostics;
  double min_proposal_ess = 0.0;
};

/// Proposal ESS below this marks the weighted average as collapsed.
inline constexpr double kProposalEssFloor = 5.0;

/// Euler loop of the flow with a fresh proposal batch at every step.
McOdeResult run_mc_ode(const FlowConfig& cfg, const TargetModel& target, std::size_t n_mc);

}  // namespace almcflow
