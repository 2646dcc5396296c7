#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "almcflow/core.hpp"
#include "almcflow/interpolant.hpp"

namespace almcflow {

/// Unnormalized log-density with gradient. Implementations are immutable and
/// safe for concurrent reads.
class TargetModel {
 public:
  virtual ~TargetModel() = default;

  virtual std::size_t dim() const = 0;
  virtual double log_density(std::span<const double> x) const = 0;
  virtual void grad_log_density(std::span<const double> x, std::span<double> out) const = 0;
  virtual std::string name() const = 0;

  std::vector<double> grad_log_density(std::span<const double> x) const {
    std::vector<double> g(x.size());
    grad_log_density(x, g);
    return g;
  }
};

/// Isotropic Gaussian mixture sum_i w_i N(mu_i, sigma_i^2 I). The density is
/// normalized.
class GaussianMixture final : public TargetModel {
 public:
  GaussianMixture(Points means, std::vector<double> sigmas, std::vector<double> weights);

  /// 20-component 2-d benchmark, sigma = 0.1, equal weights.
  static GaussianMixture kou20();
  /// 5 components in 100-d with variance 0.1, means in the first two coordinates.
  static GaussianMixture gmm100d5();
  static GaussianMixture single(std::vector<double> mean, double sigma);

  std::size_t dim() const override { return means_.cols(); }
  std::size_t components() const { return means_.rows(); }
  double log_density(std::span<const double> x) const override;
  void grad_log_density(std::span<const double> x, std::span<double> out) const override;
  std::string name() const override { return "gaussian_mixture"; }
  using TargetModel::grad_log_density;

  const Points& means() const { return means_; }
  const std::vector<double>& sigmas() const { return sigmas_; }
  const std::vector<double>& weights() const { return weights_; }

  /// Exact i.i.d. draws; row i uses stream (seed, i).
  Points sample_exact(std::size_t m, std::uint64_t seed) const;

  /// Closed-form velocity field of the probability-flow ODE for this mixture.
  void exact_velocity(const InterpolantSchedule& s, double t, std::span<const double> x,
                      std::span<double> out) const;
  std::vector<double> exact_velocity(const InterpolantSchedule& s, double t,
                                     std::span<const double> x) const;

  /// Posterior mean E[x1 | x_t = x] with x_t | x1 ~ N(beta x1, alpha^2 I).
  void posterior_mean(double alpha, double beta, std::span<const double> x,
                      std::span<double> out) const;

 private:
  void component_log_terms(std::span<const double> x, std::span<double> out) const;

  Points means_;
  std::vector<double> sigmas_;
  std::vector<double> weights_;
  std::vector<double> log_norm_;  // log w_i - (d/2) log(2 pi sigma_i^2)
};

/// Discretized Allen-Cahn field with Dirichlet boundary values x_0 = x_{d+1} = 0.
class AllenCahn1D final : public TargetModel {
 public:
  AllenCahn1D(std::size_t d, double a, double b, double beta);

  std::size_t dim() const override { return d_; }
  double log_density(std::span<const double> x) const override;
  void grad_log_density(std::span<const double> x, std::span<double> out) const override;
  std::string name() const override { return "allen_cahn"; }
  using TargetModel::grad_log_density;

  double a() const { return a_; }
  double b() const { return b_; }
  double beta() const { return beta_; }
  double spacing() const { return 1.0 / static_cast<double>(d_); }

 private:
  std::size_t d_;
  double a_;
  double b_;
  double beta_;
};

void check_dim(const TargetModel& target, std::span<const double> x);

}  // namespace almcflow
