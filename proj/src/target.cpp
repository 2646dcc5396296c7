#include "almcflow/target.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace almcflow {

void check_dim(const TargetModel& target, std::span<const double> x) {
  if (x.size() != target.dim())
    throw DomainError("point has dimension " + std::to_string(x.size()) + ", target expects " +
                      std::to_string(target.dim()));
}

// ---------------------------------------------------------------------------
// GaussianMixture

GaussianMixture::GaussianMixture(Points means, std::vector<double> sigmas,
                                 std::vector<double> weights)
    : means_(std::move(means)), sigmas_(std::move(sigmas)), weights_(std::move(weights)) {
  const std::size_t k = means_.rows();
  if (k == 0 || means_.cols() == 0) throw DomainError("mixture needs at least one component");
  if (sigmas_.size() != k || weights_.size() != k)
    throw DomainError("mixture sigmas/weights do not match the number of means");
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (!(sigmas_[i] > 0.0)) throw DomainError("mixture sigma must be positive");
    if (!(weights_[i] > 0.0)) throw DomainError("mixture weight must be positive");
    total += weights_[i];
  }
  if (std::abs(total - 1.0) > 1e-12) throw DomainError("mixture weights must sum to 1");
  const double d = static_cast<double>(means_.cols());
  log_norm_.resize(k);
  for (std::size_t i = 0; i < k; ++i)
    log_norm_[i] = std::log(weights_[i]) -
                   0.5 * d * std::log(2.0 * std::numbers::pi * sigmas_[i] * sigmas_[i]);
}

GaussianMixture GaussianMixture::kou20() {
  // mu_i = (first row, second row) of the published 2 x 20 mean table
  static constexpr double row1[20] = {2.18, 8.67, 4.24, 8.41, 3.93, 3.25, 1.70, 4.59, 6.91, 6.87,
                                      5.41, 2.70, 4.98, 1.14, 8.33, 4.93, 1.83, 2.26, 5.54, 1.69};
  static constexpr double row2[20] = {5.76, 9.59, 8.48, 1.68, 8.82, 3.47, 0.50, 5.60, 5.81, 5.40,
                                      2.65, 7.88, 3.70, 2.39, 9.50, 1.50, 0.09, 0.31, 6.86, 8.11};
  Points means(20, 2);
  for (std::size_t i = 0; i < 20; ++i) {
    means(i, 0) = row1[i];
    means(i, 1) = row2[i];
  }
  return GaussianMixture(std::move(means), std::vector<double>(20, 0.1),
                         std::vector<double>(20, 0.05));
}

GaussianMixture GaussianMixture::gmm100d5() {
  static constexpr double centers[5][2] = {{10, 10}, {15, 15}, {5, 15}, {15, 5}, {5, 5}};
  Points means(5, 100);
  for (std::size_t i = 0; i < 5; ++i) {
    means(i, 0) = centers[i][0];
    means(i, 1) = centers[i][1];
  }
  return GaussianMixture(std::move(means), std::vector<double>(5, std::sqrt(0.1)),
                         std::vector<double>(5, 0.2));
}

GaussianMixture GaussianMixture::single(std::vector<double> mean, double sigma) {
  Points means(1, mean.size());
  std::copy(mean.begin(), mean.end(), means.row(0).begin());
  return GaussianMixture(std::move(means), {sigma}, {1.0});
}

void GaussianMixture::component_log_terms(std::span<const double> x,
                                          std::span<double> out) const {
  for (std::size_t i = 0; i < means_.rows(); ++i) {
    auto m = means_.row(i);
    double r2 = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double diff = x[j] - m[j];
      r2 += diff * diff;
    }
    out[i] = log_norm_[i] - r2 / (2.0 * sigmas_[i] * sigmas_[i]);
  }
}

double GaussianMixture::log_density(std::span<const double> x) const {
  check_dim(*this, x);
  std::vector<double> terms(means_.rows());
  component_log_terms(x, terms);
  return log_sum_exp(terms);
}

void GaussianMixture::grad_log_density(std::span<const double> x, std::span<double> out) const {
  check_dim(*this, x);
  const std::size_t k = means_.rows();
  std::vector<double> terms(k);
  component_log_terms(x, terms);
  const double z = log_sum_exp(terms);
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    const double r = std::exp(terms[i] - z);
    if (r == 0.0) continue;
    const double inv_var = 1.0 / (sigmas_[i] * sigmas_[i]);
    auto m = means_.row(i);
    for (std::size_t j = 0; j < x.size(); ++j) out[j] -= r * inv_var * (x[j] - m[j]);
  }
}

Points GaussianMixture::sample_exact(std::size_t m, std::uint64_t seed) const {
  const std::size_t d = dim();
  Points out(m, d);
  std::vector<double> cdf(weights_.size());
  std::partial_sum(weights_.begin(), weights_.end(), cdf.begin());
  const std::uint64_t key = mix_seed(seed, stream_tag::truth);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(m); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    RngStream rng(key, i);
    const double u = rng.uniform() * cdf.back();
    std::size_t c = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) -
                                             cdf.begin());
    c = std::min(c, cdf.size() - 1);
    auto mu = means_.row(c);
    auto row = out.row(i);
    for (std::size_t j = 0; j < d; ++j) row[j] = mu[j] + sigmas_[c] * rng.normal();
  }
  return out;
}

void GaussianMixture::posterior_mean(double alpha, double beta, std::span<const double> x,
                                     std::span<double> out) const {
  const std::size_t k = means_.rows();
  const std::size_t d = dim();
  const double a2 = alpha * alpha;
  std::vector<double> logr(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double s2 = sigmas_[i] * sigmas_[i];
    const double var = beta * beta * s2 + a2;
    auto m = means_.row(i);
    double r2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = x[j] - beta * m[j];
      r2 += diff * diff;
    }
    logr[i] = std::log(weights_[i]) - 0.5 * static_cast<double>(d) * std::log(var) -
              r2 / (2.0 * var);
  }
  const double z = log_sum_exp(logr);
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    const double r = std::exp(logr[i] - z);
    if (r == 0.0) continue;
    const double s2 = sigmas_[i] * sigmas_[i];
    const double denom = beta * beta * s2 + a2;
    auto m = means_.row(i);
    for (std::size_t j = 0; j < d; ++j) out[j] += r * (beta * s2 * x[j] + a2 * m[j]) / denom;
  }
}

void GaussianMixture::exact_velocity(const InterpolantSchedule& s, double t,
                                     std::span<const double> x, std::span<double> out) const {
  check_dim(*this, x);
  const auto coeff = s.velocity_coeffs(t);
  const auto v = s.eval(t);
  posterior_mean(v.alpha, v.beta, x, out);
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = coeff.a * x[j] + coeff.c * out[j];
}

std::vector<double> GaussianMixture::exact_velocity(const InterpolantSchedule& s, double t,
                                                    std::span<const double> x) const {
  std::vector<double> out(x.size());
  exact_velocity(s, t, x, out);
  return out;
}

// ---------------------------------------------------------------------------
// AllenCahn1D

AllenCahn1D::AllenCahn1D(std::size_t d, double a, double b, double beta)
    : d_(d), a_(a), b_(b), beta_(beta) {
  if (d == 0) throw DomainError("Allen-Cahn grid size must be positive");
  if (!(a > 0.0 && b > 0.0 && beta > 0.0))
    throw DomainError("Allen-Cahn parameters a, b, beta must be positive");
}

double AllenCahn1D::log_density(std::span<const double> x) const {
  check_dim(*this, x);
  const double ds = spacing();
  double grad_term = 0.0;
  double prev = 0.0;
  for (std::size_t i = 0; i <= d_; ++i) {
    const double cur = i < d_ ? x[i] : 0.0;
    const double diff = cur - prev;
    grad_term += diff * diff;
    prev = cur;
  }
  double quartic = 0.0;
  for (double xi : x) {
    const double q = 1.0 - xi * xi;
    quartic += q * q;
  }
  return -beta_ * (a_ / (2.0 * ds) * grad_term + b_ * ds / 4.0 * quartic);
}

void AllenCahn1D::grad_log_density(std::span<const double> x, std::span<double> out) const {
  check_dim(*this, x);
  const double ds = spacing();
  for (std::size_t i = 0; i < d_; ++i) {
    const double left = i > 0 ? x[i - 1] : 0.0;
    const double right = i + 1 < d_ ? x[i + 1] : 0.0;
    const double laplace = a_ / ds * (2.0 * x[i] - left - right);
    const double well = -b_ * ds * x[i] * (1.0 - x[i] * x[i]);
    out[i] = -beta_ * (laplace + well);
  }
}

}  // namespace almcflow
