#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace almcflow {

// ---------------------------------------------------------------------------
// Errors

class DegenerateWeightsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::size_t particle, std::size_t step)
      : std::runtime_error(what + " (particle " + std::to_string(particle) + ", step " +
                           std::to_string(step) + ")"),
        particle_(particle),
        step_(step) {}

  std::size_t particle() const { return particle_; }
  std::size_t step() const { return step_; }

 private:
  std::size_t particle_;
  std::size_t step_;
};

// ---------------------------------------------------------------------------
// Row-major point cloud: rows() points in cols() dimensions.

class Points {
 public:
  Points() = default;
  Points(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const Points&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Counter-keyed random streams.
//
// A stream is a xoshiro256++ generator whose state is derived from
// (seed, stream_id, counter) through splitmix64, so any particle's draws at any
// step can be reproduced without touching other streams.

std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag);

// Domain tags separating the independent uses of one user seed.
namespace stream_tag {
inline constexpr std::uint64_t init = 0x1001;
inline constexpr std::uint64_t ula = 0x1002;
inline constexpr std::uint64_t resample = 0x1003;
inline constexpr std::uint64_t subsample = 0x1004;
inline constexpr std::uint64_t flow_init = 0x2001;
inline constexpr std::uint64_t mc_ode = 0x3001;
inline constexpr std::uint64_t hmc = 0x3002;
inline constexpr std::uint64_t truth = 0x4001;
inline constexpr std::uint64_t projections = 0x4002;
}  // namespace stream_tag

class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t counter = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on the open interval (0, 1).
  double uniform_open();
  double normal();
  void fill_normal(std::span<double> out);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t s_[4];
  std::normal_distribution<double> normal_{0.0, 1.0};
};

// ---------------------------------------------------------------------------
// Log-domain weight arithmetic. Reductions run in index order.

/// log(sum(exp(v))). Returns -inf when every entry is -inf.
double log_sum_exp(std::span<const double> v);

/// Throws DegenerateWeightsError on NaN, +inf, or all entries -inf.
void check_log_weights(std::span<const double> lw);

std::vector<double> normalize_log_weights(std::span<const double> lw);

/// Effective sample size (sum w)^2 / sum w^2, evaluated in the log domain.
double ess(std::span<const double> lw);

// ---------------------------------------------------------------------------
// Particle ensemble

struct Ensemble {
  Points positions;
  std::vector<double> log_weights;
  std::size_t step_index = 0;

  Ensemble() = default;
  Ensemble(Points p, std::vector<double> lw, std::size_t step = 0)
      : positions(std::move(p)), log_weights(std::move(lw)), step_index(step) {}

  /// Equally weighted ensemble (all log-weights zero).
  static Ensemble uniform(Points p, std::size_t step = 0);

  std::size_t size() const { return positions.rows(); }
  std::size_t dim() const { return positions.cols(); }

  /// Throws DomainError / DegenerateWeightsError when an invariant is broken.
  void validate() const;
};

enum class ResampleScheme { Systematic, Multinomial };

/// Systematic ancestor indices for a single offset u in [0, 1).
std::vector<std::size_t> systematic_indices(std::span<const double> lw, double u);
std::vector<std::size_t> multinomial_indices(std::span<const double> lw, RngStream& rng);

/// Resampled copy with all log-weights equal to -ln n.
Ensemble resample(const Ensemble& e, RngStream& rng,
                  ResampleScheme scheme = ResampleScheme::Systematic);

/// Weighted mean of the ensemble positions.
std::vector<double> weighted_mean(const Ensemble& e);

// ---------------------------------------------------------------------------
// Threading

/// Applies ALMCFLOW_THREADS (if set) to the OpenMP runtime; returns the
/// thread count in effect.
int configure_threads_from_env();
void set_thread_count(int threads);
int thread_count();

}  // namespace almcflow
