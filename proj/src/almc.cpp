#include "almcflow/almc.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "almcflow/kernels.hpp"

namespace almcflow {

namespace {

using index_t = std::ptrdiff_t;

// grad V = (1 - lambda) x - lambda score
inline void drift(double lambda, std::span<const double> x, std::span<const double> score,
                  std::span<double> out) {
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = (1.0 - lambda) * x[j] - lambda * score[j];
}

inline double potential(double lambda, std::span<const double> x, double log_rho) {
  double r2 = 0.0;
  for (double v : x) r2 += v * v;
  return (1.0 - lambda) * 0.5 * r2 - lambda * log_rho;
}

// |x_next - x_prev + delta grad|^2 / (4 delta)
inline double transition_energy(std::span<const double> x_prev, std::span<const double> x_next,
                                std::span<const double> grad_prev, double delta) {
  double r2 = 0.0;
  for (std::size_t j = 0; j < x_prev.size(); ++j) {
    const double r = x_next[j] - x_prev[j] + delta * grad_prev[j];
    r2 += r * r;
  }
  return r2 / (4.0 * delta);
}

double log_gaussian_normalizer(std::size_t d, double delta) {
  return -0.5 * static_cast<double>(d) * std::log(4.0 * std::numbers::pi * delta);
}

void check_step(const AnnealPath& path, std::size_t k) {
  if (k == 0 || k > path.steps())
    throw DomainError("annealing step " + std::to_string(k) + " outside 1.." +
                      std::to_string(path.steps()));
}

// Reference centers x_i - delta_k grad V_k(x_i) for the chosen rows of prev.
Points transition_centers(const AnnealPath& path, std::size_t k, const TargetModel& target,
                          const Ensemble& prev, std::span<const std::size_t> rows) {
  const std::size_t d = prev.dim();
  const double delta = path.delta(k);
  const double lambda = path.lambda(k);
  Points centers(rows.size(), d);
  const index_t m = static_cast<index_t>(rows.size());
#pragma omp parallel
  {
    std::vector<double> score(d), grad(d);
#pragma omp for schedule(static)
    for (index_t ii = 0; ii < m; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      auto x = prev.positions.row(rows[i]);
      target.grad_log_density(x, score);
      drift(lambda, x, score, grad);
      auto c = centers.row(i);
      for (std::size_t j = 0; j < d; ++j) c[j] = x[j] - delta * grad[j];
    }
  }
  return centers;
}

std::vector<std::size_t> reference_rows(std::size_t n, std::size_t m, std::uint64_t seed,
                                        std::size_t k) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  if (m >= n) return rows;
  RngStream rng(mix_seed(seed, stream_tag::subsample), k);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform() * static_cast<double>(n - i));
    std::swap(rows[i], rows[std::min(j, n - 1)]);
  }
  rows.resize(m);
  std::sort(rows.begin(), rows.end());
  return rows;
}

}  // namespace

// ---------------------------------------------------------------------------
// AnnealPath

AnnealPath::AnnealPath(std::vector<double> deltas, std::vector<double> lambdas)
    : deltas_(std::move(deltas)), lambdas_(std::move(lambdas)) {
  if (deltas_.empty()) throw DomainError("annealing path needs K >= 1 steps");
  if (lambdas_.size() != deltas_.size() + 1)
    throw DomainError("annealing path needs K + 1 lambdas");
  for (double d : deltas_)
    if (!(d > 0.0) || !std::isfinite(d)) throw DomainError("step sizes must be positive");
  if (lambdas_.front() != 0.0) throw DomainError("lambda_0 must be 0");
  for (std::size_t k = 0; k < lambdas_.size(); ++k) {
    if (!(lambdas_[k] >= 0.0 && lambdas_[k] <= 1.0))
      throw DomainError("lambdas must lie in [0, 1]");
    if (k > 0 && lambdas_[k] < lambdas_[k - 1]) throw DomainError("lambdas must be nondecreasing");
  }
}

AnnealPath AnnealPath::make(std::size_t steps, double delta_start, double delta_end,
                            const LambdaSchedule& lambda) {
  if (steps == 0) throw DomainError("annealing path needs K >= 1 steps");
  std::vector<double> deltas(steps);
  for (std::size_t k = 1; k <= steps; ++k) {
    const double f = steps == 1 ? 0.0 : static_cast<double>(k - 1) / static_cast<double>(steps - 1);
    deltas[k - 1] = delta_start + (delta_end - delta_start) * f;
  }
  std::vector<double> lambdas(steps + 1, 0.0);
  for (std::size_t k = 1; k <= steps; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(steps);
    switch (lambda.shape) {
      case LambdaShape::Linear:
        lambdas[k] = lambda.start + (lambda.end - lambda.start) * t;
        break;
      case LambdaShape::ExpSaturating:
        lambdas[k] = k == steps ? 1.0 : 1.0 - std::exp(-lambda.rate * t);
        break;
    }
    lambdas[k] = std::clamp(lambdas[k], 0.0, 1.0);
  }
  return AnnealPath(std::move(deltas), std::move(lambdas));
}

double AnnealPath::delta(std::size_t k) const {
  check_step(*this, k);
  return deltas_[k - 1];
}

double AnnealPath::lambda(std::size_t k) const {
  if (k > steps()) throw DomainError("annealing index outside 0..K");
  return lambdas_[k];
}

// ---------------------------------------------------------------------------

void annealed_grad(const AnnealPath& path, std::size_t k, const TargetModel& target,
                   std::span<const double> x, std::span<double> out) {
  const double lambda = path.lambda(k);
  target.grad_log_density(x, out);
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (!std::isfinite(out[j]))
      throw NumericalError("non-finite target gradient", 0, k);
  }
  std::vector<double> score(out.begin(), out.end());
  drift(lambda, x, score, out);
}

std::vector<double> annealed_grad(const AnnealPath& path, std::size_t k,
                                  const TargetModel& target, std::span<const double> x) {
  std::vector<double> out(x.size());
  annealed_grad(path, k, target, x, out);
  return out;
}

double annealed_potential(const AnnealPath& path, std::size_t k, const TargetModel& target,
                          std::span<const double> x) {
  const double lambda = path.lambda(k);
  const double log_rho = lambda > 0.0 ? target.log_density(x) : 0.0;
  return potential(lambda, x, log_rho);
}

Ensemble ula_step(const AnnealPath& path, std::size_t k, const TargetModel& target,
                  const Ensemble& e, std::uint64_t seed, UlaOptions opts) {
  check_step(path, k);
  const std::size_t n = e.size();
  const std::size_t d = e.dim();
  if (d != target.dim()) throw DomainError("ensemble dimension does not match target");
  const double delta = path.delta(k);
  const double lambda = path.lambda(k);
  const double noise_scale = std::sqrt(2.0 * delta);
  const std::uint64_t key = mix_seed(seed, stream_tag::ula);
  Points next(n, d);
  std::vector<int> bad(n, 0);
#pragma omp parallel
  {
    std::vector<double> score(d), grad(d), eps(d, 0.0);
#pragma omp for schedule(static)
    for (index_t ii = 0; ii < static_cast<index_t>(n); ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      auto x = e.positions.row(i);
      target.grad_log_density(x, score);
      drift(lambda, x, score, grad);
      if (!opts.zero_noise) {
        RngStream rng(key, i, k);
        rng.fill_normal(eps);
      }
      auto out = next.row(i);
      for (std::size_t j = 0; j < d; ++j) {
        out[j] = x[j] - delta * grad[j] + noise_scale * eps[j];
        if (!std::isfinite(out[j])) bad[i] = 1;
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    if (bad[i]) throw NumericalError("non-finite position after ULA step", i, k);
  return Ensemble(std::move(next), e.log_weights, e.step_index + 1);
}

double log_transition_density(const AnnealPath& path, std::size_t k, const TargetModel& target,
                              std::span<const double> x_prev, std::span<const double> x_next) {
  check_step(path, k);
  if (x_prev.size() != x_next.size()) throw DomainError("transition density dimension mismatch");
  const double delta = path.delta(k);
  const auto grad = annealed_grad(path, k, target, x_prev);
  return log_gaussian_normalizer(x_prev.size(), delta) -
         transition_energy(x_prev, x_next, grad, delta);
}

std::vector<double> log_forward_density_estimates(const AnnealPath& path, std::size_t k,
                                                  const TargetModel& target, const Ensemble& prev,
                                                  const Points& cur, std::size_t m,
                                                  std::uint64_t seed) {
  check_step(path, k);
  const std::size_t n = prev.size();
  if (m == 0 || m > n) throw DomainError("reference subsample size must satisfy 1 <= m <= n");
  if (cur.cols() != prev.dim()) throw DomainError("forward density dimension mismatch");
  const double delta = path.delta(k);
  const auto rows = reference_rows(n, m, seed, k);
  const Points centers = transition_centers(path, k, target, prev, rows);
  std::vector<double> zero(m, 0.0);
  std::vector<double> out(cur.rows());
  kernels::parallel::log_kernel_sum(cur, centers, zero, {1.0, 1.0 / (4.0 * delta)}, out);
  const double offset =
      log_gaussian_normalizer(prev.dim(), delta) - std::log(static_cast<double>(m));
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!std::isfinite(out[i]))
      throw NumericalError("forward density estimate underflowed", i, k);
    out[i] += offset;
  }
  return out;
}

double log_forward_density_estimate(const AnnealPath& path, std::size_t k,
                                    const TargetModel& target, const Ensemble& prev,
                                    std::span<const double> x, std::size_t m,
                                    std::uint64_t seed) {
  Points q(1, x.size());
  std::copy(x.begin(), x.end(), q.row(0).begin());
  return log_forward_density_estimates(path, k, target, prev, q, m, seed)[0];
}

std::vector<double> marginal_log_weights(const AnnealPath& path, std::size_t k,
                                         const TargetModel& target, const Ensemble& cur,
                                         const Ensemble& prev, std::size_t m,
                                         std::uint64_t seed) {
  auto lw = log_forward_density_estimates(path, k, target, prev, cur.positions, m, seed);
  const double lambda = path.lambda(k);
  const index_t n = static_cast<index_t>(cur.size());
#pragma omp parallel for schedule(static)
  for (index_t ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    auto x = cur.positions.row(i);
    const double log_rho = lambda > 0.0 ? target.log_density(x) : 0.0;
    lw[i] = -potential(lambda, x, log_rho) - lw[i];
  }
  return lw;
}

std::vector<double> marginal_log_weights(
    const AnnealPath& path, std::size_t k, const TargetModel& target, const Ensemble& cur,
    const std::function<double(std::span<const double>)>& log_forward_density) {
  std::vector<double> lw(cur.size());
  for (std::size_t i = 0; i < cur.size(); ++i) {
    auto x = cur.positions.row(i);
    lw[i] = -annealed_potential(path, k, target, x) - log_forward_density(x);
  }
  return lw;
}

double jarzynski_log_weight_update(const AnnealPath& path, std::size_t k,
                                   const TargetModel& target, std::span<const double> x_prev,
                                   std::span<const double> x_next, double a_prev) {
  check_step(path, k);
  const double delta = path.delta(k);
  const auto grad_prev = annealed_grad(path, k, target, x_prev);
  const auto grad_next = annealed_grad(path, k, target, x_next);
  const double log_mu = -transition_energy(x_prev, x_next, grad_prev, delta);
  const double log_nu = -transition_energy(x_next, x_prev, grad_next, delta);
  return a_prev + annealed_potential(path, k - 1, target, x_prev) -
         annealed_potential(path, k, target, x_next) + log_nu - log_mu;
}

// ---------------------------------------------------------------------------

std::string to_string(WeightModeKind kind) {
  return kind == WeightModeKind::Marginal ? "marginal" : "jarzynski";
}

WeightModeKind parse_weight_mode(std::string_view name) {
  if (name == "marginal") return WeightModeKind::Marginal;
  if (name == "jarzynski") return WeightModeKind::Jarzynski;
  throw DomainError("unknown weight mode '" + std::string(name) + "'");
}

namespace {

// Per-particle cache so every step costs one density and one gradient
// evaluation per particle.
struct ParticleCache {
  std::vector<double> log_rho;
  Points score;
};

void fill_cache(const TargetModel& target, const Points& x, ParticleCache& cache,
                std::size_t step) {
  const std::size_t n = x.rows();
  cache.log_rho.assign(n, 0.0);
  cache.score = Points(n, x.cols());
  std::vector<int> bad(n, 0);
#pragma omp parallel for schedule(static)
  for (index_t ii = 0; ii < static_cast<index_t>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    cache.log_rho[i] = target.log_density(x.row(i));
    target.grad_log_density(x.row(i), cache.score.row(i));
    for (double g : cache.score.row(i))
      if (!std::isfinite(g)) bad[i] = 1;
  }
  for (std::size_t i = 0; i < n; ++i)
    if (bad[i]) throw NumericalError("non-finite target gradient", i, step);
}

}  // namespace

AlmcResult run_almc(const AlmcConfig& cfg, const TargetModel& target) {
  const std::size_t n = cfg.n;
  const std::size_t d = target.dim();
  const std::size_t K = cfg.path.steps();
  if (n == 0) throw DomainError("run_almc needs n >= 1");
  if (!(cfg.ess_threshold >= 1.0 && cfg.ess_threshold <= static_cast<double>(n)))
    throw DomainError("ESS threshold must lie in [1, n]");
  const bool marginal = cfg.weight_mode.kind == WeightModeKind::Marginal;
  const std::size_t m = std::min(std::max<std::size_t>(cfg.weight_mode.reference_size, 1), n);
  const bool every_step = static_cast<double>(n) * static_cast<double>(m) <= cfg.per_step_budget;
  const std::size_t stride = std::max<std::size_t>(cfg.weight_mode.stride, 1);

  // x_0 ~ N(0, I), w_0 = 1
  Points x0(n, d);
  {
    const std::uint64_t key = mix_seed(cfg.seed, stream_tag::init);
#pragma omp parallel for schedule(static)
    for (index_t ii = 0; ii < static_cast<index_t>(n); ++ii) {
      RngStream rng(key, static_cast<std::size_t>(ii));
      rng.fill_normal(x0.row(static_cast<std::size_t>(ii)));
    }
  }
  Ensemble e = Ensemble::uniform(std::move(x0));

  const double log_n = std::log(static_cast<double>(n));
  const double log_z0 = 0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi);
  double log_z_acc = log_z0;  // Jarzynski: estimate accumulated over resampling epochs
  double epoch_mass = log_n;  // logsumexp of the weights at the start of the epoch
  double log_z = log_z0;

  AlmcResult result;
  result.diagnostics.reserve(K + 1);
  result.diagnostics.push_back({0, static_cast<double>(n), false, true, cfg.path.lambda(0), 0.0, log_z0});

  ParticleCache cache;
  fill_cache(target, e.positions, cache, 0);
  ParticleCache next_cache;

  const std::uint64_t ula_key = mix_seed(cfg.seed, stream_tag::ula);
  for (std::size_t k = 1; k <= K; ++k) {
    const double delta = cfg.path.delta(k);
    const double lambda = cfg.path.lambda(k);
    const double lambda_prev = cfg.path.lambda(k - 1);
    const double noise_scale = std::sqrt(2.0 * delta);

    Points next(n, d);
    std::vector<double> lw = e.log_weights;
    std::vector<int> bad(n, 0);
    next_cache.log_rho.assign(n, 0.0);
    next_cache.score = Points(n, d);
#pragma omp parallel
    {
      std::vector<double> grad_prev(d), grad_next(d), eps(d);
#pragma omp for schedule(static)
      for (index_t ii = 0; ii < static_cast<index_t>(n); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        auto x = e.positions.row(i);
        drift(lambda, x, cache.score.row(i), grad_prev);
        RngStream rng(ula_key, i, k);
        rng.fill_normal(eps);
        auto y = next.row(i);
        for (std::size_t j = 0; j < d; ++j) y[j] = x[j] - delta * grad_prev[j] + noise_scale * eps[j];
        bool finite = true;
        for (double v : y) finite = finite && std::isfinite(v);
        if (!finite) {
          bad[i] = 1;
          continue;
        }
        auto s_next = next_cache.score.row(i);
        next_cache.log_rho[i] = target.log_density(y);
        target.grad_log_density(y, s_next);
        for (double g : s_next) finite = finite && std::isfinite(g);
        if (!finite) {
          bad[i] = 1;
          continue;
        }
        if (!marginal) {
          drift(lambda, y, s_next, grad_next);
          const double log_mu = -transition_energy(x, y, grad_prev, delta);
          const double log_nu = -transition_energy(y, x, grad_next, delta);
          lw[i] += potential(lambda_prev, x, cache.log_rho[i]) -
                   potential(lambda, y, next_cache.log_rho[i]) + log_nu - log_mu;
          if (std::isnan(lw[i])) bad[i] = 1;
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i)
      if (bad[i]) throw NumericalError("non-finite state in annealed Langevin run", i, k);

    Ensemble cur(std::move(next), std::move(lw), k);
    bool evaluated = !marginal;
    if (marginal && (every_step || k % stride == 0 || k == K)) {
      cur.log_weights = marginal_log_weights(cfg.path, k, target, cur, e, m, cfg.seed);
      evaluated = true;
    }

    double current_ess = ess(cur.log_weights);
    if (marginal) {
      if (evaluated) log_z = log_sum_exp(cur.log_weights) - log_n;
    } else {
      log_z = log_z_acc + log_sum_exp(cur.log_weights) - epoch_mass;
    }

    bool resampled = false;
    if (evaluated && current_ess < cfg.ess_threshold) {
      if (!marginal) log_z_acc += log_sum_exp(cur.log_weights) - epoch_mass;
      RngStream rng(mix_seed(cfg.seed, stream_tag::resample), 0, k);
      const auto idx = systematic_indices(cur.log_weights, rng.uniform_open());
      Points moved(n, d);
      ParticleCache moved_cache{std::vector<double>(n), Points(n, d)};
      for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(cur.positions.row(idx[i]).begin(), d, moved.row(i).begin());
        std::copy_n(next_cache.score.row(idx[i]).begin(), d, moved_cache.score.row(i).begin());
        moved_cache.log_rho[i] = next_cache.log_rho[idx[i]];
      }
      cur.positions = std::move(moved);
      cur.log_weights.assign(n, -log_n);
      next_cache = std::move(moved_cache);
      epoch_mass = 0.0;
      resampled = true;
      ++result.resample_count;
    }

    result.diagnostics.push_back({k, current_ess, resampled, evaluated, lambda, delta, log_z});
    e = std::move(cur);
    std::swap(cache, next_cache);
  }

  result.log_z_estimate = log_z;
  result.ensemble = std::move(e);
  return result;
}

std::string diagnostics_jsonl(const std::vector<StepDiagnostics>& diagnostics) {
  std::ostringstream os;
  for (const auto& s : diagnostics) {
    nlohmann::ordered_json j;
    j["step"] = s.step;
    j["ess"] = s.ess;
    j["resampled"] = s.resampled;
    j["lambda"] = s.lambda;
    j["delta"] = s.delta;
    j["log_z_estimate"] = s.log_z_estimate;
    os << j.dump() << '\n';
  }
  return os.str();
}

}  // namespace almcflow
