#include "almcflow/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace almcflow {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t s = seed ^ (tag * 0xd1342543de82ef95ULL);
  splitmix64(s);
  return splitmix64(s);
}

namespace {

inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t counter)
    : seed_(seed), stream_id_(stream_id) {
  std::uint64_t key = seed;
  key = mix_seed(key, stream_id + 0x632be59bd9b4e019ULL);
  key = mix_seed(key, counter + 0x8cb92ba72f3d8dd7ULL);
  for (auto& w : s_) w = splitmix64(key);
}

RngStream::result_type RngStream::operator()() {
  const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double RngStream::uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

double RngStream::uniform_open() {
  return (static_cast<double>((*this)() >> 12) + 0.5) * 0x1.0p-52;
}

double RngStream::normal() { return normal_(*this); }

void RngStream::fill_normal(std::span<double> out) {
  for (auto& v : out) v = normal_(*this);
}

// ---------------------------------------------------------------------------

double log_sum_exp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

void check_log_weights(std::span<const double> lw) {
  if (lw.empty()) throw DegenerateWeightsError("empty log-weight vector");
  bool any_finite = false;
  for (double x : lw) {
    if (std::isnan(x)) throw DegenerateWeightsError("NaN log-weight");
    if (x == std::numeric_limits<double>::infinity())
      throw DegenerateWeightsError("+inf log-weight");
    if (std::isfinite(x)) any_finite = true;
  }
  if (!any_finite) throw DegenerateWeightsError("all log-weights are -inf");
}

std::vector<double> normalize_log_weights(std::span<const double> lw) {
  check_log_weights(lw);
  const double z = log_sum_exp(lw);
  std::vector<double> out(lw.size());
  for (std::size_t i = 0; i < lw.size(); ++i) out[i] = lw[i] - z;
  return out;
}

double ess(std::span<const double> lw) {
  check_log_weights(lw);
  const double z1 = log_sum_exp(lw);
  std::vector<double> sq(lw.size());
  for (std::size_t i = 0; i < lw.size(); ++i) sq[i] = 2.0 * (lw[i] - z1);
  // log(sum W^2) with normalized W; ESS = 1 / sum W^2
  const double value = std::exp(-log_sum_exp(sq));
  return std::clamp(value, 1.0, static_cast<double>(lw.size()));
}

// ---------------------------------------------------------------------------

Ensemble Ensemble::uniform(Points p, std::size_t step) {
  std::vector<double> lw(p.rows(), 0.0);
  return Ensemble(std::move(p), std::move(lw), step);
}

void Ensemble::validate() const {
  if (positions.rows() == 0 || positions.cols() == 0)
    throw DomainError("ensemble must have n >= 1 and d >= 1");
  if (log_weights.size() != positions.rows())
    throw DomainError("log_weights size does not match particle count");
  for (double v : positions.data())
    if (!std::isfinite(v)) throw DomainError("ensemble positions contain non-finite values");
  check_log_weights(log_weights);
}

std::vector<std::size_t> systematic_indices(std::span<const double> lw, double u) {
  const auto nw = normalize_log_weights(lw);
  const std::size_t n = nw.size();
  const double scale = static_cast<double>(n);
  std::vector<std::size_t> idx(n);
  // Cumulative weights are kept in units of 1/n so the comparison with the
  // i + u grid does not lose precision for large n.
  double cum = scale * std::exp(nw[0]);
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double target = static_cast<double>(i) + u;
    while (target >= cum && j + 1 < n) {
      ++j;
      cum += scale * std::exp(nw[j]);
    }
    idx[i] = j;
  }
  return idx;
}

std::vector<std::size_t> multinomial_indices(std::span<const double> lw, RngStream& rng) {
  const auto nw = normalize_log_weights(lw);
  const std::size_t n = nw.size();
  std::vector<double> cdf(n);
  double cum = 0.0;
  for (std::size_t i = 0; i < n; ++i) cdf[i] = (cum += std::exp(nw[i]));
  std::vector<std::size_t> idx(n);
  for (auto& k : idx) {
    const double u = rng.uniform() * cum;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    k = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), n - 1);
  }
  return idx;
}

Ensemble resample(const Ensemble& e, RngStream& rng, ResampleScheme scheme) {
  const std::size_t n = e.size();
  const std::size_t d = e.dim();
  const auto idx = scheme == ResampleScheme::Systematic
                       ? systematic_indices(e.log_weights, rng.uniform_open())
                       : multinomial_indices(e.log_weights, rng);
  Points out(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    auto src = e.positions.row(idx[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  std::vector<double> lw(n, -std::log(static_cast<double>(n)));
  return Ensemble(std::move(out), std::move(lw), e.step_index);
}

std::vector<double> weighted_mean(const Ensemble& e) {
  const auto nw = normalize_log_weights(e.log_weights);
  std::vector<double> m(e.dim(), 0.0);
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double w = std::exp(nw[i]);
    if (w == 0.0) continue;
    auto r = e.positions.row(i);
    for (std::size_t j = 0; j < m.size(); ++j) m[j] += w * r[j];
  }
  return m;
}

// ---------------------------------------------------------------------------

void set_thread_count(int threads) {
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

int thread_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

int configure_threads_from_env() {
  if (const char* env = std::getenv("ALMCFLOW_THREADS")) {
    const int t = std::atoi(env);
    if (t > 0) set_thread_count(t);
  }
  return thread_count();
}

}  // namespace almcflow
