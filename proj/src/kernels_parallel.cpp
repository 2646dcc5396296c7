#include <algorithm>
#include <cmath>
#include <limits>

#include "almcflow/kernels.hpp"

namespace almcflow::kernels::parallel {

namespace {

using index_t = std::ptrdiff_t;

inline double sq_dist(const double* x, const double* c, std::size_t d, double scale) {
  double r2 = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double diff = x[k] - scale * c[k];
    r2 += diff * diff;
  }
  return r2;
}

// Fills logits for one query and returns their maximum.
inline double fill_logits(const double* q, const Points& refs, std::span<const double> ref_lw,
                          GaussianLogits p, std::vector<double>& logits) {
  const std::size_t n = refs.rows();
  const std::size_t d = refs.cols();
  const double* base = refs.data().data();
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double l = ref_lw[i] - p.inv_two_var * sq_dist(q, base + i * d, d, p.scale);
    logits[i] = l;
    mx = std::max(mx, l);
  }
  return mx;
}

// exp(l - max) below this is dropped from the weighted mean; it cannot change
// a double-precision sum whose largest term is 1.
constexpr double kNegligible = -745.0;

}  // namespace

void log_kernel_sum(const Points& queries, const Points& refs, std::span<const double> ref_lw,
                    GaussianLogits p, std::span<double> out) {
  const index_t nq = static_cast<index_t>(queries.rows());
#pragma omp parallel
  {
    std::vector<double> logits(refs.rows());
#pragma omp for schedule(static)
    for (index_t j = 0; j < nq; ++j) {
      const double mx = fill_logits(queries.row(static_cast<std::size_t>(j)).data(), refs,
                                    ref_lw, p, logits);
      if (!std::isfinite(mx)) {
        out[static_cast<std::size_t>(j)] = mx;
        continue;
      }
      double s = 0.0;
      for (double l : logits) s += std::exp(l - mx);
      out[static_cast<std::size_t>(j)] = mx + std::log(s);
    }
  }
}

void kernel_weighted_mean(const Points& queries, const Points& refs,
                          std::span<const double> ref_lw, GaussianLogits p, Points& mean,
                          std::span<double> log_norm) {
  const std::size_t d = refs.cols();
  const std::size_t n = refs.rows();
  mean = Points(queries.rows(), d);
  const index_t nq = static_cast<index_t>(queries.rows());
  const double* base = refs.data().data();
#pragma omp parallel
  {
    std::vector<double> logits(n);
#pragma omp for schedule(static)
    for (index_t jj = 0; jj < nq; ++jj) {
      const auto j = static_cast<std::size_t>(jj);
      const double mx = fill_logits(queries.row(j).data(), refs, ref_lw, p, logits);
      if (!std::isfinite(mx)) {
        log_norm[j] = -std::numeric_limits<double>::infinity();
        continue;
      }
      auto m = mean.row(j);
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double shifted = logits[i] - mx;
        if (shifted < kNegligible) continue;
        const double w = std::exp(shifted);
        s += w;
        const double* c = base + i * d;
        for (std::size_t k = 0; k < d; ++k) m[k] += w * c[k];
      }
      for (std::size_t k = 0; k < d; ++k) m[k] /= s;
      log_norm[j] = mx + std::log(s);
    }
  }
}

double pairwise_distance_sum(const Points& x, const Points& y) {
  const std::size_t d = x.cols();
  std::vector<double> rows(x.rows(), 0.0);
  const double* xb = x.data().data();
  const double* yb = y.data().data();
  const index_t nx = static_cast<index_t>(x.rows());
#pragma omp parallel for schedule(static)
  for (index_t ii = 0; ii < nx; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double acc = 0.0;
    for (std::size_t j = 0; j < y.rows(); ++j) acc += std::sqrt(sq_dist(xb + i * d, yb + j * d, d, 1.0));
    rows[i] = acc;
  }
  double total = 0.0;
  for (double r : rows) total += r;
  return total;
}

double pairwise_rbf_sum(const Points& x, const Points& y, double inv_two_h2) {
  const std::size_t d = x.cols();
  std::vector<double> rows(x.rows(), 0.0);
  const double* xb = x.data().data();
  const double* yb = y.data().data();
  const index_t nx = static_cast<index_t>(x.rows());
#pragma omp parallel for schedule(static)
  for (index_t ii = 0; ii < nx; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double acc = 0.0;
    for (std::size_t j = 0; j < y.rows(); ++j)
      acc += std::exp(-inv_two_h2 * sq_dist(xb + i * d, yb + j * d, d, 1.0));
    rows[i] = acc;
  }
  double total = 0.0;
  for (double r : rows) total += r;
  return total;
}

SteinSums stein_imq_sums(const Points& x, const Points& scores) {
  const std::size_t m = x.rows();
  SteinSums s;
  s.row_offdiag.assign(m, 0.0);
  std::vector<double> diag(m, 0.0);
  const index_t nm = static_cast<index_t>(m);
#pragma omp parallel for schedule(dynamic, 16)
  for (index_t ii = 0; ii < nm; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double acc = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      acc += stein_imq_pair(x.row(i), x.row(j), scores.row(i), scores.row(j));
    }
    s.row_offdiag[i] = acc;
    diag[i] = stein_imq_pair(x.row(i), x.row(i), scores.row(i), scores.row(i));
  }
  for (std::size_t i = 0; i < m; ++i) {
    s.diagonal += diag[i];
    s.total += s.row_offdiag[i] + diag[i];
  }
  return s;
}

}  // namespace almcflow::kernels::parallel
