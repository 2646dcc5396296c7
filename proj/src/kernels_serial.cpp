#include <cmath>
#include <limits>

#include "almcflow/kernels.hpp"

namespace almcflow::kernels {

namespace {

double sq_dist_scaled(std::span<const double> x, std::span<const double> c, double scale) {
  double r2 = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double diff = x[k] - scale * c[k];
    r2 += diff * diff;
  }
  return r2;
}

}  // namespace

double stein_imq_pair(std::span<const double> x, std::span<const double> y,
                      std::span<const double> sx, std::span<const double> sy) {
  const std::size_t d = x.size();
  double r2 = 0.0, ss = 0.0, sxd = 0.0, syd = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double diff = x[k] - y[k];
    r2 += diff * diff;
    ss += sx[k] * sy[k];
    sxd += sx[k] * diff;
    syd += sy[k] * diff;
  }
  const double u = 1.0 + r2;
  const double k0 = 1.0 / std::sqrt(u);
  const double k3 = k0 / u;
  const double k5 = k3 / u;
  return ss * k0 + k3 * sxd - k3 * syd + static_cast<double>(d) * k3 - 3.0 * r2 * k5;
}

namespace serial {

void log_kernel_sum(const Points& queries, const Points& refs, std::span<const double> ref_lw,
                    GaussianLogits p, std::span<double> out) {
  std::vector<double> logits(refs.rows());
  for (std::size_t j = 0; j < queries.rows(); ++j) {
    for (std::size_t i = 0; i < refs.rows(); ++i)
      logits[i] = ref_lw[i] - p.inv_two_var * sq_dist_scaled(queries.row(j), refs.row(i), p.scale);
    out[j] = log_sum_exp(logits);
  }
}

void kernel_weighted_mean(const Points& queries, const Points& refs,
                          std::span<const double> ref_lw, GaussianLogits p, Points& mean,
                          std::span<double> log_norm) {
  const std::size_t d = refs.cols();
  mean = Points(queries.rows(), d);
  std::vector<double> logits(refs.rows());
  for (std::size_t j = 0; j < queries.rows(); ++j) {
    for (std::size_t i = 0; i < refs.rows(); ++i)
      logits[i] = ref_lw[i] - p.inv_two_var * sq_dist_scaled(queries.row(j), refs.row(i), p.scale);
    const double z = log_sum_exp(logits);
    log_norm[j] = z;
    if (!std::isfinite(z)) continue;
    auto m = mean.row(j);
    for (std::size_t i = 0; i < refs.rows(); ++i) {
      const double r = std::exp(logits[i] - z);
      auto c = refs.row(i);
      for (std::size_t k = 0; k < d; ++k) m[k] += r * c[k];
    }
  }
}

double pairwise_distance_sum(const Points& x, const Points& y) {
  double total = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < y.rows(); ++j)
      total += std::sqrt(sq_dist_scaled(x.row(i), y.row(j), 1.0));
  return total;
}

double pairwise_rbf_sum(const Points& x, const Points& y, double inv_two_h2) {
  double total = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < y.rows(); ++j)
      total += std::exp(-inv_two_h2 * sq_dist_scaled(x.row(i), y.row(j), 1.0));
  return total;
}

SteinSums stein_imq_sums(const Points& x, const Points& scores) {
  SteinSums s;
  s.row_offdiag.assign(x.rows(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.rows(); ++j) {
      const double v = stein_imq_pair(x.row(i), x.row(j), scores.row(i), scores.row(j));
      s.total += v;
      if (i == j)
        s.diagonal += v;
      else
        s.row_offdiag[i] += v;
    }
  }
  return s;
}

}  // namespace serial
}  // namespace almcflow::kernels
