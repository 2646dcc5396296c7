#pragma once

// Hot loops shared by the samplers and the metrics.
//
// Every kernel exists twice: `serial` is the plain reference implementation
// kept for testing, `parallel` is the OpenMP version used by the library.
// The parallel kernels give each output row to one thread and reduce rows in
// index order, so their results do not depend on the thread count.

#include <span>
#include <vector>

#include "almcflow/core.hpp"

namespace almcflow::kernels {

/// Logit of reference i for query x: lw_i - inv_two_var * |x - scale * ref_i|^2.
struct GaussianLogits {
  double scale = 1.0;
  double inv_two_var = 1.0;
};

/// Sums needed by the Stein discrepancy.
struct SteinSums {
  double total = 0.0;     // sum over all (i, j)
  double diagonal = 0.0;  // sum over i == j
  std::vector<double> row_offdiag;  // per-row sums excluding the diagonal
};

namespace serial {

/// log sum_i exp(logit_ij) for each query j.
void log_kernel_sum(const Points& queries, const Points& refs, std::span<const double> ref_lw,
                    GaussianLogits p, std::span<double> out);

/// Self-normalized kernel average sum_i r_ij ref_i with r_ij proportional to
/// exp(logit_ij). log_norm receives the per-query log normalizer (-inf marks
/// an underflowed query, whose mean row is left at zero).
void kernel_weighted_mean(const Points& queries, const Points& refs,
                          std::span<const double> ref_lw, GaussianLogits p, Points& mean,
                          std::span<double> log_norm);

/// sum_{i,j} |x_i - y_j|
double pairwise_distance_sum(const Points& x, const Points& y);

/// sum_{i,j} exp(-|x_i - y_j|^2 * inv_two_h2)
double pairwise_rbf_sum(const Points& x, const Points& y, double inv_two_h2);

/// Stein kernel sums with the inverse multi-quadric base kernel
/// (1 + |x - x'|^2)^(-1/2); scores holds grad log density at each sample.
SteinSums stein_imq_sums(const Points& x, const Points& scores);

}  // namespace serial

namespace parallel {

void log_kernel_sum(const Points& queries, const Points& refs, std::span<const double> ref_lw,
                    GaussianLogits p, std::span<double> out);
void kernel_weighted_mean(const Points& queries, const Points& refs,
                          std::span<const double> ref_lw, GaussianLogits p, Points& mean,
                          std::span<double> log_norm);
double pairwise_distance_sum(const Points& x, const Points& y);
double pairwise_rbf_sum(const Points& x, const Points& y, double inv_two_h2);
SteinSums stein_imq_sums(const Points& x, const Points& scores);

}  // namespace parallel

/// Value of the IMQ Stein kernel u_p(x, y) for a single pair.
double stein_imq_pair(std::span<const double> x, std::span<const double> y,
                      std::span<const double> sx, std::span<const double> sy);

}  // namespace almcflow::kernels
