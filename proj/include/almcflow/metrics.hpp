#pragma once

// Sample-quality metrics. Every two-sample metric first sorts the rows of each
// input and orders the pair canonically, so results are bit-identical under
// row permutations and under swapping the two samples.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

#include "json.hpp"

#include "almcflow/core.hpp"
#include "almcflow/target.hpp"

namespace almcflow {

class BandwidthDegenerateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MomentErrors {
  double mean_err = 0.0;           // |mean(X) - mean(Y)|_2
  double second_moment_err = 0.0;  // Frobenius norm of E_X[x x^T] - E_Y[y y^T]
};

MomentErrors l2_moment_errors(const Points& x, const Points& y);

/// V-statistic 2 E|x - y| - E|x - x'| - E|y - y'|.
double energy_distance(const Points& x, const Points& y);

/// Median pairwise distance of the pooled sample (evenly thinned to at most
/// max_points rows first).
double median_bandwidth(const Points& x, const Points& y, std::size_t max_points = 4096);

/// sqrt(max(0, biased MMD^2)) with the RBF kernel at the median bandwidth.
double mmd_rbf(const Points& x, const Points& y);

/// Mean over random unit directions of the 1-d Wasserstein-1 distance.
double sliced_wasserstein(const Points& x, const Points& y, std::size_t n_proj = 200,
                          std::uint64_t seed = 0);

/// 1-d Wasserstein-1 between two empirical samples.
double wasserstein1_1d(std::vector<double> a, std::vector<double> b);

struct KsdResult {
  double u_stat = 0.0;  // off-diagonal mean, unbiased
  double v_stat = 0.0;  // full mean, biased and >= 0
  double u_se = 0.0;    // 2 sd(row means) / sqrt(m)
};

/// Kernelized Stein discrepancy with the IMQ kernel (1 + |x - x'|^2)^(-1/2).
KsdResult ksd_imq(const Points& x, const TargetModel& target);

/// Rows sorted lexicographically.
Points canonical_rows(const Points& x);

struct MetricReport {
  std::string method;
  std::uint64_t seed = 0;
  std::optional<double> mean_err;
  std::optional<double> second_moment_err;
  std::optional<double> energy_distance;
  std::optional<double> mmd_rbf;
  std::optional<double> sliced_wasserstein;
  std::optional<double> ksd_u;
  std::optional<double> ksd_v;
  bool ksd_undefined = false;
  std::string ksd_note;
  std::optional<double> acceptance_rate;
  double runtime_seconds = 0.0;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();
};

/// Serialized report. Runtime is left out so reruns compare byte for byte; the
/// caller stores timing separately.
nlohmann::ordered_json to_json(const MetricReport& r);
MetricReport metric_report_from_json(const nlohmann::json& j);

/// Convention block recorded next to every report.
nlohmann::ordered_json metric_conventions();

}  // namespace almcflow
