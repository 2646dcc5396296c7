#include "almcflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "almcflow/kernels.hpp"

namespace almcflow {

namespace {

void check_pair(const Points& x, const Points& y) {
  if (x.empty() || y.empty()) throw DomainError("metric needs non-empty samples");
  if (x.cols() != y.cols()) throw DomainError("metric samples differ in dimension");
}

bool row_less(const Points& p, std::size_t a, std::size_t b) {
  auto ra = p.row(a);
  auto rb = p.row(b);
  return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
}

// Sorted copies of both samples, smaller one (by size, then contents) first.
std::pair<Points, Points> canonical_pair(const Points& x, const Points& y) {
  Points a = canonical_rows(x);
  Points b = canonical_rows(y);
  const bool swap = a.rows() != b.rows()
                        ? a.rows() > b.rows()
                        : std::lexicographical_compare(b.data().begin(), b.data().end(),
                                                       a.data().begin(), a.data().end());
  if (swap) std::swap(a, b);
  return {std::move(a), std::move(b)};
}

std::vector<double> column_means(const Points& x) {
  std::vector<double> m(x.cols(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) m[j] += x(i, j);
  for (double& v : m) v /= static_cast<double>(x.rows());
  return m;
}

std::vector<double> second_moments(const Points& x) {
  const std::size_t d = x.cols();
  std::vector<double> s(d * d, 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto r = x.row(i);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) s[a * d + b] += r[a] * r[b];
  }
  for (double& v : s) v /= static_cast<double>(x.rows());
  return s;
}

double l2_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

Points canonical_rows(const Points& x) {
  std::vector<std::size_t> order(x.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return row_less(x, a, b); });
  Points out(x.rows(), x.cols());
  for (std::size_t i = 0; i < order.size(); ++i)
    std::copy_n(x.row(order[i]).begin(), x.cols(), out.row(i).begin());
  return out;
}

MomentErrors l2_moment_errors(const Points& x, const Points& y) {
  check_pair(x, y);
  const Points a = canonical_rows(x);
  const Points b = canonical_rows(y);
  return {l2_diff(column_means(a), column_means(b)),
          l2_diff(second_moments(a), second_moments(b))};
}

double energy_distance(const Points& x, const Points& y) {
  check_pair(x, y);
  const auto [a, b] = canonical_pair(x, y);
  const double na = static_cast<double>(a.rows());
  const double nb = static_cast<double>(b.rows());
  const double cross = kernels::parallel::pairwise_distance_sum(a, b) / (na * nb);
  const double within_a = kernels::parallel::pairwise_distance_sum(a, a) / (na * na);
  const double within_b = kernels::parallel::pairwise_distance_sum(b, b) / (nb * nb);
  return std::max(0.0, 2.0 * cross - (within_a + within_b));
}

double median_bandwidth(const Points& x, const Points& y, std::size_t max_points) {
  check_pair(x, y);
  Points pooled(x.rows() + y.rows(), x.cols());
  std::copy(x.data().begin(), x.data().end(), pooled.data().begin());
  std::copy(y.data().begin(), y.data().end(), pooled.data().begin() + x.data().size());
  pooled = canonical_rows(pooled);
  const std::size_t total = pooled.rows();
  const std::size_t m = std::min(total, std::max<std::size_t>(max_points, 2));
  Points thin(m, pooled.cols());
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t src = i * total / m;
    std::copy_n(pooled.row(src).begin(), pooled.cols(), thin.row(i).begin());
  }
  std::vector<double> dists;
  dists.reserve(m * (m - 1) / 2);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) {
      double r2 = 0.0;
      for (std::size_t k = 0; k < thin.cols(); ++k) {
        const double diff = thin(i, k) - thin(j, k);
        r2 += diff * diff;
      }
      dists.push_back(std::sqrt(r2));
    }
  if (dists.empty()) throw BandwidthDegenerateError("median heuristic needs two pooled points");
  const std::size_t mid = dists.size() / 2;
  std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid), dists.end());
  double med = dists[mid];
  if (dists.size() % 2 == 0) {
    const double lower = *std::max_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid));
    med = 0.5 * (med + lower);
  }
  return med;
}

double mmd_rbf(const Points& x, const Points& y) {
  check_pair(x, y);
  const double h = median_bandwidth(x, y);
  if (!(h > 0.0)) throw BandwidthDegenerateError("median pairwise distance is zero");
  const auto [a, b] = canonical_pair(x, y);
  const double inv = 1.0 / (2.0 * h * h);
  const double na = static_cast<double>(a.rows());
  const double nb = static_cast<double>(b.rows());
  const double kaa = kernels::parallel::pairwise_rbf_sum(a, a, inv) / (na * na);
  const double kbb = kernels::parallel::pairwise_rbf_sum(b, b, inv) / (nb * nb);
  const double kab = kernels::parallel::pairwise_rbf_sum(a, b, inv) / (na * nb);
  return std::sqrt(std::max(0.0, (kaa + kbb) - 2.0 * kab));
}

double wasserstein1_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw DomainError("metric needs non-empty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.size() == b.size()) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
  }
  // integral of |F_a - F_b| over the merged support
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t ia = 0, ib = 0;
  double prev = std::min(a.front(), b.front());
  double area = 0.0;
  while (ia < a.size() || ib < b.size()) {
    const double next = ib == b.size() || (ia < a.size() && a[ia] <= b[ib]) ? a[ia] : b[ib];
    area += std::abs(static_cast<double>(ia) / na - static_cast<double>(ib) / nb) * (next - prev);
    prev = next;
    while (ia < a.size() && a[ia] == next) ++ia;
    while (ib < b.size() && b[ib] == next) ++ib;
  }
  return area;
}

double sliced_wasserstein(const Points& x, const Points& y, std::size_t n_proj,
                          std::uint64_t seed) {
  check_pair(x, y);
  if (n_proj == 0) throw DomainError("sliced Wasserstein needs at least one projection");
  const std::size_t d = x.cols();
  const std::uint64_t key = mix_seed(seed, stream_tag::projections);
  std::vector<double> per(n_proj);
#pragma omp parallel
  {
    std::vector<double> theta(d), px(x.rows()), py(y.rows());
#pragma omp for schedule(static)
    for (std::ptrdiff_t pp = 0; pp < static_cast<std::ptrdiff_t>(n_proj); ++pp) {
      RngStream rng(key, static_cast<std::uint64_t>(pp));
      double norm = 0.0;
      do {
        rng.fill_normal(theta);
        norm = 0.0;
        for (double v : theta) norm += v * v;
      } while (norm == 0.0);
      norm = std::sqrt(norm);
      for (double& v : theta) v /= norm;
      auto project = [&](const Points& p, std::vector<double>& out) {
        for (std::size_t i = 0; i < p.rows(); ++i) {
          double s = 0.0;
          for (std::size_t k = 0; k < d; ++k) s += p(i, k) * theta[k];
          out[i] = s;
        }
      };
      project(x, px);
      project(y, py);
      per[static_cast<std::size_t>(pp)] = wasserstein1_1d(px, py);
    }
  }
  double total = 0.0;
  for (double v : per) total += v;
  return total / static_cast<double>(n_proj);
}

KsdResult ksd_imq(const Points& x, const TargetModel& target) {
  if (x.rows() < 2) throw DomainError("KSD needs at least two samples");
  if (x.cols() != target.dim()) throw DomainError("KSD sample dimension does not match target");
  // indices in errors refer to the caller's row order
  std::vector<double> g(x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (double v : x.row(i))
      if (!std::isfinite(v)) throw NumericalError("non-finite KSD sample", i, 0);
    target.grad_log_density(x.row(i), g);
    for (double v : g)
      if (!std::isfinite(v)) throw NumericalError("non-finite score at KSD sample", i, 0);
  }
  const Points xs = canonical_rows(x);
  const std::size_t m = xs.rows();
  Points scores(m, xs.cols());
  for (std::size_t i = 0; i < m; ++i) target.grad_log_density(xs.row(i), scores.row(i));
  const auto sums = kernels::parallel::stein_imq_sums(xs, scores);
  const double md = static_cast<double>(m);
  KsdResult r;
  r.v_stat = sums.total / (md * md);
  double off = 0.0;
  for (double v : sums.row_offdiag) off += v;
  r.u_stat = off / (md * (md - 1.0));
  double var = 0.0;
  for (double v : sums.row_offdiag) {
    const double h = v / (md - 1.0) - r.u_stat;
    var += h * h;
  }
  r.u_se = 2.0 * std::sqrt(var / (md - 1.0)) / std::sqrt(md);
  return r;
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::ordered_json opt(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

std::optional<double> read_opt(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

}  // namespace

nlohmann::ordered_json metric_conventions() {
  return {{"energy_distance", "V-statistic, 2E|x-y| - E|x-x'| - E|y-y'|"},
          {"mmd_rbf", "sqrt of biased V-statistic MMD^2, median bandwidth on pooled sample"},
          {"sliced_wasserstein", "order p = 1, uniform directions"},
          {"ksd", "IMQ kernel (1 + r^2)^(-1/2); u = off-diagonal mean, v = full mean"}};
}

nlohmann::ordered_json to_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  j["method"] = r.method;
  j["seed"] = r.seed;
  j["mean_err"] = opt(r.mean_err);
  j["second_moment_err"] = opt(r.second_moment_err);
  j["energy_distance"] = opt(r.energy_distance);
  j["mmd_rbf"] = opt(r.mmd_rbf);
  j["sliced_wasserstein"] = opt(r.sliced_wasserstein);
  j["ksd_u"] = r.ksd_undefined ? nlohmann::ordered_json(nullptr) : opt(r.ksd_u);
  j["ksd_v"] = r.ksd_undefined ? nlohmann::ordered_json(nullptr) : opt(r.ksd_v);
  j["ksd_status"] = r.ksd_undefined ? "undefined" : (r.ksd_v ? "ok" : "not_computed");
  if (!r.ksd_note.empty()) j["ksd_note"] = r.ksd_note;
  j["acceptance_rate"] = opt(r.acceptance_rate);
  j["conventions"] = metric_conventions();
  if (!r.extra.empty()) j["extra"] = r.extra;
  return j;
}

MetricReport metric_report_from_json(const nlohmann::json& j) {
  MetricReport r;
  r.method = j.value("method", "");
  r.seed = j.value("seed", std::uint64_t{0});
  r.mean_err = read_opt(j, "mean_err");
  r.second_moment_err = read_opt(j, "second_moment_err");
  r.energy_distance = read_opt(j, "energy_distance");
  r.mmd_rbf = read_opt(j, "mmd_rbf");
  r.sliced_wasserstein = read_opt(j, "sliced_wasserstein");
  r.ksd_u = read_opt(j, "ksd_u");
  r.ksd_v = read_opt(j, "ksd_v");
  r.ksd_undefined = j.value("ksd_status", "") == "undefined";
  r.ksd_note = j.value("ksd_note", "");
  r.acceptance_rate = read_opt(j, "acceptance_rate");
  if (j.contains("extra")) r.extra = j["extra"];
  return r;
}

}  // namespace almcflow
