#include <cmath>
#include <numbers>

#include "doctest.h"

#include "almcflow/almc.hpp"

using namespace almcflow;

namespace {

AnnealPath constant_path(std::size_t k, double delta, double lambda) {
  std::vector<double> lambdas(k + 1, lambda);
  lambdas[0] = 0.0;
  return AnnealPath(std::vector<double>(k, delta), lambdas);
}

double mean_of(const Points& p, std::size_t j) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.rows(); ++i) s += p(i, j);
  return s / static_cast<double>(p.rows());
}

// Closed-form law of x_k for a 1-d Gaussian target N(mu, s^2) started from N(0, 1):
// the ULA map is affine, so every marginal stays Gaussian.
struct GaussianMarginal {
  double mean;
  double var;
};

GaussianMarginal forward_marginal(const AnnealPath& path, std::size_t k, double mu, double s) {
  double m = 0.0, v = 1.0;
  for (std::size_t j = 1; j <= k; ++j) {
    const double lam = path.lambda(j), dl = path.delta(j);
    const double c = (1 - lam) + lam / (s * s);
    const double a = 1 - dl * c;
    m = a * m + dl * lam * mu / (s * s);
    v = a * a * v + 2 * dl;
  }
  return {m, v};
}

}  // namespace

TEST_CASE("anneal path construction") {
  const auto p = AnnealPath::make(4, 1.0, 0.1, {});
  CHECK(p.steps() == 4);
  CHECK(p.delta(1) == doctest::Approx(1.0));
  CHECK(p.delta(4) == doctest::Approx(0.1));
  CHECK(p.lambda(0) == 0.0);
  CHECK(p.lambda(2) == doctest::Approx(0.5));
  CHECK(p.lambda(4) == doctest::Approx(1.0));

  const auto e = AnnealPath::make(100, 0.1, 0.001, {LambdaShape::ExpSaturating, 0, 1, 50});
  CHECK(e.lambda(50) == doctest::Approx(1 - std::exp(-25.0)));
  CHECK(e.lambda(100) == 1.0);  // clamped
  for (std::size_t k = 1; k <= 100; ++k) CHECK(e.lambda(k) >= e.lambda(k - 1));

  CHECK_THROWS_AS(AnnealPath({0.1}, {0.5, 1.0}), DomainError);
  CHECK_THROWS_AS(AnnealPath({0.1, 0.1}, {0.0, 0.6, 0.5}), DomainError);
  CHECK_THROWS_AS(AnnealPath({-0.1}, {0.0, 1.0}), DomainError);
  CHECK_THROWS_AS(p.delta(0), DomainError);
  CHECK_THROWS_AS(p.lambda(5), DomainError);
}

TEST_CASE("annealed drift and potential") {
  const auto kou = GaussianMixture::kou20();
  const std::vector<double> x{1.3, -0.4};
  const auto p0 = constant_path(1, 0.1, 0.0);
  const auto p1 = constant_path(1, 0.1, 1.0);
  CHECK(annealed_grad(p0, 1, kou, x) == x);
  const auto s = kou.grad_log_density(x);
  const auto g1 = annealed_grad(p1, 1, kou, x);
  CHECK(g1[0] == -s[0]);
  CHECK(g1[1] == -s[1]);

  const auto std_normal = GaussianMixture::single({0.0, 0.0}, 1.0);
  const auto half = constant_path(1, 0.1, 0.5);
  const auto gh = annealed_grad(half, 1, std_normal, x);
  CHECK(gh[0] == doctest::Approx(x[0]).epsilon(1e-15));
  CHECK(gh[1] == doctest::Approx(x[1]).epsilon(1e-15));

  CHECK(annealed_potential(p0, 0, kou, x) == doctest::Approx(0.5 * (1.3 * 1.3 + 0.4 * 0.4)));
  CHECK(annealed_potential(p1, 1, kou, x) == doctest::Approx(-kou.log_density(x)));

  const auto path = AnnealPath::make(10, 0.1, 0.01, {});
  RngStream rng(2, 0);
  for (std::size_t k = 0; k <= 10; ++k) {
    std::vector<double> y{4 + rng.normal(), 5 + rng.normal()};
    const auto g = annealed_grad(path, k, kou, y);
    for (std::size_t j = 0; j < 2; ++j) {
      auto yp = y, ym = y;
      yp[j] += 1e-6;
      ym[j] -= 1e-6;
      const double fd =
          (annealed_potential(path, k, kou, yp) - annealed_potential(path, k, kou, ym)) / 2e-6;
      CHECK(std::abs(fd - g[j]) <= 1e-5 * std::max(1.0, std::abs(g[j])));
    }
  }
}

TEST_CASE("ULA step") {
  const auto std_normal = GaussianMixture::single({0.0}, 1.0);
  SUBCASE("zero noise follows the drift") {
    const auto path = constant_path(1, 0.1, 0.0);
    Points p(3, 1);
    p(0, 0) = 1.0;
    p(1, 0) = -2.0;
    p(2, 0) = 0.5;
    const auto out = ula_step(path, 1, std_normal, Ensemble::uniform(p), 0, {true});
    for (std::size_t i = 0; i < 3; ++i) CHECK(out.positions(i, 0) == doctest::Approx(0.9 * p(i, 0)));
    CHECK(out.step_index == 1);
  }
  SUBCASE("one step from a point mass has the transition moments") {
    const auto kou = GaussianMixture::kou20();
    const auto path = constant_path(1, 0.05, 0.3);
    const std::size_t n = 100000;
    Points p(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
      p(i, 0) = 3.0;
      p(i, 1) = 4.0;
    }
    const auto out = ula_step(path, 1, kou, Ensemble::uniform(p), 17);
    const auto g = annealed_grad(path, 1, kou, p.row(0));
    for (std::size_t j = 0; j < 2; ++j) {
      const double mean = mean_of(out.positions, j);
      const double expect = p(0, j) - 0.05 * g[j];
      const double sd = std::sqrt(0.1);
      CHECK(std::abs(mean - expect) < 4 * sd / std::sqrt(double(n)));
      double var = 0.0;
      for (std::size_t i = 0; i < n; ++i) var += (out.positions(i, j) - mean) * (out.positions(i, j) - mean);
      var /= double(n - 1);
      CHECK(std::abs(var - 0.1) < 4 * 0.1 * std::sqrt(2.0 / double(n)));
    }
    CHECK(out.log_weights == std::vector<double>(n, 0.0));
  }
  SUBCASE("long run matches the biased ULA stationary variance") {
    const std::size_t k = 10000;
    const auto path = constant_path(k, 0.01, 1.0);
    const std::size_t n = 200;
    Ensemble e = Ensemble::uniform(Points(n, 1));
    double s2 = 0.0;
    std::size_t cnt = 0;
    for (std::size_t step = 1; step <= k; ++step) {
      e = ula_step(path, step, std_normal, e, 4);
      if (step > 1000) {
        for (std::size_t i = 0; i < n; ++i) s2 += e.positions(i, 0) * e.positions(i, 0);
        ++cnt;
      }
    }
    const double var = s2 / double(cnt * n);
    CHECK(std::abs(var / (1.0 / (1.0 - 0.005)) - 1.0) < 0.05);
  }
  SUBCASE("non-finite positions are reported") {
    const auto path = constant_path(1, 1e300, 0.0);
    Points p(2, 1);
    p(1, 0) = 1e10;
    try {
      ula_step(path, 1, std_normal, Ensemble::uniform(p), 0, {true});
      FAIL("expected a numerical error");
    } catch (const NumericalError& err) {
      CHECK(err.particle() == 1);
      CHECK(err.step() == 1);
    }
  }
}

TEST_CASE("transition density") {
  const auto kou = GaussianMixture::kou20();
  const auto path = constant_path(1, 0.02, 0.4);
  const std::vector<double> x{3.0, 5.0};
  const auto g = annealed_grad(path, 1, kou, x);
  const std::vector<double> mode{x[0] - 0.02 * g[0], x[1] - 0.02 * g[1]};
  CHECK(log_transition_density(path, 1, kou, x, mode) ==
        doctest::Approx(-std::log(4 * std::numbers::pi * 0.02)).epsilon(1e-13));
  const std::vector<double> up{mode[0] + 0.1, mode[1] - 0.2}, down{mode[0] - 0.1, mode[1] + 0.2};
  CHECK(log_transition_density(path, 1, kou, x, up) ==
        doctest::Approx(log_transition_density(path, 1, kou, x, down)).epsilon(1e-13));

  const auto g1 = GaussianMixture::single({1.0}, 0.7);
  const std::vector<double> x1{0.4};
  const int nodes = 200001;
  const double lo = -10, hi = 10, h = (hi - lo) / (nodes - 1);
  double integral = 0.0;
  for (int i = 0; i < nodes; ++i) {
    const double w = (i == 0 || i == nodes - 1) ? 0.5 : 1.0;
    integral += w * std::exp(log_transition_density(path, 1, g1, x1, std::vector<double>{lo + i * h}));
  }
  CHECK(std::abs(integral * h - 1.0) < 1e-8);
}

TEST_CASE("forward density estimate") {
  const auto kou = GaussianMixture::kou20();
  const auto path = constant_path(1, 0.02, 0.4);
  Points one(1, 2);
  one(0, 0) = 3.0;
  one(0, 1) = 5.0;
  const std::vector<double> q{3.1, 4.9};
  const double single = log_forward_density_estimate(path, 1, kou, Ensemble::uniform(one), q, 1);
  CHECK(single == doctest::Approx(log_transition_density(path, 1, kou, one.row(0), q)).epsilon(1e-12));

  Points many(50, 2);
  for (std::size_t i = 0; i < 50; ++i) {
    many(i, 0) = 3.0;
    many(i, 1) = 5.0;
  }
  CHECK(log_forward_density_estimate(path, 1, kou, Ensemble::uniform(many), q, 50) ==
        doctest::Approx(single).epsilon(1e-12));
  CHECK(log_forward_density_estimate(path, 1, kou, Ensemble::uniform(many), q, 7, 3) ==
        doctest::Approx(single).epsilon(1e-12));
  CHECK_THROWS_AS(log_forward_density_estimate(path, 1, kou, Ensemble::uniform(many), q, 51),
                  DomainError);

  SUBCASE("matches quadrature of the propagated Gaussian within the Monte Carlo band") {
    const auto g1 = GaussianMixture::single({1.0}, 0.7);
    const auto p1 = constant_path(1, 0.05, 0.6);
    const std::size_t m = 10000;
    Points prev(m, 1);
    RngStream rng(8, 0);
    for (std::size_t i = 0; i < m; ++i) prev(i, 0) = 0.5 + 0.8 * rng.normal();
    for (double x : {-0.5, 0.6, 1.8}) {
      const std::vector<double> xv{x};
      const double est = log_forward_density_estimate(p1, 1, g1, Ensemble::uniform(prev), xv, m);
      // standard error of the kernel average
      double s = 0.0, s2 = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const double k = std::exp(log_transition_density(p1, 1, g1, prev.row(i), xv));
        s += k;
        s2 += k * k;
      }
      const double mean = s / m;
      const double se = std::sqrt((s2 / m - mean * mean) / m);
      // quadrature of p_{k-1} * mu_k with p_{k-1} = N(0.5, 0.8^2)
      const int nodes = 20001;
      const double lo = 0.5 - 12 * 0.8, hi = 0.5 + 12 * 0.8, h = (hi - lo) / (nodes - 1);
      double q = 0.0;
      for (int i = 0; i < nodes; ++i) {
        const double y = lo + i * h;
        const double w = (i == 0 || i == nodes - 1) ? 0.5 : 1.0;
        const double p = std::exp(-(y - 0.5) * (y - 0.5) / (2 * 0.64)) / std::sqrt(2 * std::numbers::pi * 0.64);
        q += w * p * std::exp(log_transition_density(p1, 1, g1, std::vector<double>{y}, xv));
      }
      q *= h;
      CHECK(std::abs(std::exp(est) - q) < 3 * se);
    }
  }
}

TEST_CASE("marginal weights") {
  SUBCASE("flat when the target is the exact one-step law") {
    // N(0, s^2) with (1 - delta / s^2)^2 + 2 delta = s^2 is reproduced exactly by one
    // lambda = 1 step from N(0, 1); the weights pi / p_1 are then constant.
    const double delta = 0.05;
    double u = 1.0;
    for (int it = 0; it < 200; ++it) u = (1 - delta / u) * (1 - delta / u) + 2 * delta;
    CHECK(std::abs((1 - delta / u) * (1 - delta / u) + 2 * delta - u) < 1e-14);
    const auto tgt = GaussianMixture::single({0.0}, std::sqrt(u));
    const auto path = constant_path(1, delta, 1.0);
    const auto m = forward_marginal(path, 1, 0.0, std::sqrt(u));
    CHECK(m.var == doctest::Approx(u).epsilon(1e-12));
    const std::size_t n = 2000;
    Points p(n, 1);
    RngStream rng(3, 0);
    for (std::size_t i = 0; i < n; ++i) p(i, 0) = rng.normal();
    const auto cur = ula_step(path, 1, tgt, Ensemble::uniform(p), 5);
    const auto lw = marginal_log_weights(path, 1, tgt, cur, [&](std::span<const double> x) {
      return -0.5 * std::log(2 * std::numbers::pi * m.var) - (x[0] - m.mean) * (x[0] - m.mean) / (2 * m.var);
    });
    CHECK(ess(lw) / double(n) == doctest::Approx(1.0).epsilon(1e-9));
    for (double w : lw) CHECK(w == doctest::Approx(lw[0]).epsilon(1e-10));
    // the ensemble estimate approaches the same flat profile
    const auto est = marginal_log_weights(path, 1, tgt, cur, Ensemble::uniform(p), n);
    CHECK(ess(est) / double(n) > 0.98);
  }
  SUBCASE("single particle at the transition mode") {
    const auto kou = GaussianMixture::kou20();
    const auto path = constant_path(1, 0.02, 0.4);
    Points one(1, 2);
    one(0, 0) = 3.0;
    one(0, 1) = 5.0;
    const auto g = annealed_grad(path, 1, kou, one.row(0));
    Points cur(1, 2);
    cur(0, 0) = 3.0 - 0.02 * g[0];
    cur(0, 1) = 5.0 - 0.02 * g[1];
    const auto lw = marginal_log_weights(path, 1, kou, Ensemble::uniform(cur), Ensemble::uniform(one), 1);
    const double expect = -annealed_potential(path, 1, kou, cur.row(0)) + std::log(4 * std::numbers::pi * 0.02);
    CHECK(lw[0] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("weights are invariant to constant shifts of the target") {
  struct Shifted final : TargetModel {
    const TargetModel& base;
    double c;
    Shifted(const TargetModel& b, double shift) : base(b), c(shift) {}
    std::size_t dim() const override { return base.dim(); }
    double log_density(std::span<const double> x) const override { return base.log_density(x) + c; }
    void grad_log_density(std::span<const double> x, std::span<double> out) const override {
      base.grad_log_density(x, out);
    }
    std::string name() const override { return "shifted"; }
  };
  const auto kou = GaussianMixture::kou20();
  const Shifted shifted(kou, 37.5);
  for (auto mode : {WeightMode::jarzynski(), WeightMode::marginal(300, 5)}) {
    AlmcConfig cfg;
    cfg.n = 300;
    cfg.path = AnnealPath::make(40, 0.05, 0.01, {});
    cfg.weight_mode = mode;
    cfg.ess_threshold = 150;
    cfg.seed = 3;
    const auto a = run_almc(cfg, kou);
    const auto b = run_almc(cfg, shifted);
    const auto na = normalize_log_weights(a.ensemble.log_weights);
    const auto nb = normalize_log_weights(b.ensemble.log_weights);
    CHECK(a.ensemble.positions == b.ensemble.positions);
    for (std::size_t i = 0; i < na.size(); ++i)
      CHECK(std::abs(std::exp(na[i]) - std::exp(nb[i])) < 1e-10);
  }
}

TEST_CASE("Jarzynski increment") {
  const auto g = GaussianMixture::single({0.5}, 1.3);
  for (double delta : {1e-2, 1e-4, 1e-6}) {
    const auto path = constant_path(2, delta, 1.0);
    const std::vector<double> x{0.7};
    const double inc = jarzynski_log_weight_update(path, 2, g, x, x, 0.0);
    CHECK(std::abs(inc) < 10 * delta);
  }
  const auto path = constant_path(2, 0.1, 0.5);
  CHECK(jarzynski_log_weight_update(path, 2, g, std::vector<double>{0.1}, std::vector<double>{0.3}, 2.5) ==
        doctest::Approx(2.5 + jarzynski_log_weight_update(path, 2, g, std::vector<double>{0.1},
                                                          std::vector<double>{0.3}, 0.0)));
}

TEST_CASE("Jarzynski identity with a static potential") {
  const auto g = GaussianMixture::single({0.0}, 1.0);
  AlmcConfig cfg;
  cfg.n = 100000;
  cfg.path = constant_path(50, 0.05, 0.5);
  cfg.weight_mode = WeightMode::jarzynski();
  cfg.ess_threshold = 1.0;
  cfg.seed = 21;
  // lambda_0 = 0 and lambda_k = 0.5 with rho = N(0,1): V_k = |x|^2/2 + ln(2 pi)/4,
  // so E[exp(A)] = Z_K / Z_0 = (2 pi)^(-1/4)
  const auto res = run_almc(cfg, g);
  const auto& lw = res.ensemble.log_weights;
  double s = 0, s2 = 0;
  for (double a : lw) {
    s += std::exp(a);
    s2 += std::exp(2 * a);
  }
  const double mean = s / double(lw.size());
  const double se = std::sqrt((s2 / double(lw.size()) - mean * mean) / double(lw.size()));
  CHECK(std::abs(mean - std::pow(2 * std::numbers::pi, -0.25)) < 3 * se + 1e-12);
}

TEST_CASE("run_almc on a Gaussian target") {
  const auto g = GaussianMixture::single({0.0, 0.0}, 1.0);
  AlmcConfig cfg;
  cfg.n = 5000;
  cfg.path = AnnealPath::make(200, 0.05, 0.01, {});
  cfg.ess_threshold = 2500;
  cfg.seed = 7;
  const auto res = run_almc(cfg, g);
  CHECK(res.diagnostics.size() == 201);
  CHECK(res.diagnostics[0].ess == 5000.0);
  CHECK(res.diagnostics.back().lambda == doctest::Approx(1.0));
  const auto nw = normalize_log_weights(res.ensemble.log_weights);
  const double e = ess(res.ensemble.log_weights);
  for (std::size_t j = 0; j < 2; ++j) {
    double m = 0, m2 = 0;
    for (std::size_t i = 0; i < cfg.n; ++i) {
      const double w = std::exp(nw[i]);
      m += w * res.ensemble.positions(i, j);
      m2 += w * res.ensemble.positions(i, j) * res.ensemble.positions(i, j);
    }
    CHECK(std::abs(m) < 4 * std::sqrt(1.0 / e));
    CHECK(std::abs(m2 - 1.0) < 0.05);
  }
  // normalized target: log Z = 0 up to Monte Carlo error
  CHECK(std::abs(res.log_z_estimate) < 0.05);
  const auto jsonl = diagnostics_jsonl(res.diagnostics);
  CHECK(std::count(jsonl.begin(), jsonl.end(), '\n') == 201);
  CHECK(jsonl.rfind("{\"step\":0,\"ess\":5000.0,\"resampled\":false", 0) == 0);
}

TEST_CASE("run_almc matches a hand-rolled ULA loop") {
  const auto kou = GaussianMixture::kou20();
  AlmcConfig cfg;
  cfg.n = 64;
  cfg.path = AnnealPath::make(30, 0.05, 0.01, {});
  cfg.ess_threshold = 1.0;
  cfg.seed = 99;
  const auto res = run_almc(cfg, kou);

  Points x0(cfg.n, 2);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    RngStream rng(mix_seed(cfg.seed, stream_tag::init), i);
    rng.fill_normal(x0.row(i));
  }
  Ensemble e = Ensemble::uniform(x0);
  std::vector<double> a(cfg.n, 0.0);
  for (std::size_t k = 1; k <= 30; ++k) {
    const auto next = ula_step(cfg.path, k, kou, e, cfg.seed);
    for (std::size_t i = 0; i < cfg.n; ++i)
      a[i] = jarzynski_log_weight_update(cfg.path, k, kou, e.positions.row(i), next.positions.row(i), a[i]);
    e = next;
  }
  CHECK(res.ensemble.positions == e.positions);
  for (std::size_t i = 0; i < cfg.n; ++i)
    CHECK(res.ensemble.log_weights[i] == doctest::Approx(a[i]).epsilon(1e-12));
}

TEST_CASE("run_almc is bit-identical across thread counts") {
  const auto kou = GaussianMixture::kou20();
  for (auto mode : {WeightMode::jarzynski(), WeightMode::marginal(200, 4)}) {
    AlmcConfig cfg;
    cfg.n = 400;
    cfg.path = AnnealPath::make(50, 0.05, 0.01, {});
    cfg.weight_mode = mode;
    cfg.ess_threshold = 200;
    cfg.seed = 5;
    cfg.per_step_budget = 1e4;  // exercises the stride and the subsample
    const int before = thread_count();
    set_thread_count(1);
    const auto a = run_almc(cfg, kou);
    set_thread_count(4);
    const auto b = run_almc(cfg, kou);
    set_thread_count(before);
    CHECK(a.ensemble.positions == b.ensemble.positions);
    CHECK(a.ensemble.log_weights == b.ensemble.log_weights);
    CHECK(a.resample_count == b.resample_count);
  }
}

TEST_CASE("marginal mode evaluates on the stride and always at the last step") {
  const auto kou = GaussianMixture::kou20();
  AlmcConfig cfg;
  cfg.n = 100;
  cfg.path = AnnealPath::make(23, 0.05, 0.01, {});
  cfg.weight_mode = WeightMode::marginal(100, 5);
  cfg.ess_threshold = 1.0;
  cfg.per_step_budget = 0.0;
  const auto res = run_almc(cfg, kou);
  for (const auto& d : res.diagnostics) {
    if (d.step == 0) continue;
    CHECK(d.weights_evaluated == (d.step % 5 == 0 || d.step == 23));
  }
  cfg.per_step_budget = 1e7;
  for (const auto& d : run_almc(cfg, kou).diagnostics) CHECK(d.weights_evaluated);
}

TEST_CASE("run_almc validates its configuration") {
  const auto kou = GaussianMixture::kou20();
  AlmcConfig cfg;
  cfg.n = 10;
  cfg.ess_threshold = 11;
  CHECK_THROWS_AS(run_almc(cfg, kou), DomainError);
  CHECK(parse_weight_mode("marginal") == WeightModeKind::Marginal);
  CHECK(parse_weight_mode(to_string(WeightModeKind::Jarzynski)) == WeightModeKind::Jarzynski);
  CHECK_THROWS_AS(parse_weight_mode("aisx"), DomainError);
}
