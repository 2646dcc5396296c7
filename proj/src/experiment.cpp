#include "almcflow/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "almcflow/io.hpp"

namespace almcflow {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Targets

std::unique_ptr<TargetModel> make_target(const TargetSpec& spec) {
  if (spec.kind == "kou20") return std::make_unique<GaussianMixture>(GaussianMixture::kou20());
  if (spec.kind == "gmm100d5")
    return std::make_unique<GaussianMixture>(GaussianMixture::gmm100d5());
  if (spec.kind == "allen_cahn")
    return std::make_unique<AllenCahn1D>(spec.d, spec.a, spec.b, spec.beta);
  if (spec.kind == "mixture") {
    if (spec.means.empty()) throw ConfigError("mixture target needs means");
    const std::size_t d = spec.means.front().size();
    Points means(spec.means.size(), d);
    for (std::size_t i = 0; i < spec.means.size(); ++i) {
      if (spec.means[i].size() != d) throw ConfigError("mixture means differ in dimension");
      std::copy(spec.means[i].begin(), spec.means[i].end(), means.row(i).begin());
    }
    try {
      return std::make_unique<GaussianMixture>(std::move(means), spec.sigmas, spec.weights);
    } catch (const DomainError& e) {
      throw ConfigError(e.what());
    }
  }
  throw ConfigError("unknown target kind '" + spec.kind + "'");
}

// ---------------------------------------------------------------------------
// Presets

std::vector<std::string> preset_names() { return {"gmm2d", "gmm100d", "allen_cahn"}; }

ExperimentConfig preset_config(const std::string& name) {
  ExperimentConfig c;
  c.name = name;
  c.preset = name;
  if (name == "gmm2d") {
    c.target.kind = "kou20";
    c.n = 10000;
    c.test_particles = 10000;
    c.steps = 1000;
    c.delta_start = 0.1;
    c.delta_end = 0.005;
    c.lambda = {LambdaShape::Linear, 0.0, 1.0, 50.0};
    c.weight_mode = WeightModeKind::Marginal;
    c.ess_fraction = 0.0;  // C = 1: no resampling
    c.weight_stride = 50;
    c.weight_budget = 0.0;
    c.hmc_step_size = 0.05;
    c.hmc_leapfrog = 10;
    c.hmc_burn_in = 1000;
    c.deviation_note =
        "delta 0.1->0.005 instead of 0.5->0.05 (ULA unstable at sigma = 0.1); marginal weights "
        "without resampling instead of Jarzynski with C = n/2 (both collapse onto central modes)";
  } else if (name == "gmm100d") {
    c.target.kind = "gmm100d5";
    c.n = 10000;
    c.test_particles = 10000;
    c.steps = 1000;
    c.delta_start = 0.1;
    c.delta_end = 0.01;
    c.lambda = {LambdaShape::Linear, 0.0, 1.0, 50.0};
    c.weight_mode = WeightModeKind::Marginal;
    c.ess_fraction = 0.0;
    c.weight_stride = 50;
    c.weight_budget = 0.0;
    c.hmc_step_size = 0.05;
    c.hmc_leapfrog = 10;
    c.hmc_burn_in = 1000;
    c.deviation_note =
        "delta 0.1->0.01 instead of 1.0->0.1 (ULA diverges for lambda in (0.14, 0.86)); "
        "marginal weights without resampling";
  } else if (name == "allen_cahn") {
    c.target.kind = "allen_cahn";
    c.target.d = 64;
    c.n = 10000;
    c.test_particles = 1000;
    c.steps = 10000;
    c.delta_start = 0.003;
    c.delta_end = 0.001;
    c.lambda = {LambdaShape::ExpSaturating, 0.0, 1.0, 50.0};
    c.weight_mode = WeightModeKind::Jarzynski;
    c.ess_fraction = 0.5;
    c.proposals = 10000;
    c.hmc_step_size = 0.02;
    c.hmc_leapfrog = 30;
    c.hmc_burn_in = 2000;
    c.ksd = true;
    c.deviation_note =
        "delta 0.003->0.001 instead of 0.1->0.001 (ULA diverges once the lattice stiffness "
        "dominates, delta * 512 > 2 at d = 64)";
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  return c;
}

void ExperimentConfig::validate() const {
  auto bad = [](const std::string& m) { throw ConfigError(m); };
  if (methods.empty()) bad("experiment.methods is empty");
  static const std::set<std::string> known{"almc_ode", "mc_ode", "hmc"};
  for (const auto& m : methods)
    if (!known.count(m)) bad("unknown method '" + m + "'");
  if (seeds.empty()) bad("experiment.seeds is empty");
  if (n == 0 || steps == 0 || test_particles == 0 || flow_steps == 0)
    bad("n, steps, test_particles, flow steps must be positive");
  if (!(delta_start > 0.0 && delta_end > 0.0)) bad("step sizes must be positive");
  if (!(ess_fraction >= 0.0 && ess_fraction <= 1.0)) bad("almc.ess_fraction must lie in [0, 1]");
  if (!(epsilon > 0.0 && epsilon < 0.5)) bad("flow.epsilon must lie in (0, 0.5)");
  if (reference_size == 0 || weight_stride == 0) bad("reference_size and weight_stride must be positive");
  if (!(hmc_step_size > 0.0) || hmc_leapfrog == 0) bad("HMC step size and leapfrog steps must be positive");
  if (projections == 0) bad("metrics.projections must be positive");
  make_target(target);
}

// ---------------------------------------------------------------------------
// Config file <-> ExperimentConfig

namespace {

LambdaShape parse_lambda_shape(const std::string& s) {
  if (s == "linear") return LambdaShape::Linear;
  if (s == "exp_saturating") return LambdaShape::ExpSaturating;
  throw ConfigError("unknown lambda schedule '" + s + "'");
}

std::string lambda_shape_name(LambdaShape s) {
  return s == LambdaShape::Linear ? "linear" : "exp_saturating";
}

std::string num(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

template <class T>
std::string list(const std::vector<T>& v, bool quote = false) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    if constexpr (std::is_same_v<T, std::string>)
      s += quote ? "\"" + v[i] + "\"" : v[i];
    else if constexpr (std::is_floating_point_v<T>)
      s += num(v[i]);
    else
      s += std::to_string(v[i]);
  }
  return s + "]";
}

}  // namespace

ExperimentConfig config_from_file(const ConfigFile& f) {
  ExperimentConfig c;
  if (f.has("experiment.preset")) c = preset_config(f.get_string("experiment.preset"));

  static const std::set<std::string> known{
      "experiment.name", "experiment.preset", "experiment.methods", "experiment.seeds",
      "experiment.applied_scale", "experiment.deviation",
      "target.kind", "target.d", "target.a", "target.b", "target.beta", "target.means",
      "target.sigmas", "target.weights",
      "almc.n", "almc.steps", "almc.delta_start", "almc.delta_end", "almc.lambda",
      "almc.lambda_start", "almc.lambda_end", "almc.lambda_rate", "almc.ess_fraction",
      "almc.weight_mode", "almc.reference_size", "almc.weight_stride", "almc.weight_budget",
      "flow.test_particles", "flow.steps", "flow.epsilon", "flow.interpolant",
      "mc_ode.proposals",
      "hmc.step_size", "hmc.leapfrog_steps", "hmc.burn_in", "hmc.samples",
      "metrics.reference_samples", "metrics.projections", "metrics.ksd"};
  for (const auto& [k, v] : f.values())
    if (!known.count(k)) throw ConfigError("unknown config key " + k);

  auto set_size = [&](const char* k, std::size_t& out) { if (f.has(k)) out = f.get_size(k); };
  auto set_double = [&](const char* k, double& out) { if (f.has(k)) out = f.get_double(k); };

  if (f.has("experiment.name")) c.name = f.get_string("experiment.name");
  if (f.has("experiment.methods")) c.methods = f.get_strings("experiment.methods");
  if (f.has("experiment.seeds")) c.seeds = f.get_u64s("experiment.seeds");
  set_double("experiment.applied_scale", c.scale);
  if (f.has("experiment.deviation")) c.deviation_note = f.get_string("experiment.deviation");

  if (f.has("target.kind")) c.target.kind = f.get_string("target.kind");
  set_size("target.d", c.target.d);
  set_double("target.a", c.target.a);
  set_double("target.b", c.target.b);
  set_double("target.beta", c.target.beta);
  if (f.has("target.means")) c.target.means = f.get_matrix("target.means");
  if (f.has("target.sigmas")) c.target.sigmas = f.get_doubles("target.sigmas");
  if (f.has("target.weights")) c.target.weights = f.get_doubles("target.weights");

  set_size("almc.n", c.n);
  set_size("almc.steps", c.steps);
  set_double("almc.delta_start", c.delta_start);
  set_double("almc.delta_end", c.delta_end);
  if (f.has("almc.lambda")) c.lambda.shape = parse_lambda_shape(f.get_string("almc.lambda"));
  set_double("almc.lambda_start", c.lambda.start);
  set_double("almc.lambda_end", c.lambda.end);
  set_double("almc.lambda_rate", c.lambda.rate);
  set_double("almc.ess_fraction", c.ess_fraction);
  if (f.has("almc.weight_mode")) {
    try {
      c.weight_mode = parse_weight_mode(f.get_string("almc.weight_mode"));
    } catch (const DomainError& e) {
      throw ConfigError(e.what());
    }
  }
  set_size("almc.reference_size", c.reference_size);
  set_size("almc.weight_stride", c.weight_stride);
  set_double("almc.weight_budget", c.weight_budget);

  set_size("flow.test_particles", c.test_particles);
  set_size("flow.steps", c.flow_steps);
  set_double("flow.epsilon", c.epsilon);
  if (f.has("flow.interpolant")) {
    try {
      c.interpolant = parse_interpolant(f.get_string("flow.interpolant"));
    } catch (const DomainError& e) {
      throw ConfigError(e.what());
    }
  }

  set_size("mc_ode.proposals", c.proposals);
  set_double("hmc.step_size", c.hmc_step_size);
  set_size("hmc.leapfrog_steps", c.hmc_leapfrog);
  set_size("hmc.burn_in", c.hmc_burn_in);
  set_size("hmc.samples", c.hmc_samples);
  set_size("metrics.reference_samples", c.reference_samples);
  set_size("metrics.projections", c.projections);
  if (f.has("metrics.ksd")) c.ksd = f.get_bool("metrics.ksd");

  c.validate();
  return c;
}

ExperimentConfig apply_scale(ExperimentConfig cfg, double f) {
  if (!(f > 0.0) || !std::isfinite(f)) throw ConfigError("--scale must be positive");
  auto scaled = [f](std::size_t v) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(v) * f)));
  };
  cfg.n = scaled(cfg.n);
  cfg.test_particles = scaled(cfg.test_particles);
  cfg.steps = scaled(cfg.steps);
  cfg.scale *= f;
  return cfg;
}

std::string to_config_text(const ExperimentConfig& c) {
  std::ostringstream os;
  os << "[experiment]\n";
  os << "name = \"" << c.name << "\"\n";
  os << "methods = " << list(c.methods) << "\n";
  os << "seeds = " << list(c.seeds) << "\n";
  os << "applied_scale = " << num(c.scale) << "\n";
  if (!c.deviation_note.empty()) os << "deviation = \"" << c.deviation_note << "\"\n";
  if (!c.preset.empty()) os << "preset = " << c.preset << "\n";
  os << "\n[target]\nkind = " << c.target.kind << "\n";
  if (c.target.kind == "allen_cahn") {
    os << "d = " << c.target.d << "\na = " << num(c.target.a) << "\nb = " << num(c.target.b)
       << "\nbeta = " << num(c.target.beta) << "\n";
  } else if (c.target.kind == "mixture") {
    os << "means = [";
    for (std::size_t i = 0; i < c.target.means.size(); ++i)
      os << (i ? ", " : "") << list(c.target.means[i]);
    os << "]\nsigmas = " << list(c.target.sigmas) << "\nweights = " << list(c.target.weights)
       << "\n";
  }
  os << "\n[almc]\n";
  os << "n = " << c.n << "\nsteps = " << c.steps << "\n";
  os << "delta_start = " << num(c.delta_start) << "\ndelta_end = " << num(c.delta_end) << "\n";
  os << "lambda = " << lambda_shape_name(c.lambda.shape) << "\n";
  os << "lambda_start = " << num(c.lambda.start) << "\nlambda_end = " << num(c.lambda.end)
     << "\nlambda_rate = " << num(c.lambda.rate) << "\n";
  os << "ess_fraction = " << num(c.ess_fraction) << "\n";
  os << "weight_mode = " << to_string(c.weight_mode) << "\n";
  os << "reference_size = " << c.reference_size << "\nweight_stride = " << c.weight_stride
     << "\nweight_budget = " << num(c.weight_budget) << "\n";
  os << "\n[flow]\n";
  os << "test_particles = " << c.test_particles << "\nsteps = " << c.flow_steps
     << "\nepsilon = " << num(c.epsilon) << "\ninterpolant = " << to_string(c.interpolant)
     << "\n";
  os << "\n[mc_ode]\nproposals = " << c.proposals << "\n";
  os << "\n[hmc]\nstep_size = " << num(c.hmc_step_size) << "\nleapfrog_steps = " << c.hmc_leapfrog
     << "\nburn_in = " << c.hmc_burn_in << "\nsamples = " << c.hmc_samples << "\n";
  os << "\n[metrics]\nreference_samples = " << c.reference_samples
     << "\nprojections = " << c.projections << "\nksd = " << (c.ksd ? "true" : "false") << "\n";
  return os.str();
}

AlmcConfig almc_config(const ExperimentConfig& c, std::uint64_t seed) {
  AlmcConfig a;
  a.n = c.n;
  a.path = AnnealPath::make(c.steps, c.delta_start, c.delta_end, c.lambda);
  a.weight_mode = {c.weight_mode, std::min(c.reference_size, c.n), c.weight_stride};
  a.ess_threshold = std::max(1.0, c.ess_fraction * static_cast<double>(c.n));
  a.seed = seed;
  a.per_step_budget = c.weight_budget;
  return a;
}

FlowConfig flow_config(const ExperimentConfig& c, std::uint64_t seed) {
  FlowConfig f;
  f.schedule = InterpolantSchedule(c.interpolant);
  f.epsilon = c.epsilon;
  f.steps = c.flow_steps;
  f.test_particles = c.test_particles;
  f.seed = seed;
  return f;
}

HmcConfig hmc_config(const ExperimentConfig& c, std::uint64_t seed) {
  return {c.hmc_step_size, c.hmc_leapfrog, c.hmc_burn_in, c.resolved_hmc_samples(), seed};
}

// ---------------------------------------------------------------------------

ModeCoverage emit_mode_coverage(const Points& samples, const GaussianMixture& g) {
  ModeCoverage cov;
  cov.counts.assign(g.components(), 0);
  for (std::size_t i = 0; i < samples.rows(); ++i) {
    auto x = samples.row(i);
    std::size_t best = 0;
    double best_r2 = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < g.components(); ++c) {
      auto m = g.means().row(c);
      double r2 = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) r2 += (x[j] - m[j]) * (x[j] - m[j]);
      if (r2 < best_r2) {
        best_r2 = r2;
        best = c;
      }
    }
    const double radius = 3.0 * g.sigmas()[best];
    if (best_r2 <= radius * radius)
      ++cov.counts[best];
    else
      ++cov.unassigned;
  }
  for (auto c : cov.counts)
    if (c > 0) ++cov.covered;
  return cov;
}

Polarity emit_field_polarity(const Points& samples) {
  Polarity p;
  if (samples.rows() == 0) return p;
  std::size_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < samples.rows(); ++i) {
    double s = 0.0;
    for (double v : samples.row(i)) s += v;
    if (s > 0.0) ++pos;
    if (s < 0.0) ++neg;
  }
  p.positive = static_cast<double>(pos) / static_cast<double>(samples.rows());
  p.negative = static_cast<double>(neg) / static_cast<double>(samples.rows());
  return p;
}

namespace {

std::vector<std::size_t> nearest_counts(const Points& samples, const GaussianMixture& g) {
  std::vector<std::size_t> counts(g.components(), 0);
  for (std::size_t i = 0; i < samples.rows(); ++i) {
    std::size_t best = 0;
    double best_r2 = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < g.components(); ++c) {
      double r2 = 0.0;
      for (std::size_t j = 0; j < samples.cols(); ++j) {
        const double diff = samples(i, j) - g.means()(c, j);
        r2 += diff * diff;
      }
      if (r2 < best_r2) {
        best_r2 = r2;
        best = c;
      }
    }
    ++counts[best];
  }
  return counts;
}

bool all_finite(const Points& x) {
  for (double v : x.data())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

MetricReport run_method(const ExperimentConfig& cfg, const std::string& method,
                        std::uint64_t seed, const fs::path& dir) {
  const auto target = make_target(cfg.target);
  const auto start = std::chrono::steady_clock::now();
  MetricReport r;
  r.method = method;
  r.seed = seed;
  r.extra["scale"] = cfg.scale;
  if (!cfg.deviation_note.empty()) r.extra["preset_deviation"] = cfg.deviation_note;

  Points samples;
  bool collapsed = false;
  if (method == "almc_ode") {
    const auto res = run_almc(almc_config(cfg, seed), *target);
    write_ensemble_csv(dir / "almc_particles.csv", res.ensemble, seed);
    write_text(dir / "almc_diagnostics.jsonl", diagnostics_jsonl(res.diagnostics));
    r.extra["almc_resample_count"] = res.resample_count;
    r.extra["almc_final_ess"] = res.diagnostics.back().ess;
    r.extra["almc_log_z_estimate"] = res.log_z_estimate;
    samples = run_flow(flow_config(cfg, seed), res.ensemble);
  } else if (method == "mc_ode") {
    const auto res = run_mc_ode(flow_config(cfg, seed), *target, cfg.resolved_proposals());
    std::ostringstream os;
    for (const auto& s : res.diagnostics) {
      nlohmann::ordered_json j{{"step", s.step}, {"t", s.t}, {"proposal_ess", s.proposal_ess}};
      os << j.dump() << '\n';
    }
    write_text(dir / "mc_ode_diagnostics.jsonl", os.str());
    collapsed = res.min_proposal_ess < kProposalEssFloor;
    r.extra["min_proposal_ess"] = res.min_proposal_ess;
    r.extra["proposal_weights_degenerate"] = collapsed;
    samples = res.samples;
  } else if (method == "hmc") {
    const auto res = hmc_chain(hmc_config(cfg, seed), *target,
                               hmc_initial_point(target->dim(), seed));
    r.acceptance_rate = res.acceptance_rate;
    samples = res.samples;
  } else {
    throw ConfigError("unknown method '" + method + "'");
  }
  write_samples_csv(dir / (method + "_samples.csv"), samples, seed);
  if (!all_finite(samples)) throw NumericalError("non-finite output sample", 0, 0);

  if (const auto* g = dynamic_cast<const GaussianMixture*>(target.get())) {
    const Points truth = g->sample_exact(cfg.resolved_reference(), seed);
    const auto mom = l2_moment_errors(samples, truth);
    r.mean_err = mom.mean_err;
    r.second_moment_err = mom.second_moment_err;
    r.energy_distance = energy_distance(samples, truth);
    r.mmd_rbf = mmd_rbf(samples, truth);
    r.sliced_wasserstein = sliced_wasserstein(samples, truth, cfg.projections, seed);
    const auto cov = emit_mode_coverage(samples, *g);
    r.extra["modes_covered"] = cov.covered;
    r.extra["mode_counts"] = cov.counts;
    r.extra["unassigned"] = cov.unassigned;
    r.extra["nearest_mode_counts"] = nearest_counts(samples, *g);
  } else {
    const auto pol = emit_field_polarity(samples);
    r.extra["polarity_positive"] = pol.positive;
    r.extra["polarity_negative"] = pol.negative;
  }

  if (cfg.ksd) {
    if (collapsed) {
      r.ksd_undefined = true;
      r.ksd_note = "proposal weights collapsed below 5 effective samples";
    } else {
      try {
        const auto k = ksd_imq(samples, *target);
        r.ksd_u = k.u_stat;
        r.ksd_v = k.v_stat;
        r.extra["ksd_u_se"] = k.u_se;
      } catch (const NumericalError& e) {
        r.ksd_undefined = true;
        r.ksd_note = e.what();
      }
    }
  }

  r.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_text(dir / (method + "_metrics.json"), to_json(r).dump(2) + "\n");
  nlohmann::ordered_json timing{{"runtime_seconds", r.runtime_seconds}};
  write_text(dir / (method + "_timing.json"), timing.dump() + "\n");
  return r;
}

namespace {

bool report_less(const MetricReport& a, const MetricReport& b) {
  return a.method != b.method ? a.method < b.method : a.seed < b.seed;
}

}  // namespace

ExperimentOutcome run_experiment(const ExperimentConfig& cfg, const fs::path& out,
                                 std::size_t jobs) {
  cfg.validate();
  fs::create_directories(out);
  write_text(out / "config.resolved.cfg", to_config_text(cfg));

  ExperimentOutcome outcome;
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  const int threads = thread_count();
  auto worker = [&] {
    set_thread_count(threads);
    for (std::size_t i = next++; i < cfg.seeds.size(); i = next++) {
      const std::uint64_t seed = cfg.seeds[i];
      const fs::path dir = out / ("seed_" + std::to_string(seed));
      fs::create_directories(dir);
      for (const auto& method : cfg.methods) {
        try {
          auto r = run_method(cfg, method, seed, dir);
          std::lock_guard lock(mu);
          outcome.reports.push_back(std::move(r));
        } catch (const std::exception& e) {
          std::lock_guard lock(mu);
          outcome.failures.push_back({seed, method, e.what()});
        }
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(jobs, cfg.seeds.size()));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::sort(outcome.reports.begin(), outcome.reports.end(), report_less);
  std::sort(outcome.failures.begin(), outcome.failures.end(), [](const auto& a, const auto& b) {
    return a.method != b.method ? a.method < b.method : a.seed < b.seed;
  });
  nlohmann::ordered_json failures = nlohmann::ordered_json::array();
  for (const auto& f : outcome.failures)
    failures.push_back({{"seed", f.seed}, {"method", f.method}, {"error", f.error}});
  write_text(out / "failures.json", failures.dump(2) + "\n");

  const auto table = summarize(outcome.reports);
  write_text(out / "summary.csv", table.csv);
  write_text(out / "summary.txt", table.text);
  std::ostringstream timing;
  timing << "method,seed,runtime_seconds\n";
  for (const auto& r : outcome.reports)
    timing << r.method << ',' << r.seed << ',' << r.runtime_seconds << '\n';
  write_text(out / "timing.csv", timing.str());
  return outcome;
}

// ---------------------------------------------------------------------------
// Aggregation

namespace {

struct Column {
  const char* name;
  std::function<std::optional<double>(const MetricReport&)> get;
};

std::vector<Column> columns() {
  auto extra = [](const char* key) {
    return [key](const MetricReport& r) -> std::optional<double> {
      if (r.extra.contains(key) && r.extra[key].is_number()) return r.extra[key].get<double>();
      return std::nullopt;
    };
  };
  return {
      {"mean_err", [](const MetricReport& r) { return r.mean_err; }},
      {"second_moment_err", [](const MetricReport& r) { return r.second_moment_err; }},
      {"energy_distance", [](const MetricReport& r) { return r.energy_distance; }},
      {"mmd_rbf", [](const MetricReport& r) { return r.mmd_rbf; }},
      {"sliced_wasserstein", [](const MetricReport& r) { return r.sliced_wasserstein; }},
      {"ksd_u", [](const MetricReport& r) { return r.ksd_undefined ? std::nullopt : r.ksd_u; }},
      {"ksd_v", [](const MetricReport& r) { return r.ksd_undefined ? std::nullopt : r.ksd_v; }},
      {"acceptance_rate", [](const MetricReport& r) { return r.acceptance_rate; }},
      {"modes_covered", extra("modes_covered")},
      {"polarity_positive", extra("polarity_positive")},
  };
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

}  // namespace

SummaryTable summarize(const std::vector<MetricReport>& reports_in) {
  auto reports = reports_in;
  std::stable_sort(reports.begin(), reports.end(), report_less);
  std::vector<std::string> methods;
  for (const auto& r : reports)
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end())
      methods.push_back(r.method);

  const auto cols = columns();
  std::ostringstream csv;
  csv << "method,seeds";
  for (const auto& c : cols) csv << ',' << c.name << "_mean," << c.name << "_std";
  csv << '\n';

  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"method", "seeds"};
  for (const auto& c : cols) header.push_back(c.name);
  cells.push_back(header);

  for (const auto& m : methods) {
    std::vector<std::string> row{m};
    std::size_t seeds = 0;
    bool any_undefined = false;
    for (const auto& r : reports)
      if (r.method == m) {
        ++seeds;
        any_undefined = any_undefined || r.ksd_undefined;
      }
    row.push_back(std::to_string(seeds));
    csv << m << ',' << seeds;
    for (const auto& c : cols) {
      std::vector<double> vals;
      for (const auto& r : reports)
        if (r.method == m)
          if (auto v = c.get(r)) vals.push_back(*v);
      const bool ksd_col = std::string(c.name).rfind("ksd", 0) == 0;
      if (vals.empty()) {
        const std::string mark = ksd_col && any_undefined ? "undefined" : "";
        csv << ',' << (mark.empty() ? "" : "NaN") << ',' << (mark.empty() ? "" : "NaN");
        row.push_back(mark.empty() ? "-" : mark);
        continue;
      }
      double mean = 0.0;
      for (double v : vals) mean += v;
      mean /= static_cast<double>(vals.size());
      double var = 0.0;
      for (double v : vals) var += (v - mean) * (v - mean);
      const double sd = vals.size() > 1 ? std::sqrt(var / static_cast<double>(vals.size() - 1)) : 0.0;
      csv << ',' << fmt(mean) << ',' << fmt(sd);
      row.push_back(fmt(mean) + " +- " + fmt(sd));
    }
    csv << '\n';
    cells.push_back(row);
  }

  // drop all-empty columns from the text view
  std::vector<bool> keep(header.size(), true);
  for (std::size_t c = 2; c < header.size(); ++c) {
    keep[c] = false;
    for (std::size_t r = 1; r < cells.size(); ++r)
      if (cells[r][c] != "-") keep[c] = true;
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::ostringstream text;
  for (const auto& row : cells) {
    bool first = true;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (!keep[c]) continue;
      if (!first) text << "  ";
      text << std::left << std::setw(static_cast<int>(width[c])) << row[c];
      first = false;
    }
    text << '\n';
  }
  return {csv.str(), text.str()};
}

std::vector<MetricReport> load_reports(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("not a directory: " + dir.string());
  std::vector<MetricReport> out;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    const std::string suffix = "_metrics.json";
    if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0)
      continue;
    MetricReport r = metric_report_from_json(nlohmann::json::parse(read_text(entry.path())));
    const fs::path timing =
        entry.path().parent_path() / (name.substr(0, name.size() - suffix.size()) + "_timing.json");
    if (fs::exists(timing))
      r.runtime_seconds = nlohmann::json::parse(read_text(timing)).value("runtime_seconds", 0.0);
    out.push_back(std::move(r));
  }
  std::sort(out.begin(), out.end(), report_less);
  return out;
}

}  // namespace almcflow
