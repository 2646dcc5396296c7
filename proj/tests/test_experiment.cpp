#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>

#include "doctest.h"

#include "almcflow/experiment.hpp"
#include "almcflow/io.hpp"

using namespace almcflow;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("almcflow_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Every output file except wall-clock timings, keyed by relative path.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string name = e.path().filename().string();
    if (name == "timing.csv" || name.find("_timing.json") != std::string::npos) continue;
    files[fs::relative(e.path(), dir).string()] = read_text(e.path());
  }
  return files;
}

ExperimentConfig tiny_gmm2d() {
  auto c = preset_config("gmm2d");
  c.n = 150;
  c.test_particles = 120;
  c.steps = 40;
  c.weight_stride = 10;
  c.flow_steps = 20;
  c.hmc_burn_in = 50;
  c.projections = 16;
  c.seeds = {1, 2, 3};
  return c;
}

}  // namespace

TEST_CASE("config grammar") {
  const auto f = ConfigFile::parse(R"(
top = 1  # comment
[experiment]
name = "with # hash"
seeds = [1, 2,
         3]   # spans lines
flag = true
[target]
means = [[0.0, 1.5], [-2, 3e-1]]
kind = kou20
neg = -4
)");
  CHECK(f.get_size("top") == 1);
  CHECK(f.get_string("experiment.name") == "with # hash");
  CHECK(f.get_u64s("experiment.seeds") == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(f.get_bool("experiment.flag"));
  CHECK(f.get_matrix("target.means") == std::vector<std::vector<double>>{{0.0, 1.5}, {-2.0, 0.3}});
  CHECK(f.get_string("target.kind") == "kou20");
  CHECK(f.get_double("target.neg") == -4.0);
  CHECK_THROWS_AS(f.get_size("target.neg"), ConfigError);
  CHECK_THROWS_AS(f.get_string("missing"), ConfigError);
  CHECK_THROWS_AS(f.get_bool("top"), ConfigError);

  CHECK_THROWS_AS(ConfigFile::parse("key value"), ConfigError);
  CHECK_THROWS_AS(ConfigFile::parse("k = [1, 2"), ConfigError);
  CHECK_THROWS_AS(ConfigFile::parse("k = [1 2]"), ConfigError);
  CHECK_THROWS_AS(ConfigFile::parse("[section"), ConfigError);
  CHECK_THROWS_AS(ConfigFile::load("/nonexistent/almcflow.cfg"), ConfigError);
}

TEST_CASE("presets") {
  CHECK(preset_names() == std::vector<std::string>{"gmm2d", "gmm100d", "allen_cahn"});
  const auto g = preset_config("gmm2d");
  CHECK(g.target.kind == "kou20");
  CHECK(g.steps == 1000);
  CHECK(g.hmc_step_size == 0.05);
  CHECK(g.hmc_leapfrog == 10);
  CHECK(!g.deviation_note.empty());
  const auto a = preset_config("allen_cahn");
  CHECK(a.target.d == 64);
  CHECK(a.steps == 10000);
  CHECK(a.lambda.shape == LambdaShape::ExpSaturating);
  CHECK(a.lambda.rate == 50.0);
  CHECK(a.hmc_leapfrog == 30);
  CHECK(a.hmc_burn_in == 2000);
  CHECK(a.resolved_proposals() == 10000);
  CHECK(a.ksd);
  CHECK_THROWS_AS(preset_config("nope"), ConfigError);
  for (const auto& name : preset_names()) CHECK_NOTHROW(preset_config(name).validate());
}

TEST_CASE("config files override presets and reject unknown keys") {
  const auto c = config_from_file(ConfigFile::parse(R"(
[experiment]
preset = allen_cahn
seeds = [7]
methods = [almc_ode]
[target]
d = 16
[almc]
lambda = linear
[flow]
epsilon = 1e-3
)"));
  CHECK(c.target.d == 16);
  CHECK(c.seeds == std::vector<std::uint64_t>{7});
  CHECK(c.lambda.shape == LambdaShape::Linear);
  CHECK(c.epsilon == 1e-3);
  CHECK(c.hmc_leapfrog == 30);  // from the preset

  CHECK_THROWS_AS(config_from_file(ConfigFile::parse("[almc]\nnn = 3\n")), ConfigError);
  CHECK_THROWS_AS(config_from_file(ConfigFile::parse("[experiment]\nmethods = [nuts]\n")), ConfigError);
  CHECK_THROWS_AS(config_from_file(ConfigFile::parse("[target]\nkind = banana\n")), ConfigError);
  CHECK_THROWS_AS(config_from_file(ConfigFile::parse("[almc]\nweight_mode = ais\n")), ConfigError);
  CHECK_THROWS_AS(config_from_file(ConfigFile::parse("[almc]\ness_fraction = 2.0\n")), ConfigError);
}

TEST_CASE("resolved config round-trips") {
  for (const auto& name : preset_names()) {
    const auto c = apply_scale(preset_config(name), 0.05);
    const auto text = to_config_text(c);
    CHECK(to_config_text(config_from_file(ConfigFile::parse(text))) == text);
  }
  ExperimentConfig m;
  m.target.kind = "mixture";
  m.target.means = {{0.0, 1.0}, {2.0, -1.0}};
  m.target.sigmas = {0.5, 1.0};
  m.target.weights = {0.25, 0.75};
  m.seeds = {3, 9};
  const auto text = to_config_text(m);
  const auto back = config_from_file(ConfigFile::parse(text));
  CHECK(back.target.means == m.target.means);
  CHECK(back.target.weights == m.target.weights);
  CHECK(to_config_text(back) == text);
}

TEST_CASE("scaling") {
  const auto c = apply_scale(preset_config("gmm2d"), 0.2);
  CHECK(c.n == 2000);
  CHECK(c.test_particles == 2000);
  CHECK(c.steps == 200);
  CHECK(c.scale == doctest::Approx(0.2));
  CHECK(apply_scale(preset_config("gmm2d"), 1e-9).n == 1);
  CHECK_THROWS_AS(apply_scale(preset_config("gmm2d"), 0.0), ConfigError);
  CHECK(apply_scale(apply_scale(preset_config("gmm2d"), 0.5), 0.5).scale == doctest::Approx(0.25));
}

TEST_CASE("mode coverage and polarity") {
  const auto kou = GaussianMixture::kou20();
  Points s(4, 2);
  // on mode 0, just inside 3 sigma of mode 0, far from every mode, on mode 1
  s(0, 0) = kou.means()(0, 0);
  s(0, 1) = kou.means()(0, 1);
  s(1, 0) = kou.means()(0, 0) + 0.29;
  s(1, 1) = kou.means()(0, 1);
  s(2, 0) = -20.0;
  s(2, 1) = -20.0;
  s(3, 0) = kou.means()(1, 0);
  s(3, 1) = kou.means()(1, 1);
  const auto cov = emit_mode_coverage(s, kou);
  CHECK(cov.counts[0] == 2);
  CHECK(cov.counts[1] == 1);
  CHECK(cov.unassigned == 1);
  CHECK(cov.covered == 2);
  CHECK(emit_mode_coverage(kou.sample_exact(20000, 1), kou).covered == 20);

  Points f(5, 3, 0.0);
  f(0, 0) = 1.0;
  f(1, 1) = 2.0;
  f(2, 2) = -1.0;
  f(3, 0) = 1.0;
  f(3, 1) = -1.0;  // zero mean: neither sign
  f(4, 2) = 0.5;
  const auto p = emit_field_polarity(f);
  CHECK(p.positive == doctest::Approx(0.6));
  CHECK(p.negative == doctest::Approx(0.2));
}

TEST_CASE("summary table") {
  std::vector<MetricReport> reports(3);
  reports[0].method = "hmc";
  reports[0].seed = 2;
  reports[0].energy_distance = 3.0;
  reports[0].acceptance_rate = 0.9;
  reports[1].method = "hmc";
  reports[1].seed = 1;
  reports[1].energy_distance = 5.0;
  reports[1].acceptance_rate = 1.0;
  reports[2].method = "mc_ode";
  reports[2].seed = 1;
  reports[2].ksd_undefined = true;
  const auto t = summarize(reports);
  CHECK(t.csv.find("hmc,2,") != std::string::npos);
  CHECK(t.csv.find(",4,1.414,") != std::string::npos);  // mean 4, sample sd sqrt 2
  CHECK(t.text.find("4 +- 1.414") != std::string::npos);
  CHECK(t.text.find("undefined") != std::string::npos);
  // input order does not matter
  std::swap(reports[0], reports[2]);
  CHECK(summarize(reports).csv == t.csv);
}

TEST_CASE("ensemble CSV round trip") {
  const auto dir = scratch("csv");
  Points p(3, 2);
  p(0, 0) = 0.1;
  p(0, 1) = -1e-300;
  p(1, 0) = 1.0 / 3.0;
  p(2, 1) = 12345.678901234567;
  const Ensemble e(p, {0.0, -1.5, -std::numeric_limits<double>::infinity()}, 17);
  write_ensemble_csv(dir / "e.csv", e, 5);
  const auto back = read_ensemble_csv(dir / "e.csv");
  CHECK(back.positions == e.positions);
  CHECK(back.log_weights == e.log_weights);
  CHECK(back.step_index == 17);
  const auto side = nlohmann::json::parse(read_text(dir / "e.csv.json"));
  CHECK(side["n"] == 3);
  CHECK(side["d"] == 2);
  CHECK(side["seed"] == 5);
  CHECK(read_text(dir / "e.csv").rfind("particle,coord_0,coord_1,log_weight\n", 0) == 0);
}

TEST_CASE("experiment outputs are byte-identical across threads and jobs") {
  const auto cfg = tiny_gmm2d();
  const int before = thread_count();
  set_thread_count(1);
  const auto a = scratch("det_a");
  const auto ra = run_experiment(cfg, a, 1);
  set_thread_count(3);
  const auto b = scratch("det_b");
  const auto rb = run_experiment(cfg, b, 2);
  set_thread_count(before);
  CHECK(ra.failures.empty());
  CHECK(rb.failures.empty());
  CHECK(ra.reports.size() == 9);
  const auto sa = snapshot(a), sb = snapshot(b);
  CHECK(sa.size() == sb.size());
  CHECK(sa.count("seed_1/almc_ode_samples.csv") == 1);
  CHECK(sa.count("seed_2/almc_particles.csv") == 1);
  CHECK(sa.count("seed_3/mc_ode_diagnostics.jsonl") == 1);
  CHECK(sa.count("config.resolved.cfg") == 1);
  for (const auto& [k, v] : sa) {
    INFO(k);
    REQUIRE(sb.count(k) == 1);
    CHECK(sb.at(k) == v);
  }
  CHECK(fs::exists(a / "timing.csv"));
  CHECK(fs::exists(a / "seed_1" / "hmc_timing.json"));

  // load_reports sees the same reports as the run produced
  const auto loaded = load_reports(a);
  REQUIRE(loaded.size() == ra.reports.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].method == ra.reports[i].method);
    CHECK(loaded[i].seed == ra.reports[i].seed);
    CHECK(loaded[i].energy_distance == ra.reports[i].energy_distance);
  }
  CHECK(summarize(loaded).csv == read_text(a / "summary.csv"));
}

TEST_CASE("collapsed MC-ODE weights give an undefined KSD marker") {
  auto cfg = preset_config("allen_cahn");
  cfg.methods = {"mc_ode"};
  cfg.seeds = {1};
  cfg.test_particles = 40;
  cfg.proposals = 2000;
  cfg.flow_steps = 10;
  const auto dir = scratch("mc_ode_ac");
  const auto out = run_experiment(cfg, dir, 1);
  CHECK(out.failures.empty());
  REQUIRE(out.reports.size() == 1);
  CHECK(out.reports[0].ksd_undefined);
  const auto j = nlohmann::json::parse(read_text(dir / "seed_1" / "mc_ode_metrics.json"));
  CHECK(j["ksd_status"] == "undefined");
  CHECK(j["extra"]["proposal_weights_degenerate"] == true);
  CHECK(j["extra"]["min_proposal_ess"].get<double>() < 5.0);
  CHECK(read_text(dir / "summary.txt").find("undefined") != std::string::npos);
}

#ifdef ALMCFLOW_CLI
TEST_CASE("command-line exit codes") {
  const std::string cli = ALMCFLOW_CLI;
  const auto dir = scratch("cli");
  auto run = [&](const std::string& args) {
    const int status = std::system((cli + " " + args + " > " + (dir / "log.txt").string() + " 2>&1").c_str());
    return WEXITSTATUS(status);
  };
  CHECK(run("run /nonexistent.cfg") == 1);
  CHECK(run("") == 1);
  {
    std::ofstream bad(dir / "bad.cfg");
    bad << "[almc]\nunknown_key = 1\n";
  }
  CHECK(run("run " + (dir / "bad.cfg").string()) == 1);
  {
    std::ofstream ok(dir / "ok.cfg");
    ok << "[experiment]\npreset = gmm2d\nseeds = [1]\nmethods = [hmc]\n[almc]\nn = 50\n"
          "[flow]\ntest_particles = 50\n[hmc]\nburn_in = 10\n[metrics]\nprojections = 4\n";
  }
  CHECK(run("run " + (dir / "ok.cfg").string() + " --out " + (dir / "ok").string()) == 0);
  CHECK(fs::exists(dir / "ok" / "summary.csv"));
  CHECK(run("table " + (dir / "ok").string()) == 0);
  CHECK(run("table " + (dir / "missing").string()) == 1);
  {
    // a non-finite target makes every method fail for this seed
    std::ofstream fail(dir / "fail.cfg");
    fail << "[experiment]\nseeds = [1]\nmethods = [almc_ode]\n[target]\nkind = allen_cahn\nd = 8\n"
            "[almc]\nn = 20\nsteps = 20\ndelta_start = 10.0\ndelta_end = 10.0\n"
            "[flow]\ntest_particles = 10\n";
  }
  CHECK(run("run " + (dir / "fail.cfg").string() + " --out " + (dir / "fail").string()) == 2);
  CHECK(read_text(dir / "fail" / "failures.json").find("almc_ode") != std::string::npos);
}
#endif
