// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit when any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "support/random_models.hpp"
#include "telscope/anomaly.hpp"
#include "telscope/attribution.hpp"
#include "telscope/cli.hpp"
#include "telscope/gbdt.hpp"
#include "telscope/pipeline.hpp"
#include "telscope/synth.hpp"

using namespace telscope;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int precision = 3) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

Verdict split_identity() {
  const std::size_t train = split_point(26064, 0.66);
  const std::size_t test = 26064 - train;
  return {train == 17202 && test == 8862, "train=" + std::to_string(train) + " test=" + std::to_string(test)};
}

Verdict shap_local_accuracy() {
  const auto t0 = std::chrono::steady_clock::now();
  testing::TestRng rng(2024);
  double worst = 0.0;
  for (int e = 0; e < 100; ++e) {
    testing::RandomTreeOptions opt;
    opt.features = rng.integer(1, 20);
    opt.max_depth = rng.integer(1, 6);
    const auto model = testing::random_ensemble(rng, rng.integer(1, 10), opt);
    const double base = attribution_base_value(model);
    for (int r = 0; r < 1000; ++r) {
      const auto x = testing::random_row(rng, opt.features);
      const auto phi = treeshap_row(model, x);
      double total = base;
      for (double p : phi) total += p;
      worst = std::max(worst, std::abs(total - model.predict_row(x)));
    }
  }
  const double elapsed = seconds_since(t0);
  return {worst <= 1e-9 && elapsed < 30.0, "max error " + fmt(worst) + ", " + fmt(elapsed) + " s"};
}

Verdict shap_oracle_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  testing::TestRng rng(77);
  double worst = 0.0;
  for (int e = 0; e < 100; ++e) {
    testing::RandomTreeOptions opt;
    opt.features = rng.integer(1, 12);
    opt.max_depth = rng.integer(1, 4);
    const auto model = testing::random_ensemble(rng, rng.integer(1, 10), opt);
    for (int r = 0; r < 10; ++r) {
      const auto x = testing::random_row(rng, opt.features);
      const auto fast = treeshap_row(model, x);
      const auto slow = shapley_oracle(model, x);
      for (std::size_t f = 0; f < fast.size(); ++f) worst = std::max(worst, std::abs(fast[f] - slow[f]));
    }
  }
  const double elapsed = seconds_since(t0);
  return {worst <= 1e-9 && elapsed < 120.0, "max difference " + fmt(worst) + ", " + fmt(elapsed) + " s"};
}

FeatureMatrix regression_data(std::uint64_t seed, std::size_t n, int features) {
  testing::TestRng rng(seed);
  FeatureMatrix m;
  for (int f = 0; f < features; ++f) m.column_names.push_back("x" + std::to_string(f));
  std::vector<double> y;
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = testing::random_row(rng, features, 0.05);
    m.values.insert(m.values.end(), x.begin(), x.end());
    m.row_timestamps.push_back(Timestamp{static_cast<std::int64_t>(i)});
    const double a = std::isnan(x[0]) ? 0.0 : x[0];
    const double b = std::isnan(x[1]) ? 0.0 : x[1];
    y.push_back(std::sin(4 * a) + a * b + rng.uniform(-0.2, 0.2));
  }
  m.target = std::move(y);
  return m;
}

Verdict gbdt_sanity() {
  std::string detail;
  bool ok = true;

  // (a)
  const auto data = regression_data(5, 800, 6);
  TrainConfig cfg;
  cfg.rounds = 50;
  cfg.gamma = 0.0;
  cfg.min_child_weight = 0.0;
  cfg.eta = 0.3;
  const auto model = train(data, cfg);
  double prev = INFINITY;
  bool monotone = true;
  for (std::size_t t = 0; t <= 50; ++t) {
    const auto p = model.prefix(t).predict(data);
    double s = 0;
    for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - (*data.target)[i]) * (p[i] - (*data.target)[i]);
    const double rmse = std::sqrt(s / static_cast<double>(p.size()));
    monotone = monotone && rmse <= prev;
    prev = rmse;
  }
  ok = ok && monotone;
  detail += std::string("(a) rmse ") + (monotone ? "non-increasing" : "increased") + ", final " + fmt(prev);

  // (b)
  FeatureMatrix step;
  step.column_names = {"x"};
  std::vector<double> y;
  testing::TestRng rng(8);
  for (int i = 0; i < 200; ++i) {
    const double x = rng.uniform(-1, 1);
    step.values.push_back(x);
    step.row_timestamps.push_back(Timestamp{i});
    y.push_back(x < 0.3 ? -1.25 : 2.5);
  }
  step.target = y;
  TrainConfig stump;
  stump.rounds = 1;
  stump.max_depth = 1;
  stump.eta = 1.0;
  stump.lambda = 0.0;
  const auto step_model = train(step, stump);
  const auto fitted = step_model.predict(step);
  double step_err = 0;
  for (std::size_t i = 0; i < y.size(); ++i) step_err = std::max(step_err, std::abs(fitted[i] - y[i]));
  ok = ok && step_err <= 1e-12;
  detail += "; (b) max error " + fmt(step_err);

  // (c)
  std::stringstream buf;
  save_model(buf, model);
  const auto loaded = load_model(buf);
  const auto a = model.predict(data);
  const auto b = loaded.predict(data);
  const bool exact = std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
  ok = ok && exact;
  detail += std::string("; (c) round trip ") + (exact ? "bit-exact" : "differs");
  return {ok, detail};
}

Verdict scorer_sanity() {
  std::string detail;
  // (a) period-5 pattern, 5 distinct windows.
  std::vector<double> periodic;
  for (int i = 0; i < 200; ++i) periodic.push_back(std::vector<double>{0.3, -1.2, 0.7, 0.0, 2.1}[static_cast<std::size_t>(i % 5)]);
  const TimeSeries ps("r", Timestamp{0}, 600, periodic);
  const auto pmodel = fit_scorer(ps, 5, 16, 0);
  double max_score = 0;
  const auto pscores = score(pmodel, ps);
  for (double s : pscores.values()) max_score = std::max(max_score, s);
  const bool zero = max_score == 0.0;
  detail += "(a) max score " + fmt(max_score);

  // (b) fit on clean N(0,1) residuals, then score a series with a +5 sigma burst.
  std::mt19937_64 engine(99);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> clean(5000), test(3000);
  for (auto& v : clean) v = noise(engine);
  for (auto& v : test) v = noise(engine);
  const std::size_t burst_begin = 1500, burst_len = 32;
  for (std::size_t i = burst_begin; i < burst_begin + burst_len; ++i) test[i] += 5.0;
  const auto model = fit_scorer(TimeSeries("r", Timestamp{0}, 600, clean), 8, 64, 0);
  const auto scores = score(model, TimeSeries("r", Timestamp{0}, 600, test));
  const std::size_t w = 64;
  std::vector<double> normal_scores;
  double burst_min = INFINITY;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    // Score j covers samples [j, j + w).
    const bool contains = j <= burst_begin && burst_begin + burst_len <= j + w;
    const bool disjoint = j + w <= burst_begin || j >= burst_begin + burst_len;
    if (contains) burst_min = std::min(burst_min, scores[j]);
    if (disjoint) normal_scores.push_back(scores[j]);
  }
  std::sort(normal_scores.begin(), normal_scores.end());
  const double p99 = normal_scores[static_cast<std::size_t>(0.99 * static_cast<double>(normal_scores.size() - 1))];
  const bool above = burst_min > p99;
  detail += "; (b) min burst score " + fmt(burst_min) + " vs p99 " + fmt(p99);
  return {zero && above, detail};
}

Verdict end_to_end_recovery() {
  int overlap_hits = 0, driver_hits = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SynthConfig sc = SynthConfig::desk();
    sc.seed = seed;
    const auto synth = generate(sc);
    const InjectedAnomaly& inj = synth.injections.front();
    PipelineConfig pc;
    pc.span_days = 1.0;
    pc.top_k = 3;
    const auto report = run_parameter(synth.frame, target_name(inj.target), pc);
    const auto& top = report.spans.front();
    const std::int64_t lo = std::max(top.span.start.seconds, inj.start.seconds);
    const std::int64_t hi = std::min(top.span.end.seconds, inj.end.seconds);
    const double overlap = static_cast<double>(std::max<std::int64_t>(0, hi - lo)) / static_cast<double>(inj.end - inj.start);
    const std::string prefix = covariate_name(inj.driver) + "@";
    bool driver = false;
    for (std::size_t i = 0; i < std::min<std::size_t>(3, top.importance.size()); ++i) {
      driver = driver || top.importance[i].feature.rfind(prefix, 0) == 0;
    }
    overlap_hits += overlap >= 0.5;
    driver_hits += driver;
    detail += (seed > 1 ? " " : "") + std::string("seed") + std::to_string(seed) + "=" + fmt(overlap, 2) + (driver ? "/top3" : "/miss");
  }
  return {overlap_hits >= 4 && driver_hits >= 4,
          "overlap>=50% in " + std::to_string(overlap_hits) + "/5, driver in top-3 in " + std::to_string(driver_hits) +
              "/5 (" + detail + ")"};
}

Verdict runtime_budget() {
  SynthConfig sc;
  sc.duration_days = 181.0;  // 26,064 samples at 600 s
  sc.step_seconds = 600;
  sc.n_targets = 1;
  sc.n_covariates = 35;
  sc.seed = 3;
  sc.injections = {InjectedAnomaly{0, 5, 1800, sc.start + 150 * 86400, sc.start + 160 * 86400, 6.0}};
  const auto synth = generate(sc);
  const auto t0 = std::chrono::steady_clock::now();
  const auto report = run_parameter(synth.frame, "T00", PipelineConfig{});
  const double elapsed = seconds_since(t0);
  const bool shape = synth.frame.length() == 26064 && report.model2_rows.cols() == 315;
  return {shape && elapsed < 120.0, std::to_string(synth.frame.length()) + " samples, " +
                                        std::to_string(report.model2_rows.cols()) + " Model 2 features, " + fmt(elapsed) + " s"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "telscope");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
}

Verdict deterministic_reports() {
  const fs::path dir = fs::current_path() / "acceptance_work";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "synth.json") << R"({"preset": "desk", "seed": 2})";
  std::ofstream(dir / "pipeline.json") << R"({"span_days": 1, "top_k": 3})";
  if (cli({"synth", "--config", (dir / "synth.json").string(), "--out", (dir / "data").string()}) != 0) {
    return {false, "synth failed"};
  }
  const auto run_into = [&](const std::string& name) {
    return cli({"run", "--data", (dir / "data" / "telemetry.csv").string(), "--roles", (dir / "data" / "roles.json").string(),
                "--config", (dir / "pipeline.json").string(), "--out", (dir / name).string(), "--params", "T00,T03"});
  };
  if (run_into("first") != 0 || run_into("second") != 0) return {false, "run failed"};
  std::size_t files = 0, differing = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "first")) {
    if (!e.is_regular_file()) continue;
    ++files;
    const auto twin = dir / "second" / fs::relative(e.path(), dir / "first");
    if (!fs::exists(twin) || slurp(e.path()) != slurp(twin)) ++differing;
  }
  std::size_t second_files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "second")) second_files += e.is_regular_file();
  return {files > 0 && differing == 0 && files == second_files,
          std::to_string(files) + " artifacts compared, " + std::to_string(differing) + " differ"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"1 split-size identity", split_identity},
      {"2 SHAP local accuracy", shap_local_accuracy},
      {"3 SHAP oracle equivalence", shap_oracle_equivalence},
      {"4 GBDT sanity", gbdt_sanity},
      {"5 scorer sanity", scorer_sanity},
      {"6 end-to-end recovery", end_to_end_recovery},
      {"7 runtime budget", runtime_budget},
      {"8 deterministic reports", deterministic_reports},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failed += !v.pass;
    std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
