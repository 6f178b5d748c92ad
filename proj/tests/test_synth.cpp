#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "telscope/errors.hpp"
#include "telscope/synth.hpp"

using namespace telscope;

namespace {

SynthConfig small_config() {
  SynthConfig c;
  c.duration_days = 2.0;
  c.step_seconds = 600;
  c.n_targets = 2;
  c.n_covariates = 3;
  c.seed = 42;
  return c;
}

}  // namespace

TEST_CASE("zero noise gives the pure waveform") {
  SynthConfig c = small_config();
  c.n_targets = 1;
  c.n_covariates = 1;
  c.targets = {TargetSpec{3.0, {PeriodicTerm{2.0, 86400.0, 0.5}}, 0.0, {}}};
  c.covariates = {CovariateSpec{-1.0, {PeriodicTerm{1.0, 43200.0, 0.0}}, 0.0, 0.0}};
  const auto r = generate(c);
  const auto& t = r.frame.channel("T00").values;
  const auto& x = r.frame.channel("C00").values;
  REQUIRE(t.size() == 288);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double s = static_cast<double>(i) * 600.0;
    CHECK(t[i] == doctest::Approx(3.0 + 2.0 * std::sin(2 * std::numbers::pi * s / 86400.0 + 0.5)).epsilon(1e-12));
    CHECK(x[i] == doctest::Approx(-1.0 + std::sin(2 * std::numbers::pi * s / 43200.0)).epsilon(1e-12));
  }
}

TEST_CASE("coupled target follows gain times the lagged covariate") {
  SynthConfig c = small_config();
  c.n_targets = 1;
  c.n_covariates = 2;
  c.covariates = {CovariateSpec{0.0, {}, 0.1, 0.05}, CovariateSpec{2.0, {PeriodicTerm{1.0, 86400.0, 0.0}}, 0.2, 0.0}};
  c.targets = {TargetSpec{1.0, {}, 0.0, {Coupling{1, 0.5, 3600}}}};
  const auto r = generate(c);
  const auto& t = r.frame.channel("T00").values;
  const auto& x = r.frame.channel("C01").values;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const std::size_t src = i >= 6 ? i - 6 : 0;
    CHECK(t[i] == doctest::Approx(1.0 + 0.5 * x[src]).epsilon(1e-12));
  }
}

TEST_CASE("same seed, same frame; different seed, different frame") {
  const auto a = generate(small_config());
  const auto b = generate(small_config());
  for (const auto& name : a.frame.names(Role::target)) CHECK(a.frame.channel(name).values == b.frame.channel(name).values);
  for (const auto& name : a.frame.names(Role::covariate)) CHECK(a.frame.channel(name).values == b.frame.channel(name).values);
  SynthConfig other = small_config();
  other.seed = 43;
  CHECK(generate(other).frame.channel("T00").values != a.frame.channel("T00").values);
}

TEST_CASE("injection only moves the driver inside its window and the target after the lag") {
  SynthConfig base = small_config();
  SynthConfig injected = base;
  InjectedAnomaly inj;
  inj.target = 1;
  inj.driver = 2;
  inj.lag_seconds = 1800;
  inj.start = base.start + 40 * 600;
  inj.end = base.start + 60 * 600;
  inj.magnitude = 4.0;
  injected.injections = {inj};
  const auto a = generate(base);
  const auto b = generate(injected);
  const auto& da = a.frame.channel("C02").values;
  const auto& db = b.frame.channel("C02").values;
  const auto& ta = a.frame.channel("T01").values;
  const auto& tb = b.frame.channel("T01").values;
  for (std::size_t i = 0; i < da.size(); ++i) {
    const bool inside = i >= 40 && i < 60;
    CHECK(db[i] - da[i] == doctest::Approx(inside ? 4.0 : 0.0));
    const bool lagged = i >= 43 && i < 63;
    CHECK(tb[i] - ta[i] == doctest::Approx(lagged ? 4.0 : 0.0));
  }
  CHECK(a.frame.channel("T00").values == b.frame.channel("T00").values);
  CHECK(a.frame.channel("C00").values == b.frame.channel("C00").values);
}

TEST_CASE("desk preset") {
  const auto c = SynthConfig::desk();
  CHECK(c.length() == 2016);
  const auto r = generate(c);
  CHECK(r.frame.length() == 2016);
  CHECK(r.frame.names(Role::target).size() == 11);
  CHECK(r.frame.names(Role::covariate).size() == 35);
  CHECK(r.frame.names(Role::target).front() == "T00");
  CHECK(r.frame.names(Role::covariate).back() == "C34");
  CHECK(format_iso8601(r.frame.grid().start) == "2024-02-15T00:00:00Z");
  REQUIRE(r.injections.size() == 1);
  CHECK(r.injections[0].driver == 5);
}

TEST_CASE("paper-scale preset sizes") {
  const auto c = SynthConfig::paper_scale();
  CHECK(c.length() == 1572480);
  CHECK(c.step_seconds == 10);
}

TEST_CASE("config parsing with preset and overrides") {
  std::istringstream in(R"({"preset": "desk", "seed": 7, "duration_days": 3,
    "injections": [{"target": 1, "driver": 2, "lag_seconds": 600, "start_day": 1, "end_day": 1.5, "magnitude": 2}]})");
  const auto c = parse_synth_config(in);
  CHECK(c.seed == 7);
  CHECK(c.length() == 432);
  REQUIRE(c.injections.size() == 1);
  CHECK(c.injections[0].start == c.start + 86400);
  CHECK(c.injections[0].end == c.start + 129600);
}

TEST_CASE("invalid configs are rejected") {
  SUBCASE("unknown preset") {
    std::istringstream in(R"({"preset": "huge"})");
    CHECK_THROWS_AS(parse_synth_config(in), ConfigError);
  }
  SUBCASE("not json") {
    std::istringstream in("{");
    CHECK_THROWS_AS(parse_synth_config(in), ConfigError);
  }
  SUBCASE("lag not a multiple of the step") {
    SynthConfig c = small_config();
    c.injections = {InjectedAnomaly{0, 0, 100, c.start, c.start + 600, 1.0}};
    CHECK_THROWS_AS(generate(c), ConfigError);
  }
  SUBCASE("injection outside the duration") {
    SynthConfig c = small_config();
    c.injections = {InjectedAnomaly{0, 0, 0, c.start + 10 * 86400, c.start + 11 * 86400, 1.0}};
    CHECK_THROWS_AS(generate(c), ConfigError);
  }
  SUBCASE("driver out of range") {
    SynthConfig c = small_config();
    c.injections = {InjectedAnomaly{0, 9, 0, c.start, c.start + 600, 1.0}};
    CHECK_THROWS_AS(generate(c), ConfigError);
  }
  SUBCASE("too short") {
    SynthConfig c = small_config();
    c.duration_days = 0.001;
    CHECK_THROWS_AS(generate(c), ConfigError);
  }
}

TEST_CASE("truth json lists injections") {
  const auto r = generate(SynthConfig::desk());
  std::ostringstream out;
  write_truth_json(out, r);
  CHECK(out.str().find("C05") != std::string::npos);
  CHECK(out.str().find("2024-02-26T00:00:00Z") != std::string::npos);
}
