#include <doctest.h>

#include <cstring>
#include <random>
#include <sstream>

#include "telscope/errors.hpp"
#include "telscope/features.hpp"

using namespace telscope;

namespace {

TelemetryFrame covariate_frame(std::size_t n, int n_cov, std::uint64_t seed, std::int64_t step = 600) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1, 1);
  std::vector<Channel> ch;
  std::vector<double> t(n);
  for (auto& v : t) v = dist(rng);
  ch.push_back(Channel{"T", Role::target, t});
  for (int c = 0; c < n_cov; ++c) {
    std::vector<double> v(n);
    for (auto& x : v) x = dist(rng);
    ch.push_back(Channel{"C" + std::to_string(c), Role::covariate, v});
  }
  return TelemetryFrame(Grid{Timestamp{1000000}, step, n}, std::move(ch));
}

}  // namespace

TEST_CASE("model 1 lags land on 2 and 6 samples at 10-minute sampling") {
  const auto offsets = self_lag_offsets(LagSpec::model1_default(), 600);
  CHECK(offsets == std::vector<std::int64_t>{2, 6});

  std::vector<double> v(20);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  const auto m = build_self_lag(TimeSeries("T", Timestamp{0}, 600, v), LagSpec::model1_default());
  CHECK(m.column_names == std::vector<std::string>{"T@-1200", "T@-3600"});
  CHECK(m.rows() == 14);
  CHECK(m.at(0, 0) == 4.0);
  CHECK(m.at(0, 1) == 0.0);
  CHECK((*m.target)[0] == 6.0);
  CHECK(m.row_timestamps[0].seconds == 6 * 600);
}

TEST_CASE("self lag shift by one") {
  const auto m = build_self_lag(TimeSeries("T", Timestamp{0}, 600, {0, 1, 2, 3, 4, 5, 6}), LagSpec({{600, 1}}));
  REQUIRE(m.rows() == 6);
  CHECK(m.at(0, 0) == 0.0);
  CHECK((*m.target)[0] == 1.0);
}

TEST_CASE("lag shorter than half a step clamps to one sample") {
  CHECK(self_lag_offsets(LagSpec({{200, 1}}), 600) == std::vector<std::int64_t>{1});
  CHECK(covariate_lag_offsets(LagSpec({{200, 1}}), 600) == std::vector<std::int64_t>{0});
}

TEST_CASE("self lag needs history") {
  CHECK_THROWS_AS(build_self_lag(TimeSeries("T", Timestamp{0}, 600, {1, 2, 3}), LagSpec::model1_default()),
                  InsufficientHistoryError);
}

TEST_CASE("lag spec validation") {
  CHECK_THROWS_AS(LagSpec({{600, 1}, {600, 1}}), ConfigError);
  CHECK_THROWS_AS(LagSpec({{600, 0}}), ConfigError);
  std::istringstream in(R"({"entries": [{"lag_seconds": 1800, "points": 3}, {"lag_seconds": 14400, "points": 3}]})");
  CHECK(parse_lag_spec(in) == LagSpec({{1800, 3}, {14400, 3}}));
}

TEST_CASE("default covariate spec gives 315 columns for 35 covariates") {
  const auto frame = covariate_frame(300, 35, 1);
  const auto m = build_covariate_features(frame, LagSpec::model2_default(), frame.grid().start, frame.grid().time_at(300));
  CHECK(m.cols() == 315);
  CHECK(m.column_names[0] == "C0@-1800");
  CHECK(m.column_names[2] == "C0@-3000");
  CHECK(m.column_names[3] == "C0@-14400");
  CHECK(m.column_names[8] == "C0@-87600");
  CHECK(m.column_names[9] == "C1@-1800");
  CHECK(m.rows() == 300 - 146);
  CHECK(!m.target.has_value());
}

TEST_CASE("single covariate one-step shift") {
  const auto frame = covariate_frame(10, 1, 2);
  const auto m = build_covariate_features(frame, LagSpec({{600, 1}}), frame.grid().start, frame.grid().time_at(10));
  REQUIRE(m.cols() == 1);
  REQUIRE(m.rows() == 9);
  for (std::size_t r = 0; r < m.rows(); ++r) CHECK(m.at(r, 0) == frame.channel("C0").values[r]);
}

TEST_CASE("two covariates, two points: offsets enumerated by hand") {
  const auto frame = covariate_frame(12, 2, 3);
  const auto m = build_covariate_features(frame, LagSpec({{600, 2}}), frame.grid().start, frame.grid().time_at(12));
  CHECK(m.column_names == std::vector<std::string>{"C0@-600", "C0@-1200", "C1@-600", "C1@-1200"});
  CHECK(m.rows() == 10);
}

TEST_CASE("covariate features equal source values at row time minus offset (brute force)") {
  const auto frame = covariate_frame(80, 3, 4, 300);
  const LagSpec spec({{400, 2}, {1500, 3}});
  const Timestamp begin = frame.grid().time_at(10);
  const Timestamp end = frame.grid().time_at(70);
  const auto m = build_covariate_features(frame, spec, begin, end);
  // offsets: round(400/300)=1 -> {1,2}; round(1500/300)=5 -> {5,6,7}
  const std::int64_t offsets[] = {1, 2, 5, 6, 7};
  CHECK(m.cols() == 3 * 5);
  std::size_t expected_rows = 0;
  for (std::size_t i = 0; i < frame.length(); ++i) {
    const Timestamp t = frame.grid().time_at(i);
    if (t >= begin && t < end && i >= 7) ++expected_rows;
  }
  REQUIRE(m.rows() == expected_rows);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const std::size_t i = frame.grid().index_of(m.row_timestamps[r]);
    for (int c = 0; c < 3; ++c) {
      for (int k = 0; k < 5; ++k) {
        const auto src = i - static_cast<std::size_t>(offsets[k]);
        CHECK(m.at(r, static_cast<std::size_t>(c * 5 + k)) == frame.channel("C" + std::to_string(c)).values[src]);
      }
    }
  }
  // History before the row range is used: the first row sits at the range start.
  CHECK(m.row_timestamps.front() == begin);

  const auto again = build_covariate_features(frame, spec, begin, end);
  CHECK(std::memcmp(again.values.data(), m.values.data(), m.values.size() * sizeof(double)) == 0);
}

TEST_CASE("covariate features with no complete rows") {
  const auto frame = covariate_frame(10, 1, 5);
  CHECK_THROWS_AS(build_covariate_features(frame, LagSpec({{6000, 1}}), frame.grid().start, frame.grid().time_at(10)),
                  InsufficientHistoryError);
}

TEST_CASE("feature csv round trip") {
  const auto frame = covariate_frame(20, 2, 6);
  const auto m = build_covariate_features(frame, LagSpec({{600, 2}}), frame.grid().start, frame.grid().time_at(20));
  std::ostringstream out;
  write_feature_csv(out, m);
  std::istringstream in(out.str());
  const auto back = parse_feature_csv(in);
  CHECK(back.column_names == m.column_names);
  CHECK(back.row_timestamps == m.row_timestamps);
  CHECK(std::memcmp(back.values.data(), m.values.data(), m.values.size() * sizeof(double)) == 0);
}
