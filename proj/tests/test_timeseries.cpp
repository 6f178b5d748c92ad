#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include "telscope/errors.hpp"
#include "telscope/timeseries.hpp"

using namespace telscope;

namespace {

Roles roles_ab() { return Roles{{"a"}, {"b"}}; }

TelemetryFrame frame_of(std::vector<double> target, std::vector<double> covariate, std::int64_t step = 10) {
  const std::size_t n = target.size();
  return TelemetryFrame(Grid{Timestamp{1707955200}, step, n},
                        {Channel{"a", Role::target, std::move(target)}, Channel{"b", Role::covariate, std::move(covariate)}});
}

bool bit_equal(const std::vector<double>& x, const std::vector<double>& y) {
  return x.size() == y.size() && std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("iso8601 parse and format") {
  CHECK(parse_iso8601("2024-02-15T00:00:00Z").seconds == 1707955200);
  CHECK(format_iso8601(Timestamp{1707955200 + 3661}) == "2024-02-15T01:01:01Z");
  CHECK(format_iso8601(parse_iso8601("2024-08-14T23:59:59Z")) == "2024-08-14T23:59:59Z");
  CHECK_THROWS_AS(parse_iso8601("2024-02-30T00:00:00Z"), SchemaError);
  CHECK_THROWS_AS(parse_iso8601("2024-02-15 00:00:00"), SchemaError);
}

TEST_CASE("parse_csv reads a uniform grid") {
  std::istringstream in(
      "timestamp,a,b\n"
      "2024-02-15T00:00:00Z,1.5,2\n"
      "2024-02-15T00:00:10Z,,3\n"
      "2024-02-15T00:00:20Z,4,-1e-3\n");
  const auto frame = parse_csv(in, roles_ab());
  CHECK(frame.grid().step == 10);
  CHECK(frame.length() == 3);
  CHECK(frame.channel("a").role == Role::target);
  CHECK(frame.channel("a").values[0] == 1.5);
  CHECK(is_missing(frame.channel("a").values[1]));
  CHECK(frame.channel("a").values[2] == 4.0);
  CHECK(frame.channel("b").values[2] == -1e-3);
}

TEST_CASE("parse_csv error paths") {
  SUBCASE("non-uniform grid") {
    std::istringstream in(
        "timestamp,a,b\n2024-02-15T00:00:00Z,1,2\n2024-02-15T00:00:10Z,1,2\n2024-02-15T00:00:25Z,1,2\n");
    CHECK_THROWS_AS(parse_csv(in, roles_ab()), GridError);
  }
  SUBCASE("duplicate column") {
    std::istringstream in("timestamp,a,a\n2024-02-15T00:00:00Z,1,2\n2024-02-15T00:00:10Z,1,2\n");
    CHECK_THROWS_AS(parse_csv(in, Roles{{"a"}, {}}), SchemaError);
  }
  SUBCASE("unparseable cell reports row and column") {
    std::istringstream in("timestamp,a,b\n2024-02-15T00:00:00Z,1,2\n2024-02-15T00:00:10Z,1,x7\n");
    try {
      parse_csv(in, roles_ab());
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.row() == 3);
      CHECK(e.column() == 2);
    }
  }
  SUBCASE("role names a missing column") {
    std::istringstream in("timestamp,a\n2024-02-15T00:00:00Z,1\n2024-02-15T00:00:10Z,1\n");
    CHECK_THROWS_AS(parse_csv(in, roles_ab()), SchemaError);
  }
}

TEST_CASE("csv round trip is bit exact") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> dist(0.0, 1e3);
  std::vector<double> a(50), b(50);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = dist(rng);
    b[i] = i % 7 == 0 ? kMissing : dist(rng) * 1e-9;
  }
  a[3] = -0.0;
  const auto frame = frame_of(a, b, 600);
  std::ostringstream out;
  write_csv(out, frame);
  std::istringstream in(out.str());
  const auto back = parse_csv(in, roles_ab());
  CHECK(back.grid() == frame.grid());
  CHECK(bit_equal(back.channel("a").values, a));
  CHECK(bit_equal(back.channel("b").values, b));
}

TEST_CASE("resample_mean") {
  const TimeSeries s("x", Timestamp{0}, 10, {1, 2, 3, 4});
  const auto r = resample_mean(s, 20);
  CHECK(r.step() == 20);
  REQUIRE(r.size() == 2);
  CHECK(r[0] == 1.5);
  CHECK(r[1] == 3.5);

  SUBCASE("identity when step unchanged") {
    const auto same = resample_mean(s, 10);
    CHECK(std::vector<double>(same.values().begin(), same.values().end()) == std::vector<double>{1, 2, 3, 4});
  }
  SUBCASE("missing samples ignored, all-missing bin stays missing") {
    const TimeSeries g("x", Timestamp{0}, 10, {1, kMissing, kMissing, kMissing, 5, 7});
    const auto rg = resample_mean(g, 20);
    CHECK(rg[0] == 1.0);
    CHECK(is_missing(rg[1]));
    CHECK(rg[2] == 6.0);
  }
  SUBCASE("trailing partial bin dropped") { CHECK(resample_mean(TimeSeries("x", Timestamp{0}, 10, {1, 2, 3}), 20).size() == 1); }
  SUBCASE("not a multiple") { CHECK_THROWS_AS(resample_mean(s, 15), ResampleError); }
  SUBCASE("10 s telemetry over the study span to 10 minutes") {
    const TimeSeries big("x", Timestamp{0}, 10, std::vector<double>(1572480, 1.0));
    CHECK(resample_mean(big, 600).size() == 26208);
  }
}

TEST_CASE("resample properties") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> dist(-5, 5);
  for (int trial = 0; trial < 50; ++trial) {
    const int a = 1 + static_cast<int>(rng() % 4);
    const int b = 1 + static_cast<int>(rng() % 4);
    const std::size_t n = static_cast<std::size_t>(a * b) * (1 + rng() % 10);
    std::vector<double> v(n);
    // Dyadic values keep every partial sum exact, so composition is exact too.
    for (auto& x : v) x = std::ldexp(std::round(dist(rng) * 16), -4);
    const TimeSeries s("x", Timestamp{0}, 10, v);
    const auto two_step = resample_mean(resample_mean(s, 10 * a), 10 * a * b);
    const auto one_step = resample_mean(s, 10 * a * b);
    REQUIRE(two_step.size() == one_step.size());
    for (std::size_t i = 0; i < one_step.size(); ++i) CHECK(two_step[i] == doctest::Approx(one_step[i]).epsilon(1e-12));

    double mean_in = 0, mean_out = 0;
    for (double x : v) mean_in += x;
    for (double x : one_step.values()) mean_out += x;
    mean_in /= static_cast<double>(n);
    mean_out /= static_cast<double>(one_step.size());
    CHECK(mean_out == doctest::Approx(mean_in).epsilon(1e-12));
  }
}

TEST_CASE("split_fraction") {
  CHECK(split_point(26064, 0.66) == 17202);
  CHECK(26064 - split_point(26064, 0.66) == 8862);
  CHECK(split_point(10, 0.5) == 5);
  CHECK(split_point(3, 0.66) == 1);

  const auto frame = frame_of({1, 2, 3, 4, 5, 6, 7}, {7, 6, 5, 4, 3, 2, 1});
  const auto [head, tail] = split_fraction(frame, 0.66);
  CHECK(head.length() == 4);
  CHECK(tail.length() == 3);
  CHECK(tail.grid().start == frame.grid().time_at(4));
  std::vector<double> joined = head.channel("a").values;
  joined.insert(joined.end(), tail.channel("a").values.begin(), tail.channel("a").values.end());
  CHECK(bit_equal(joined, frame.channel("a").values));
  CHECK_THROWS_AS(split_fraction(frame, 1.0), ConfigError);
}

TEST_CASE("fill_missing carries forward") {
  auto values = [](const TimeSeries& s) { return std::vector<double>(s.values().begin(), s.values().end()); };
  CHECK(values(fill_missing(TimeSeries("x", Timestamp{0}, 1, {kMissing, 2, kMissing, 4}))) == std::vector<double>{2, 2, 2, 4});
  CHECK(values(fill_missing(TimeSeries("x", Timestamp{0}, 1, {1, 2, 3}))) == std::vector<double>{1, 2, 3});
  CHECK(values(fill_missing(TimeSeries("x", Timestamp{0}, 1, {1, kMissing, kMissing}))) == std::vector<double>{1, 1, 1});
  CHECK_THROWS_AS(fill_missing(TimeSeries("x", Timestamp{0}, 1, {kMissing, kMissing})), EmptySeriesError);
}

TEST_CASE("frame invariants") {
  CHECK_THROWS_AS(TelemetryFrame(Grid{Timestamp{0}, 10, 2}, {Channel{"a", Role::target, {1}}}), GridError);
  CHECK_THROWS_AS(TelemetryFrame(Grid{Timestamp{0}, 10, 1}, {Channel{"a", Role::covariate, {1}}}), SchemaError);
  CHECK_THROWS_AS(TimeSeries("x", Timestamp{0}, 0, {1}), GridError);
}
