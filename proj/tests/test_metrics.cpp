#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "pdsim/metrics.hpp"

using namespace pdsim;

TEST_CASE("load balance ratio basics") {
  // two resources, 4 buckets, window of 2 buckets
  std::vector<std::vector<double>> even = {{1, 1, 1, 1}, {1, 1, 1, 1}};
  auto pts = load_balance_ratio(even, 1.0, 2);
  REQUIRE(pts.size() == 2);
  for (const auto& p : pts) {
    CHECK(p.defined);
    CHECK(p.max_avg == doctest::Approx(1.0));
  }

  std::vector<std::vector<double>> skew = {{2, 2}, {0, 0}};
  pts = load_balance_ratio(skew, 1.0, 2);
  REQUIRE(pts.size() == 1);
  CHECK(pts[0].max_avg == doctest::Approx(2.0));

  std::vector<std::vector<double>> idle = {{0, 0}, {0, 0}};
  pts = load_balance_ratio(idle, 1.0, 2);
  REQUIRE(pts.size() == 1);
  CHECK(!pts[0].defined);
}

TEST_CASE("balance ratio >= 1 wherever defined") {
  std::vector<std::vector<double>> series = {
      {5, 0, 3, 1, 7}, {2, 2, 2, 2, 2}, {0, 9, 0, 4, 1}};
  for (const auto& p : load_balance_ratio(series, 0.5, 1))
    if (p.defined) CHECK(p.max_avg >= 1.0);
}

TEST_CASE("max_avg_ratio over samples") {
  std::vector<double> s = {1, 1, 1, 1};
  CHECK(max_avg_ratio(s) == doctest::Approx(1.0));
  s = {3, 1};
  CHECK(max_avg_ratio(s) == doctest::Approx(1.5));
  s = {0, 0};
  CHECK(max_avg_ratio(s) == doctest::Approx(0.0));
}

TEST_CASE("steady state detection") {
  std::vector<std::pair<double, double>> series;
  // constant series: steady once history suffices
  for (int i = 0; i <= 300; ++i) series.emplace_back(i, 2.0);
  CHECK(detect_steady_state(series, 15, 180, 0.05));

  // insufficient history
  series.assign({{0.0, 2.0}, {10.0, 2.0}});
  CHECK(!detect_steady_state(series, 15, 180, 0.05));

  // linear growth above threshold
  series.clear();
  for (int i = 0; i <= 300; ++i) series.emplace_back(i, 1.0 + 0.1 * i);
  CHECK(!detect_steady_state(series, 15, 180, 0.05));
}

TEST_CASE("ramp then plateau transitions false to true exactly once") {
  std::vector<std::pair<double, double>> series;
  for (int i = 0; i <= 600; ++i)
    series.emplace_back(i, i < 200 ? 1.0 + 0.05 * i : 11.0);
  int transitions = 0;
  bool prev = false;
  for (int end = 200; end <= 600; end += 10) {
    std::span<const std::pair<double, double>> view(series.data(), end + 1);
    const bool now = detect_steady_state(view, 15, 180, 0.05);
    if (now && !prev) ++transitions;
    prev = now;
  }
  CHECK(transitions == 1);
  CHECK(prev);
}

TEST_CASE("working set estimate linearity") {
  const double base = working_set(0.1, 100, 50000, 4096);
  CHECK(working_set(0.2, 100, 50000, 4096) == doctest::Approx(2 * base));
  CHECK(base == doctest::Approx(0.1 * 100 * 50000 / 2 * 4096));
}

TEST_CASE("slo check boundaries and violators") {
  std::vector<LatencyRecord> recs(3);
  recs[0].request_id = "a";
  recs[0].ttft = 4.0;  // exactly at limit -> pass
  recs[0].tpot = 0.05;
  recs[1].request_id = "b";
  recs[1].ttft = 4.1;
  recs[2].request_id = "c";
  recs[2].tpot = 0.06;
  const auto r = slo_check(recs, 4.0, 0.05);
  CHECK(!r.pass);
  REQUIRE(r.violators.size() == 2);
  CHECK(r.violators[0] == "b");
  CHECK(r.violators[1] == "c");

  const auto ok = slo_check({recs.data(), 1}, 4.0, 0.05);
  CHECK(ok.pass);
}

TEST_CASE("distribution summary") {
  std::vector<double> v;
  for (int i = 1; i <= 100; ++i) v.push_back(i);
  const auto d = summarize(v);
  CHECK(d.count == 100);
  CHECK(d.mean == doctest::Approx(50.5));
  CHECK(d.p50 == doctest::Approx(50).epsilon(0.03));
  CHECK(d.p99 == doctest::Approx(99).epsilon(0.03));
  CHECK(summarize({}).count == 0);
}

TEST_CASE("ttft decomposition sums exactly") {
  LatencyRecord r;
  r.sched_component = 0.125;
  r.alloc_component = 0.25;
  r.read_component = 0.5;
  r.prefill_component = 1.0;
  r.ttft = r.sched_component + r.alloc_component + r.read_component +
           r.prefill_component;
  CHECK(r.ttft == 1.875);  // exact in binary floating point
}
